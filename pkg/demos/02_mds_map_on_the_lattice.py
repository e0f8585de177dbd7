# Localization from connectivity alone.
#
# Classical MDS recovers points exactly from Euclidean distances. Here the
# distances are unknown; each Green's function vector only knows its most
# correlated neighbours. Hop counts on that graph stand in for distances.

import numpy as np

from wavedl import config, geometry, imaging, mdsmap, pipeline

setup = pipeline.build_setup(config.load_preset("paper-0.8"))
truth = pipeline.lattice_points(setup.grid)

# Exact squared distances: rank-2 centred matrix.
D2 = np.sum((truth[:, None] - truth[None]) ** 2, axis=-1)
_, spec = mdsmap.classical_mds(D2)
print("Euclidean spectrum:", np.round(imaging.embedding_spectrum_report(spec)[:5], 4))

# Neighbour graph from the homogeneous vectors on the central half aperture,
# where correlations decay smoothly with distance.
G0 = geometry.assemble_sensing_matrix(None, None, setup.array, setup.grid, setup.freqs)
sub = geometry.restrict_to_subarray(G0, setup.array, setup.freqs, setup.sub_aperture)
emb = mdsmap.mds_map(sub, r=2)
print("graph spectrum:    ", np.round(imaging.embedding_spectrum_report(emb.spectrum)[:5], 4))

# Three anchors fix rotation, reflection, scale and translation.
anchors = [(setup.grid.index(*a), truth[setup.grid.index(*a)]) for a in pipeline.default_anchors(20, 20)]
aligned = mdsmap.anchor_align(emb.Z_hat, anchors, reference_points=truth).aligned
err = np.linalg.norm(aligned - truth, axis=1)
central = np.all((truth >= 5) & (truth < 15), axis=1)
print(f"mean error: central block {err[central].mean():.2f}, whole grid {err.mean():.2f} spacings")

# The embedding bends near the edges, but assignment to the grid undoes most of it.
assignment, _ = mdsmap.assign_to_grid(aligned, truth)
print(f"points assigned to their own grid node: {np.mean(assignment == np.arange(len(truth))):.2f}")
