"""One-time oracle runs whose outputs are frozen next to this script.

Run from the repository root with ``python tests/fixtures/derive_fixtures.py``.
The oracles avoid the package code paths they check: lattice hop distances
are Manhattan distances, and the full-scale matrices are built entry by
entry from the Green's functions rather than by ``assemble_sensing_matrix``.
"""
import json
from pathlib import Path

import numpy as np

from wavedl import config, physics, pipeline

HERE = Path(__file__).parent


def lattice_spectrum(n=20):
    P = np.array([(i, j) for i in range(n) for j in range(n)], dtype=float)
    hops = np.abs(P[:, None] - P[None]).sum(axis=-1)
    K = len(P)
    J = np.eye(K) - np.ones((K, K)) / K
    lam = np.sort(np.linalg.eigvalsh(-0.5 * J @ hops**2 @ J))[::-1]
    pos = np.clip(lam, 0, None)
    return {
        "n": n,
        "top_normalized": (lam[:6] / lam[0]).tolist(),
        "top2_share": float(pos[:2].sum() / pos.sum()),
        "count_above_0.1": int(np.count_nonzero(lam > 0.1 * lam[0])),
        "ratio_3_to_2": float(lam[2] / lam[1]),
    }


def direct_matrix(field, spec, setup):
    rec = setup.array.receivers
    pts = setup.grid.points
    blocks = []
    for kappa in setup.freqs.wavenumbers:
        x = np.repeat(rec[:, None, :], len(pts), axis=1)
        y = np.repeat(pts[None, :, :], len(rec), axis=0)
        if field is None:
            blocks.append(physics.green_homogeneous(x, y, kappa))
        else:
            blocks.append(physics.green_random(field, spec, x, y, kappa))
    return np.vstack(blocks)


def refocusing(A, B):
    A = A / np.linalg.norm(A, axis=0)
    B = B / np.linalg.norm(B, axis=0)
    C = np.abs(A.conj().T @ B)
    return float(np.mean(C.argmax(axis=1) == np.arange(len(C))))


def time_reversal(seeds=(0, 1, 2)):
    out = {}
    cfg = config.load_preset("paper-0.8")
    for seed in seeds:
        cfg.seed = seed
        setup = pipeline.build_setup(cfg)
        field = physics.build_random_field(setup.spec, cfg.medium.n_modes)
        G = direct_matrix(field, setup.spec, setup)
        G0 = direct_matrix(None, None, setup)
        out[str(seed)] = {"GG": refocusing(G, G), "GG0": refocusing(G, G0), "G0G0": refocusing(G0, G0)}
    return {"preset": "paper-0.8", "by_seed": out}


if __name__ == "__main__":
    (HERE / "lattice_spectrum.json").write_text(json.dumps(lattice_spectrum(), indent=2) + "\n")
    (HERE / "time_reversal.json").write_text(json.dumps(time_reversal(), indent=2) + "\n")
