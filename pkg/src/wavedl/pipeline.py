"""End-to-end experiment: simulate, learn, localize, image, report.

Every stage reads its inputs from the output directory (or from memory when
stages run back to back) and writes its artifacts there, so any stage can be
re-run on its own. Positions in the localization stage are expressed in
lattice units (grid index along cross-range and range), which makes the
grid spacing 1 in both directions.
"""
from __future__ import annotations

import hashlib
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import datagen, dictlearn, geometry, imaging, mdsmap, physics
from ._rng import derive_rng
from .config import ExperimentConfig, dump_config
from .errors import ParameterError
from .matrixio import read_matrix, write_csv, write_matrix

log = logging.getLogger(__name__)

STAGES = ("simulate", "learn", "localize", "image", "report")
MANIFEST = "manifest.json"


class StageError(RuntimeError):
    """A pipeline stage failed; ``stage`` names it."""

    def __init__(self, stage, cause):
        super().__init__(f"stage {stage!r} failed: {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class RunManifest:
    config_hash: str
    seed: int
    timings: dict = field(default_factory=dict)
    files: dict = field(default_factory=dict)  # name -> sha256
    status: str = "ok"
    failed_stage: str | None = None
    error: str | None = None

    def to_json(self):
        return json.dumps(self.__dict__, indent=2, sort_keys=True)

    @classmethod
    def read(cls, path):
        return cls(**json.loads(Path(path).read_text()))


@dataclass
class Setup:
    """Physical objects built from a configuration (lengths in wavelengths)."""

    spec: physics.MediumSpec
    array: geometry.ArrayGeometry
    freqs: geometry.FrequencySet
    grid: geometry.ImageGrid
    sub_fraction: float = 0.5

    @property
    def sub_aperture(self):
        return self.array.aperture * self.sub_fraction


def build_setup(cfg: ExperimentConfig) -> Setup:
    m, a, f, g = cfg.medium, cfg.array, cfg.frequencies, cfg.grid
    ell = m.ell_over_lambda
    L = ell * m.L_over_ell
    spec = physics.MediumSpec(ell=ell, sigma_tilde=m.sigma_tilde, L_ref=L, seed=cfg.seed)
    array = geometry.ArrayGeometry(a.aperture_over_ell * ell, a.n_receivers)
    lo, hi = f.band
    freqs = geometry.FrequencySet(hi, f.n_frequencies, low_fraction=lo / hi)
    grid = geometry.ImageGrid.from_resolution(
        g.n_cross, g.n_range, 1.0, L, array.aperture, 1.0, freqs.bandwidth,
        cross_factor=g.cross_spacing_factor, range_factor=g.range_spacing_factor,
    )
    return Setup(spec, array, freqs, grid, a.sub_aperture_fraction)


def default_anchors(n_cross, n_range):
    """Three non-collinear interior lattice points, away from the bent edges."""
    c1, c3 = round((n_cross - 1) / 4), round(3 * (n_cross - 1) / 4)
    r1, r3 = round((n_range - 1) / 4), round(3 * (n_range - 1) / 4)
    return ((c1, r1), (c3, r1), (c1, r3))


def lattice_points(grid):
    return grid.lattice(np.arange(grid.size)).astype(float)


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


class Workspace:
    """Artifact store backed by an output directory."""

    def __init__(self, out):
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        self._cache = {}
        self.written = []
        self.timings = {}

    def path(self, name):
        return self.out / name

    def save(self, name, m):
        write_matrix(self.path(name + ".wdl"), m)
        self._cache[name] = np.asarray(m)
        self._note(name + ".wdl")

    def load(self, name):
        if name not in self._cache:
            p = self.path(name + ".wdl")
            if not p.exists():
                raise FileNotFoundError(f"missing artifact {p}; run the stage that produces it first")
            self._cache[name] = read_matrix(p)
        return self._cache[name]

    def csv(self, name, m):
        write_csv(self.path(name), m)
        self._note(name)

    def json(self, name, obj):
        self.path(name).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
        self._note(name)

    def read_json(self, name):
        return json.loads(self.path(name).read_text())

    def text(self, name, s):
        self.path(name).write_text(s)
        self._note(name)

    def _note(self, name):
        if name not in self.written:
            self.written.append(name)


# -- stages -----------------------------------------------------------------

def stage_simulate(cfg, ws, setup, workers=1):
    """True sensing matrix, homogeneous reference and the data ensemble."""
    field = physics.build_random_field(setup.spec, n_modes=cfg.medium.n_modes)
    G = geometry.assemble_sensing_matrix(field, setup.spec, setup.array, setup.grid, setup.freqs,
                                         workers=workers)
    G0 = geometry.assemble_sensing_matrix(None, None, setup.array, setup.grid, setup.freqs,
                                          workers=workers)
    d = cfg.data
    M = d.n_samples or datagen.default_sample_count(cfg.K)
    src = datagen.SparseSourceConfig(d.sparsity, tuple(d.amplitude_range))
    X = datagen.draw_sparse_sources(src, cfg.K, M, cfg.seed)
    Y = datagen.synthesize(G, X).Y
    if d.noise > 0:
        Y = datagen.add_noise(Y, d.noise, cfg.seed)
    ws.save("G_true", G)
    ws.save("G0", G0)
    ws.save("X_true", X)
    ws.save("Y", Y)
    return {
        "N": int(G.shape[0]),
        "K": int(G.shape[1]),
        "M": int(M),
        "coherence": geometry.coherence(G),
        "rank": geometry.numerical_rank(G),
    }


def stage_learn(cfg, ws, setup):
    Y = ws.load("Y")
    dc = cfg.dictlearn
    params = dictlearn.L1SolverParams(tau=dc.tau or None, max_iters=dc.max_iters, tol=dc.tol)
    if dc.init == "oracle":
        init = dictlearn.perturbed_init(ws.load("G_true"), dc.oracle_perturbation, cfg.seed)
    else:
        init = "data"
    res = dictlearn.learn(
        Y, cfg.K, params, init=init, max_alternations=dc.max_alternations, obj_tol=dc.obj_tol,
        seed=cfg.seed, sparsity=cfg.data.sparsity if dc.project_sparsity else None,
        maintain=dc.maintain_atoms,
    )
    ws.save("D_hat", res.D_hat)
    report = dictlearn.score_recovery(res.D_hat, ws.load("G_true"))
    ws.csv("fig5_cmax.csv", report.c_max)
    ws.csv("fig5_cmax_sorted.csv", np.sort(report.c_max)[::-1])
    # wall-clock entries would make the file differ between identical runs
    steady = [{k: v for k, v in d.items() if not k.endswith("_seconds")} for d in res.diagnostics]
    ws.timings["learn_alternations"] = [
        {k: v for k, v in d.items() if k.endswith("_seconds")} for d in res.diagnostics
    ]
    ws.json("learn_diagnostics.json", {"history": res.history, "alternations": steady})
    return {
        "alternations": res.iterations_run,
        "final_objective": res.history[-1],
        "fraction_cmax_above_0.95": report.fraction_above(0.95),
        "mean_cmax": float(report.c_max.mean()),
        "matched_bijection": report.is_bijection,
    }


def identify_anchors(D_hat, G_true, grid, anchors):
    """Learned column matching each anchor grid point best (stands in for external anchor estimates)."""
    C = geometry.correlation_matrix(D_hat, G_true)
    out = []
    for ic, ir in anchors:
        k = int(grid.index(ic, ir))
        out.append((int(np.argmax(C[:, k])), (float(ic), float(ir))))
    if len({i for i, _ in out}) < len(out):
        raise ParameterError("two anchors matched the same learned column")
    return out


def stage_localize(cfg, ws, setup):
    D_hat = ws.load("D_hat")
    G = ws.load("G_true")
    grid = setup.grid
    sub = geometry.restrict_to_subarray(D_hat, setup.array, setup.freqs, setup.sub_aperture)
    mc = cfg.mdsmap
    emb = mdsmap.mds_map(sub, mc.r, squared=mc.squared)
    anchors_lattice = mc.anchors or default_anchors(grid.n_cross, grid.n_range)
    anchors = identify_anchors(D_hat, G, grid, anchors_lattice)
    truth = lattice_points(grid)
    aligned = mdsmap.anchor_align(emb.Z_hat, anchors, reference_points=truth)
    assignment, displacement = mdsmap.assign_to_grid(aligned.aligned, truth)

    # order the estimate: grid point assignment[i] gets learned column i
    G_ordered = np.empty_like(D_hat)
    G_ordered[:, assignment] = D_hat
    ws.save("G_ordered", G_ordered)
    ws.save("assignment", assignment.astype(float)[:, None])

    matched = dictlearn.score_recovery(D_hat, G).permutation
    correct = assignment == matched
    err = np.linalg.norm(aligned.aligned - truth[matched], axis=1)

    ws.csv("fig4_spectrum_geodesic.csv", imaging.embedding_spectrum_report(emb.spectrum))
    D2 = np.sum((truth[:, None] - truth[None]) ** 2, axis=-1)
    _, spec_e = mdsmap.classical_mds(D2, mc.r)
    ws.csv("fig4_spectrum_euclidean.csv", imaging.embedding_spectrum_report(spec_e))
    ws.csv("fig6_embedding.csv", emb.Z_hat)
    ws.csv("fig6_adjacency.csv", emb.graph.adjacency)
    ws.csv("fig7_positions.csv", np.column_stack([truth[matched], aligned.aligned]))
    ws.json("anchors.json", [{"column": i, "lattice": list(p)} for i, p in anchors])
    return {
        "anchors": [list(a) for a in anchors_lattice],
        "reflected": bool(aligned.transform.reflected),
        "anchor_residual": aligned.transform.residual,
        "localized_fraction": float(np.mean(correct)),
        "within_one_spacing": float(np.mean(err < 1.0)),
        "mean_position_error": float(err.mean()),
        "spectrum_top2_share": float(emb.spectrum[:2].sum() / emb.spectrum.sum()),
    }


def draw_test_sources(cfg):
    rng = derive_rng(cfg.seed, "test-sources")
    n = min(cfg.imaging.n_test_sources, cfg.K)
    return np.sort(rng.choice(cfg.K, size=n, replace=False))


def stage_image(cfg, ws, setup):
    G = ws.load("G_true")
    G0 = ws.load("G0")
    Gh = ws.load("G_ordered")
    shape = setup.grid.shape
    js = draw_test_sources(cfg)
    peaks = np.empty((len(js), 4), dtype=int)
    for row, j in enumerate(js):
        y = G[:, j]
        imgs = [imaging.form_image(m, y, shape) for m in (G, G0, Gh)]
        peaks[row] = [j] + [im.peak for im in imgs]
        if row == 0:
            for tag, im in zip(("true", "homogeneous", "learned"), imgs):
                ws.csv(f"fig8_image_{tag}.csv", im.as_grid())
    ws.csv("fig8_peaks.csv", peaks)
    hit = peaks[:, 1:] == peaks[:, :1]
    return {
        "test_sources": js.tolist(),
        "peak_correct_true": float(hit[:, 0].mean()),
        "peak_correct_homogeneous": float(hit[:, 1].mean()),
        "peak_correct_learned": float(hit[:, 2].mean()),
    }


def stage_report(cfg, ws, setup):
    """Time-reversal correlation matrices (full aperture)."""
    G = ws.load("G_true")
    G0 = ws.load("G0")
    pairs = {"GG": (G, G), "G0G0": (G0, G0), "GG0": (G, G0)}
    out = {}
    for tag, (A, B) in pairs.items():
        C = imaging.crosscorrelation_matrix(A, B)
        ws.csv(f"fig3_{tag}.csv", C)
        out[f"diagonal_argmax_{tag}"] = imaging.diagonal_argmax_fraction(C)
    return out


_STAGE_FUNCS = {
    "simulate": stage_simulate,
    "learn": stage_learn,
    "localize": stage_localize,
    "image": stage_image,
    "report": stage_report,
}


def run_stages(cfg: ExperimentConfig, out, stages=STAGES, workers=1):
    """Run ``stages`` in order; always writes the manifest, raises :class:`StageError` on failure."""
    cfg.validate()
    for s in stages:
        if s not in _STAGE_FUNCS:
            raise ParameterError(f"unknown stage {s!r}")
    ws = Workspace(out)
    setup = build_setup(cfg)
    ws.text("config.toml", dump_config(cfg))
    manifest = RunManifest(cfg.digest(), cfg.seed)
    summary_path = ws.path("summary.json")
    summary = json.loads(summary_path.read_text()) if summary_path.exists() else {}
    try:
        for s in stages:
            t0 = time.perf_counter()
            log.info("stage %s", s)
            try:
                fn = _STAGE_FUNCS[s]
                kw = {"workers": workers} if s == "simulate" else {}
                summary[s] = fn(cfg, ws, setup, **kw)
            except Exception as exc:
                manifest.status = "failed"
                manifest.failed_stage = s
                manifest.error = f"{type(exc).__name__}: {exc}"
                raise StageError(s, exc) from exc
            finally:
                manifest.timings[s] = time.perf_counter() - t0
    finally:
        manifest.timings.update(ws.timings)
        ws.json("summary.json", summary)
        _write_manifest(ws, manifest)
    return manifest


def _write_manifest(ws, manifest):
    for p in sorted(ws.out.iterdir()):
        if p.is_file() and p.name != MANIFEST:
            manifest.files[p.name] = sha256_file(p)
    ws.path(MANIFEST).write_text(manifest.to_json() + "\n")


def run_pipeline(cfg: ExperimentConfig, out, workers=1) -> RunManifest:
    return run_stages(cfg, out, STAGES, workers=workers)
