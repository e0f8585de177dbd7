"""Acceptance gate: one test per criterion, each recorded for the summary.

Slow criteria share two desk-scale pipeline runs (different ``--threads``).
"""
import json
from pathlib import Path

import mpmath
import numpy as np
import pytest

from wavedl import cli, config, imaging, mdsmap, physics, pipeline
from wavedl import geometry as geo

FIXTURES = Path(__file__).parent / "fixtures"


def procrustes_residual(Z, P):
    Zc, Pc = Z - Z.mean(0), P - P.mean(0)
    U, _, Vt = np.linalg.svd(Pc.T @ Zc)
    return np.linalg.norm(Zc @ (U @ Vt).T - Pc)


def lattice(n):
    return np.array([(i, j) for i in range(n) for j in range(n)], dtype=float)


@pytest.fixture(scope="module")
def full_setup():
    return pipeline.build_setup(config.load_preset("paper-0.8"))


@pytest.fixture(scope="module")
def desk_runs(tmp_path_factory):
    base = tmp_path_factory.mktemp("desk")
    runs = {}
    for threads in (1, 3):
        out = base / f"threads{threads}"
        code = cli.main(["pipeline", "--preset", "desk", "--seed", "7", "--threads", str(threads), "--out", str(out)])
        assert code == 0
        runs[threads] = out
    return runs


def test_c01_green_exactness(criterion):
    # oracle: the closed form in 40-digit arithmetic on the same float inputs
    mpmath.mp.dps = 40
    rng = np.random.default_rng(1)
    x = rng.uniform(-1e4, 1e4, (1000, 2))
    y = rng.uniform(-1e4, 1e4, (1000, 2))
    kappa = rng.uniform(0.5, 2.0, 1000) * 2 * np.pi
    g0 = physics.green_homogeneous(x, y, kappa)
    ref = np.empty(1000, dtype=complex)
    for i in range(1000):
        d = mpmath.sqrt(sum((mpmath.mpf(a) - mpmath.mpf(b)) ** 2 for a, b in zip(x[i], y[i])))
        ref[i] = complex(mpmath.exp(1j * mpmath.mpf(kappa[i]) * d) / (4 * mpmath.pi * d))
    rel = np.max(np.abs(g0 - ref) / np.abs(ref))
    spec = physics.MediumSpec(sigma_tilde=0.8, seed=2)
    g = physics.green_random(physics.build_random_field(spec), spec, x, y, kappa)
    mod = np.max(np.abs(np.abs(g) - np.abs(g0)) / np.abs(g0))
    ok = criterion(1, rel < 1e-12 and mod < 1e-12, f"max rel error {rel:.1e}, modulus error {mod:.1e}")
    assert ok


def test_c02_phase_statistics(criterion):
    spec = physics.MediumSpec(sigma_tilde=0.8, ell=100.0, L_ref=1e4)
    rng = np.random.default_rng(0)
    kappa, L, n = 2 * np.pi, 1e4, 10_000
    phases = np.empty(n)
    for k in range(n):
        field = physics.build_random_field(physics.MediumSpec(sigma_tilde=0.8, seed=k))
        x = rng.uniform(-L, L, 2)
        theta = rng.uniform(0, 2 * np.pi)
        phases[k] = physics.travel_time_phase(field, spec, x, x + L * np.array([np.cos(theta), np.sin(theta)]), kappa)
    ratio = phases.var() / physics.long_ray_phase_variance(spec, L, kappa)
    ok = criterion(2, abs(ratio - 1) <= 0.1, f"MC / analytic variance = {ratio:.4f}")
    assert ok


@pytest.mark.slow
def test_c03_coherence_and_rank(criterion, full_setup):
    s = full_setup
    nus, ranks = [], []
    for seed in range(5):
        spec = physics.MediumSpec(ell=100.0, sigma_tilde=0.8, L_ref=1e4, seed=seed)
        G = geo.assemble_sensing_matrix(physics.build_random_field(spec), spec, s.array, s.grid, s.freqs)
        nus.append(geo.coherence(G))
        ranks.append(geo.numerical_rank(G))
    ok = all(0.55 <= v <= 0.85 for v in nus) and all(150 <= r <= 300 for r in ranks)
    criterion(3, ok, f"nu {min(nus):.3f}..{max(nus):.3f}, rank {min(ranks)}..{max(ranks)}")
    assert ok


def test_c04_mds_exactness(criterion):
    P = lattice(20)
    Z, _ = mdsmap.classical_mds(np.sum((P[:, None] - P[None]) ** 2, axis=-1), 2)
    res = procrustes_residual(Z, P)
    ok = criterion(4, res < 1e-8, f"Procrustes residual {res:.1e}")
    assert ok


def test_c05_lattice_spectrum(criterion):
    n = 20
    A = (np.abs(lattice(n)[:, None] - lattice(n)[None]).sum(-1) == 1).astype(int)
    hops = mdsmap.geodesic_distances(A).hops
    _, spec = mdsmap.classical_mds(hops ** 2, 2)
    share = spec[:2].sum() / spec.sum()
    count = int(np.count_nonzero(spec > 0.1 * spec[0]))
    frozen = json.loads((FIXTURES / "lattice_spectrum.json").read_text())
    # the package reproduces the independent oracle run
    assert np.allclose(spec[:6] / spec[0], frozen["top_normalized"], atol=1e-10)
    assert share == pytest.approx(frozen["top2_share"], abs=1e-10)
    assert count == frozen["count_above_0.1"]
    ok = share >= 0.9 and count == 2
    criterion(5, ok, f"top-2 share {share:.3f} (need 0.9), {count} values above 0.1 l1 (need 2), l3/l1 {spec[2] / spec[0]:.3f}")
    assert ok, "thresholds unattainable on the ideal lattice; see the frozen oracle fixture"


def test_c06_mds_map_ideal_connectivity(criterion, full_setup):
    s = full_setup
    G0 = geo.assemble_sensing_matrix(None, None, s.array, s.grid, s.freqs)
    emb = mdsmap.mds_map(geo.restrict_to_subarray(G0, s.array, s.freqs, s.sub_aperture), 2)
    truth = pipeline.lattice_points(s.grid)
    anchors = [(s.grid.index(*a), truth[s.grid.index(*a)]) for a in pipeline.default_anchors(20, 20)]
    aligned = mdsmap.anchor_align(emb.Z_hat, anchors, reference_points=truth).aligned
    err = np.linalg.norm(aligned - truth, axis=1)
    central = np.all((truth >= 5) & (truth < 15), axis=1)
    ok = criterion(6, err[central].mean() < 0.5, f"central 10x10 mean error {err[central].mean():.3f} spacings (all points {err.mean():.3f})")
    assert ok


@pytest.mark.slow
def test_c07_desk_learning(criterion, desk_runs):
    s = json.loads((desk_runs[1] / "summary.json").read_text())["learn"]
    cfg = config.load_config(desk_runs[1] / "config.toml")
    ok = s["fraction_cmax_above_0.95"] >= 0.9 and s["alternations"] <= 50 and cfg.dictlearn.init == "data"
    criterion(7, ok, f"{100 * s['fraction_cmax_above_0.95']:.0f}% of columns with C_max > 0.95 after {s['alternations']} alternations")
    assert ok


@pytest.mark.slow
def test_c08_desk_end_to_end(criterion, desk_runs):
    s = json.loads((desk_runs[1] / "summary.json").read_text())
    loc, img = s["localize"]["localized_fraction"], s["image"]
    ok = loc >= 0.8 and img["peak_correct_learned"] >= 0.8 and img["peak_correct_homogeneous"] < 0.5
    criterion(8, ok, f"localized {loc:.2f}, learned peaks {img['peak_correct_learned']:.2f}, "
                     f"homogeneous peaks {img['peak_correct_homogeneous']:.2f}")
    assert ok


@pytest.mark.slow
def test_c09_time_reversal(criterion, full_setup):
    s = full_setup
    field = physics.build_random_field(s.spec)
    G = geo.assemble_sensing_matrix(field, s.spec, s.array, s.grid, s.freqs)
    G0 = geo.assemble_sensing_matrix(None, None, s.array, s.grid, s.freqs)
    gg = imaging.diagonal_argmax_fraction(imaging.crosscorrelation_matrix(G, G))
    gg0 = imaging.diagonal_argmax_fraction(imaging.crosscorrelation_matrix(G, G0))
    frozen = json.loads((FIXTURES / "time_reversal.json").read_text())["by_seed"][str(s.spec.seed)]
    assert gg == frozen["GG"] and gg0 == frozen["GG0"]
    ok = criterion(9, gg >= 0.9 and gg0 <= 0.3, f"G*G {gg:.3f}, G*G0 {gg0:.3f} at sigma 0.8")
    assert ok


@pytest.mark.slow
def test_c10_determinism(criterion, desk_runs):
    a = pipeline.RunManifest.read(desk_runs[1] / "manifest.json").files
    b = pipeline.RunManifest.read(desk_runs[3] / "manifest.json").files
    differ = sorted(k for k in a.keys() | b.keys() if a.get(k) != b.get(k))
    ok = criterion(10, not differ and len(a) > 0, f"{len(a)} artifacts, differing: {differ or 'none'}")
    assert ok
