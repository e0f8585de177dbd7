import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wavedl import cli, config, pipeline
from wavedl.matrixio import MatrixFormatError, read_csv, read_matrix, write_csv, write_matrix

TINY = """
name = "tiny"
seed = 3
[medium]
sigma_tilde = 0.0
[array]
n_receivers = 40
[frequencies]
n_frequencies = 3
[grid]
n_cross = 6
n_range = 6
range_spacing_factor = 0.6
[data]
sparsity = 2
n_samples = 300
[dictlearn]
max_iters = 500
"""


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    base = tmp_path_factory.mktemp("tiny")
    cfg_path = base / "tiny.toml"
    cfg_path.write_text(TINY)
    out = base / "run"
    assert cli.main(["pipeline", "--config", str(cfg_path), "--out", str(out)]) == 0
    return out


def test_presets_carry_the_reference_constants():
    for name, st_ in (("paper-0.6", 0.6), ("paper-0.8", 0.8)):
        cfg = config.load_preset(name)
        assert cfg.medium.sigma_tilde == st_
        assert cfg.medium.ell_over_lambda == 100 and cfg.medium.L_over_ell == 100
        assert cfg.array.aperture_over_ell == 48 and cfg.array.n_receivers == 145
        assert cfg.frequencies.band == (0.5, 1.0) and cfg.frequencies.n_frequencies == 10
        assert cfg.K == 400 and cfg.data.sparsity == 8
        setup = pipeline.build_setup(cfg)
        assert setup.grid.d_cross == pytest.approx(1e4 / 4800)
        assert setup.sub_aperture == pytest.approx(2400.0)
    desk = config.load_preset("desk")
    assert desk.K == 100 and desk.data.sparsity == 4
    with pytest.raises(config.ConfigError):
        config.load_preset("nope")


def test_config_roundtrip(tmp_path):
    cfg = config.load_preset("desk")
    cfg.mdsmap.anchors = ((1, 1), (8, 1), (1, 8))
    path = tmp_path / "c.toml"
    path.write_text(config.dump_config(cfg))
    again = config.load_config(path)
    assert again == cfg and again.digest() == cfg.digest()


def test_config_errors(tmp_path):
    path = tmp_path / "c.toml"
    path.write_text("[grid]\nn_cross = 4\nn_range = 2\n[data]\nsparsity = 9\n")
    with pytest.raises(config.ConfigError, match="sparsity"):
        config.load_config(path)
    path.write_text("[grid]\nwidth = 3\n")
    with pytest.raises(config.ConfigError, match="width"):
        config.load_config(path)
    path.write_text("[medium]\nsigma_tilde = 'high'\n")
    with pytest.raises(config.ConfigError, match="sigma_tilde"):
        config.load_config(path)
    path.write_text("[medium\n")
    with pytest.raises(config.ConfigError, match="c.toml"):
        config.load_config(path)


def test_invalid_config_fails_before_compute(tmp_path, capsys):
    path = tmp_path / "c.toml"
    path.write_text("[grid]\nn_cross = 2\nn_range = 2\n[data]\nsparsity = 5\n")
    out = tmp_path / "run"
    assert cli.main(["pipeline", "--config", str(path), "--out", str(out)]) == 2
    assert "error [config]" in capsys.readouterr().err
    assert not out.exists()


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.booleans(), st.integers(0, 10_000))
def test_matrix_file_roundtrip(tmp_path_factory, rows, cols, cplx, seed):
    rng = np.random.default_rng(seed)
    m = rng.normal(size=(rows, cols))
    if cplx:
        m = m + 1j * rng.normal(size=(rows, cols))
    path = tmp_path_factory.mktemp("m") / "m.wdl"
    write_matrix(path, m)
    back = read_matrix(path)
    assert back.dtype == m.dtype and np.array_equal(back, m)


def test_matrix_file_errors(tmp_path):
    path = tmp_path / "m.wdl"
    write_matrix(path, np.ones((3, 2)))
    raw = path.read_bytes()
    for bad in (raw[:10], b"XXXXXXXX" + raw[8:], raw[:-1], raw[:8] + b"i4\0\0" + raw[12:]):
        path.write_bytes(bad)
        with pytest.raises(MatrixFormatError):
            read_matrix(path)
    with pytest.raises(ValueError):
        write_matrix(path, np.ones((2, 2, 2)))


def test_csv_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    for m in (rng.normal(size=(4, 3)), rng.normal(size=(4, 3)) + 1j * rng.normal(size=(4, 3))):
        write_csv(tmp_path / "a.csv", m, fmt="%.17g")
        assert np.array_equal(read_csv(tmp_path / "a.csv"), m)
    (tmp_path / "b.csv").write_text("1,2\n3\n")
    with pytest.raises(ValueError):
        read_csv(tmp_path / "b.csv")


def test_tiny_run_learns_every_column(tiny_run):
    cmax = read_csv(tiny_run / "fig5_cmax.csv")[:, 0]
    assert np.mean(cmax >= 0.99) >= 0.95
    summary = json.loads((tiny_run / "summary.json").read_text())
    assert summary["learn"]["matched_bijection"]
    assert summary["report"]["diagonal_argmax_GG"] == 1.0
    assert summary["image"]["peak_correct_true"] == 1.0


def test_manifest_inventory(tiny_run):
    m = pipeline.RunManifest.read(tiny_run / "manifest.json")
    assert m.status == "ok" and m.failed_stage is None
    on_disk = {p.name for p in tiny_run.iterdir()} - {"manifest.json"}
    assert set(m.files) == on_disk
    for name, digest in m.files.items():
        assert pipeline.sha256_file(tiny_run / name) == digest
    assert set(pipeline.STAGES) <= set(m.timings)
    assert m.config_hash == config.load_config(tiny_run / "config.toml").digest()


def test_single_stages_reuse_the_directory(tiny_run, tmp_path):
    out = tmp_path / "copy"
    out.mkdir()
    for name in ("config.toml", "G_true.wdl", "G0.wdl", "D_hat.wdl", "G_ordered.wdl", "assignment.wdl"):
        (out / name).write_bytes((tiny_run / name).read_bytes())
    assert cli.main(["image", "--out", str(out)]) == 0
    a = read_csv(out / "fig8_peaks.csv")
    b = read_csv(tiny_run / "fig8_peaks.csv")
    assert np.array_equal(a, b)


def test_stage_failure_names_the_stage(tmp_path, capsys):
    path = tmp_path / "c.toml"
    path.write_text(TINY)
    out = tmp_path / "run"
    assert cli.main(["learn", "--config", str(path), "--out", str(out)]) == 1
    assert "error [learn]" in capsys.readouterr().err
    m = pipeline.RunManifest.read(out / "manifest.json")
    assert m.status == "failed" and m.failed_stage == "learn"


def test_cli_rejects_bad_threads(capsys):
    assert cli.main(["report", "--preset", "desk", "--threads", "0", "--out", "unused"]) == 2
    with pytest.raises(SystemExit):
        cli.main(["pipeline", "--preset", "desk", "--config", "x.toml"])
