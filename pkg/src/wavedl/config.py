"""Experiment configuration (TOML) and shipped presets.

Physical lengths are given as the ratios used to describe the experiment:
correlation length over wavelength, propagation distance over correlation
length, aperture over correlation length. Internally every length is in
wavelengths.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ParameterError

PRESETS = ("paper-0.6", "paper-0.8", "desk")


class ConfigError(ValueError):
    """Malformed or invalid configuration file."""


@dataclass
class MediumConfig:
    sigma_tilde: float = 0.8
    ell_over_lambda: float = 100.0
    L_over_ell: float = 100.0
    n_modes: int = 512


@dataclass
class ArrayConfig:
    aperture_over_ell: float = 48.0
    n_receivers: int = 145
    sub_aperture_fraction: float = 0.5


@dataclass
class FrequencyConfig:
    band: tuple = (0.5, 1.0)
    n_frequencies: int = 10


@dataclass
class GridConfig:
    n_cross: int = 20
    n_range: int = 20
    cross_spacing_factor: float = 1.0
    range_spacing_factor: float = 0.4


@dataclass
class DataConfig:
    sparsity: int = 8
    n_samples: int = 0
    amplitude_range: tuple = (1.0, 2.0)
    noise: float = 0.0


@dataclass
class DictLearnConfig:
    init: str = "data"
    oracle_perturbation: float = 0.2
    max_alternations: int = 50
    obj_tol: float = 1e-5
    max_iters: int = 2000
    tol: float = 1e-4
    tau: float = 0.0
    project_sparsity: bool = True
    maintain_atoms: bool = True


@dataclass
class MdsMapConfig:
    r: int = 2
    anchors: tuple = ()
    squared: bool = True


@dataclass
class ImagingConfig:
    n_test_sources: int = 20


@dataclass
class ExperimentConfig:
    medium: MediumConfig = field(default_factory=MediumConfig)
    array: ArrayConfig = field(default_factory=ArrayConfig)
    frequencies: FrequencyConfig = field(default_factory=FrequencyConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    data: DataConfig = field(default_factory=DataConfig)
    dictlearn: DictLearnConfig = field(default_factory=DictLearnConfig)
    mdsmap: MdsMapConfig = field(default_factory=MdsMapConfig)
    imaging: ImagingConfig = field(default_factory=ImagingConfig)
    seed: int = 0
    name: str = "experiment"

    @property
    def K(self) -> int:
        return self.grid.n_cross * self.grid.n_range

    def validate(self):
        m, a, f, g, d = self.medium, self.array, self.frequencies, self.grid, self.data
        positive = {
            "medium.ell_over_lambda": m.ell_over_lambda,
            "medium.L_over_ell": m.L_over_ell,
            "array.aperture_over_ell": a.aperture_over_ell,
            "grid.cross_spacing_factor": g.cross_spacing_factor,
            "grid.range_spacing_factor": g.range_spacing_factor,
        }
        for key, value in positive.items():
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise ParameterError(f"{key} must be positive, got {value!r}")
        if m.sigma_tilde < 0:
            raise ParameterError("medium.sigma_tilde must be nonnegative")
        if not 0 < a.sub_aperture_fraction <= 1:
            raise ParameterError("array.sub_aperture_fraction must lie in (0, 1]")
        lo, hi = f.band
        if not 0 < lo < hi:
            raise ParameterError(f"frequencies.band must satisfy 0 < lo < hi, got {f.band!r}")
        if a.n_receivers < 2 or f.n_frequencies < 1 or g.n_cross < 1 or g.n_range < 1:
            raise ParameterError("array, frequency and grid counts must be positive")
        if not 1 <= d.sparsity <= self.K:
            raise ParameterError(f"data.sparsity={d.sparsity} must lie in [1, K={self.K}]")
        if d.n_samples < 0:
            raise ParameterError("data.n_samples must be nonnegative (0 selects the default)")
        if self.dictlearn.init not in ("data", "oracle"):
            raise ParameterError(f"dictlearn.init must be 'data' or 'oracle', got {self.dictlearn.init!r}")
        if self.K <= 2 * self.mdsmap.r:
            raise ParameterError("grid too small for the 2r-neighbour graph")
        for anchor in self.mdsmap.anchors:
            ic, ir = anchor
            if not (0 <= ic < g.n_cross and 0 <= ir < g.n_range):
                raise ParameterError(f"anchor {anchor!r} lies outside the grid")
        if self.seed < 0:
            raise ParameterError("seed must be nonnegative")
        return self

    def to_dict(self):
        return dataclasses.asdict(self)

    def digest(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, default=list).encode()
        return hashlib.sha256(blob).hexdigest()


_SECTIONS = {
    "medium": MediumConfig,
    "array": ArrayConfig,
    "frequencies": FrequencyConfig,
    "grid": GridConfig,
    "data": DataConfig,
    "dictlearn": DictLearnConfig,
    "mdsmap": MdsMapConfig,
    "imaging": ImagingConfig,
}
_TOP_LEVEL = {"seed", "name"}


def _coerce(value, default, where):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
        return value
    if isinstance(default, tuple):
        if not isinstance(value, list):
            raise ConfigError(f"{where}: expected an array, got {value!r}")
        return tuple(tuple(v) if isinstance(v, list) else v for v in value)
    return value


def config_from_dict(raw, source="<dict>"):
    cfg = ExperimentConfig()
    for key, value in raw.items():
        if key in _TOP_LEVEL:
            setattr(cfg, key, _coerce(value, getattr(cfg, key), f"{source}: {key}"))
            continue
        if key not in _SECTIONS:
            raise ConfigError(f"{source}: unknown key {key!r}")
        if not isinstance(value, dict):
            raise ConfigError(f"{source}: [{key}] must be a table")
        section = getattr(cfg, key)
        names = {f.name for f in dataclasses.fields(section)}
        for sub, subval in value.items():
            if sub not in names:
                raise ConfigError(f"{source}: unknown key {key}.{sub!r}")
            where = f"{source}: {key}.{sub}"
            setattr(section, sub, _coerce(subval, getattr(section, sub), where))
    try:
        return cfg.validate()
    except ParameterError as exc:
        raise ConfigError(f"{source}: {exc}") from exc


def load_config(path):
    """Parse a TOML experiment file; errors name the file and the offending key or line."""
    path = Path(path)
    try:
        raw = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return config_from_dict(raw, str(path))


def load_preset(name):
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    text = resources.files("wavedl").joinpath("presets", f"{name}.toml").read_text()
    return config_from_dict(tomllib.loads(text), f"preset {name}")


def dump_config(cfg):
    """TOML text for ``cfg`` (round-trips through :func:`load_config`)."""
    def fmt(v):
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, str):
            return json.dumps(v)
        if isinstance(v, (tuple, list)):
            return "[" + ", ".join(fmt(x) for x in v) + "]"
        return repr(v)

    lines = [f"name = {fmt(cfg.name)}", f"seed = {cfg.seed}", ""]
    for sec in _SECTIONS:
        lines.append(f"[{sec}]")
        for f in dataclasses.fields(getattr(cfg, sec)):
            lines.append(f"{f.name} = {fmt(getattr(getattr(cfg, sec), f.name))}")
        lines.append("")
    return "\n".join(lines)
