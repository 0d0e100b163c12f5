"""Run configuration: flat key=value text files, validation, bundled presets.

Recognized keys:
  foreground_min, foreground_max   two or three floats (z omitted = derive
                                   from the scene at partition time)
  block_dims                       2 or 3 positive ints
  ssim_threshold                   float in (0, 1)
  n_mad                            positive float, inf disables clipping
  distance_intervals               lo:hi pairs, e.g. "0:200 200:400 400:inf"
  compression_rates                strictly descending floats in (0, 1]
  loss_lambda                      float in [0, 1]
  lod_sh_degrees                   one int in 0..3 per detail level
  dataset                          preset name, explicit keys override it
  enlarge_min_count                positive int
  assignment_scale                 float in (0, 1]
  background                      three floats in [0, 1]

Values may be separated by spaces or commas. Lines starting with '#' are
comments. Intervals must start at 0, be contiguous and ascending, and the
last one must be unbounded.
"""

import math
import os
from dataclasses import dataclass, replace
from typing import Optional, Tuple

from .errors import ConfigError

INF = math.inf


def _intervals(*pairs):
    return tuple((float(a), float(b)) for a, b in pairs)


def validate_intervals(intervals) -> None:
    """Distance intervals must start at 0, ascend contiguously without
    overlap, and end unbounded."""
    iv = tuple((float(a), float(b)) for a, b in intervals)
    if not iv:
        raise ConfigError("at least one distance interval is required")
    if iv[0][0] != 0.0:
        raise ConfigError("the first distance interval must start at 0")
    if iv[-1][1] != INF:
        raise ConfigError("the last distance interval must be unbounded")
    for (lo, hi), (lo2, _) in zip(iv, iv[1:]):
        if hi != lo2:
            raise ConfigError("distance intervals must be contiguous and non-overlapping")
    if any(not lo < hi for lo, hi in iv):
        raise ConfigError("distance intervals must be ascending")


# Aerial-capture presets. Foreground bounds are the central footprint of each
# capture in meters (x, y); the height bound always comes from the scene.
PRESETS = {
    "matrixcity": dict(
        foreground_min=(-350.0, -400.0), foreground_max=(450.0, 200.0),
        block_dims=(6, 6), ssim_threshold=0.05,
        distance_intervals=_intervals((0, 200), (200, 400), (400, INF)),
        compression_rates=(0.5, 0.34, 0.25),
    ),
    "rubble": dict(
        foreground_min=(-50.0, -135.0), foreground_max=(50.0, -5.0),
        block_dims=(3, 3), ssim_threshold=0.12,
        distance_intervals=_intervals((0, 100), (100, 200), (200, INF)),
        compression_rates=(0.6, 0.5, 0.4),
    ),
    "building": dict(
        foreground_min=(-140.0, 0.0), foreground_max=(-10.0, 250.0),
        block_dims=(5, 4), ssim_threshold=0.1,
        distance_intervals=_intervals((0, 100), (100, 200), (200, INF)),
        compression_rates=(0.6, 0.5, 0.4),
    ),
    "residence": dict(
        foreground_min=(-270.0, -25.0), foreground_max=(60.0, 175.0),
        block_dims=(5, 4), ssim_threshold=0.08,
        distance_intervals=_intervals((0, 250), (250, 500), (500, INF)),
        compression_rates=(0.6, 0.5, 0.4),
    ),
    "sciart": dict(
        foreground_min=(-205.0, -110.0), foreground_max=(90.0, 55.0),
        block_dims=(3, 3), ssim_threshold=0.05,
        distance_intervals=_intervals((0, 250), (250, 500), (500, INF)),
        compression_rates=(0.6, 0.5, 0.4),
    ),
}


@dataclass(frozen=True)
class RunConfig:
    """Validated pipeline configuration. Rates, intervals and SH degrees are
    listed finest level first."""

    foreground_min: Tuple[float, ...] = PRESETS["matrixcity"]["foreground_min"]
    foreground_max: Tuple[float, ...] = PRESETS["matrixcity"]["foreground_max"]
    block_dims: Tuple[int, ...] = (6, 6)
    ssim_threshold: float = 0.05
    n_mad: float = 4.0
    distance_intervals: Tuple[Tuple[float, float], ...] = _intervals(
        (0, 200), (200, 400), (400, INF)
    )
    compression_rates: Tuple[float, ...] = (0.5, 0.34, 0.25)
    loss_lambda: float = 0.2
    lod_sh_degrees: Tuple[int, ...] = (3, 2, 1)
    enlarge_min_count: int = 25_000
    assignment_scale: float = 0.25
    background: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    dataset: Optional[str] = None

    def __post_init__(self):
        fmin, fmax = tuple(self.foreground_min), tuple(self.foreground_max)
        object.__setattr__(self, "foreground_min", fmin)
        object.__setattr__(self, "foreground_max", fmax)
        object.__setattr__(self, "block_dims", tuple(int(d) for d in self.block_dims))
        object.__setattr__(
            self, "distance_intervals", tuple((float(a), float(b)) for a, b in self.distance_intervals)
        )
        object.__setattr__(self, "compression_rates", tuple(float(r) for r in self.compression_rates))
        object.__setattr__(self, "lod_sh_degrees", tuple(int(d) for d in self.lod_sh_degrees))
        object.__setattr__(self, "background", tuple(float(v) for v in self.background))
        self._validate()

    def _validate(self):
        fmin, fmax = self.foreground_min, self.foreground_max
        if len(fmin) != len(fmax) or len(fmin) not in (2, 3):
            raise ConfigError("foreground bounds must both have 2 or 3 components")
        if any(not (a < b) for a, b in zip(fmin, fmax)):
            raise ConfigError("foreground_min must be strictly below foreground_max")
        if len(self.block_dims) not in (2, 3) or any(d < 1 for d in self.block_dims):
            raise ConfigError("block_dims needs 2 or 3 entries, all >= 1")
        if not 0.0 < self.ssim_threshold < 1.0:
            raise ConfigError("ssim_threshold must be in (0, 1)")
        if not self.n_mad > 0:
            raise ConfigError("n_mad must be positive")
        iv = self.distance_intervals
        validate_intervals(iv)
        rates = self.compression_rates
        if len(rates) != len(iv):
            raise ConfigError("need exactly one compression rate per distance interval")
        if any(not 0.0 < r <= 1.0 for r in rates):
            raise ConfigError("compression rates must be in (0, 1]")
        if any(a <= b for a, b in zip(rates, rates[1:])):
            raise ConfigError("compression rates must be strictly descending")
        if not 0.0 <= self.loss_lambda <= 1.0:
            raise ConfigError("loss_lambda must be in [0, 1]")
        if len(self.lod_sh_degrees) != len(rates):
            raise ConfigError("need one SH degree per detail level")
        if any(d not in (0, 1, 2, 3) for d in self.lod_sh_degrees):
            raise ConfigError("lod_sh_degrees entries must be 0..3")
        if self.enlarge_min_count < 1:
            raise ConfigError("enlarge_min_count must be positive")
        if not 0.0 < self.assignment_scale <= 1.0:
            raise ConfigError("assignment_scale must be in (0, 1]")
        if any(not 0.0 <= v <= 1.0 for v in self.background):
            raise ConfigError("background channels must be in [0, 1]")

    @property
    def n_levels(self) -> int:
        return len(self.compression_rates)


def preset(name: str) -> RunConfig:
    try:
        values = PRESETS[name.lower()]
    except KeyError:
        raise ConfigError(f"unknown dataset preset '{name}' (have: {', '.join(sorted(PRESETS))})")
    return RunConfig(dataset=name.lower(), **values)


def default_config() -> RunConfig:
    return RunConfig()


def _split(value: str):
    return [t for t in value.replace(",", " ").split() if t]


def _parse_float(key, tok):
    try:
        v = float(tok)
    except ValueError:
        raise ConfigError(f"{key}: '{tok}' is not a number")
    return v


def _parse_interval(key, tok):
    if ":" not in tok:
        raise ConfigError(f"{key}: expected lo:hi pairs, got '{tok}'")
    lo, hi = tok.split(":", 1)
    hi_v = INF if hi.lower() in ("inf", "infinity") else _parse_float(key, hi)
    return (_parse_float(key, lo), hi_v)


_VECTOR_KEYS = {
    "foreground_min": lambda k, toks: tuple(_parse_float(k, t) for t in toks),
    "foreground_max": lambda k, toks: tuple(_parse_float(k, t) for t in toks),
    "block_dims": lambda k, toks: tuple(int(t) for t in toks),
    "distance_intervals": lambda k, toks: tuple(_parse_interval(k, t) for t in toks),
    "compression_rates": lambda k, toks: tuple(_parse_float(k, t) for t in toks),
    "lod_sh_degrees": lambda k, toks: tuple(int(t) for t in toks),
    "background": lambda k, toks: tuple(_parse_float(k, t) for t in toks),
}
_SCALAR_KEYS = {
    "ssim_threshold": float,
    "n_mad": lambda t: INF if t.lower() in ("inf", "infinity") else float(t),
    "loss_lambda": float,
    "enlarge_min_count": int,
    "assignment_scale": float,
}


def parse_config_text(text: str) -> RunConfig:
    values = {}
    dataset = None
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key == "dataset":
            dataset = value.lower()
        elif key in _VECTOR_KEYS:
            values[key] = _VECTOR_KEYS[key](key, _split(value))
        elif key in _SCALAR_KEYS:
            try:
                values[key] = _SCALAR_KEYS[key](value)
            except ValueError:
                raise ConfigError(f"{key}: bad value '{value}'")
        else:
            raise ConfigError(f"line {lineno}: unknown key '{key}'")
    base = preset(dataset) if dataset else RunConfig()
    return replace(base, **values)


def load_config(path) -> RunConfig:
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path) as f:
        return parse_config_text(f.read())
