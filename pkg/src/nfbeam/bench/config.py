"""Experiment configuration read from a plain ``key = value`` text file.

Blank lines and lines starting with ``#`` or ``;`` are ignored.  Keys (all
optional except ``axis`` and ``grid``)::

    name            run label (default "sweep")
    axis            snr | carrier | distance | angle | antennas
    grid            comma list, or start:stop:step inclusive (e.g. -20:20:5)
                    units: dB, GHz, m, degrees or element count
    schemes         comma list from learned, nf-hier, ff-hier, exhaustive-256,
                    exhaustive-unlimited, matched-filter-bound (default: all)
    n_antennas      64
    carrier_ghz     50
    spacing_m       element spacing; default half a wavelength
    fspl_mode       normalized | paper_fspl
    snr_db          evaluation SNR on non-snr axes (default 10)
    angle_span_deg  -60, 60
    range_span_m    5, 50
    eval_frames     drops per axis point (default 100)
    n_users         users per drop, served user first (default 3)
    seed            base seed (default 0)
    exhaustive_grid angles x ranges of the unlimited grid (default 121x40)
    checkpoint      trained network to use for the learned scheme
    train_frames    drops in the training set (default 500)
    epochs          training epochs (default 200)
    antenna_epochs  epochs per retrained network on the antennas axis (default 50)
    batch_size      256
    lr              0.01
    widths          1, 8, 16
    tanh_head       true
    workers         processes for axis points (default 1)
    output_dir      relative paths resolve against $NFBEAM_OUTPUT_ROOT (default cwd)
"""

from __future__ import annotations

import configparser
import math
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

from ..channel import ArrayGeometry, FsplMode
from ..errors import ConfigurationError

OUTPUT_ROOT_ENV = "NFBEAM_OUTPUT_ROOT"
AXES = ("snr", "carrier", "distance", "angle", "antennas")
SCHEMES = ("learned", "nf-hier", "ff-hier", "exhaustive-256", "exhaustive-unlimited",
           "matched-filter-bound")
AXIS_UNITS = {"snr": "SNR (dB)", "carrier": "carrier (GHz)", "distance": "distance (m)",
              "angle": "angle (deg)", "antennas": "antennas"}


@dataclass(frozen=True)
class ExperimentConfig:
    axis: str
    grid: tuple[float, ...]
    name: str = "sweep"
    schemes: tuple[str, ...] = SCHEMES
    n_antennas: int = 64
    carrier_ghz: float = 50.0
    spacing_m: float | None = None
    fspl_mode: str = FsplMode.NORMALIZED.value
    snr_db: float = 10.0
    angle_span_deg: tuple[float, float] = (-60.0, 60.0)
    range_span_m: tuple[float, float] = (5.0, 50.0)
    eval_frames: int = 100
    n_users: int = 3
    seed: int = 0
    exhaustive_grid: tuple[int, int] = (121, 40)
    checkpoint: str | None = None
    train_frames: int = 500
    epochs: int = 200
    antenna_epochs: int = 50
    batch_size: int = 256
    lr: float = 1e-2
    widths: tuple[int, int, int] = (1, 8, 16)
    tanh_head: bool = True
    workers: int = 1
    output_dir: str = "bench-out"
    source: str | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.axis not in AXES:
            raise ConfigurationError(f"axis must be one of {AXES}, got {self.axis!r}")
        if not self.grid:
            raise ConfigurationError("axis grid is empty")
        if list(self.grid) != sorted(self.grid) or len(set(self.grid)) != len(self.grid):
            raise ConfigurationError("axis grid must be strictly increasing")
        if not self.schemes:
            raise ConfigurationError("no schemes selected")
        bad = [s for s in self.schemes if s not in SCHEMES]
        if bad:
            raise ConfigurationError(f"unknown schemes {bad}; choose from {SCHEMES}")
        if len(set(self.schemes)) != len(self.schemes):
            raise ConfigurationError("duplicate scheme")
        try:
            FsplMode(self.fspl_mode)
        except ValueError:
            raise ConfigurationError(f"unknown fspl_mode {self.fspl_mode!r}") from None
        for key in ("eval_frames", "n_users", "train_frames", "epochs", "antenna_epochs",
                    "batch_size", "workers"):
            if getattr(self, key) < 1:
                raise ConfigurationError(f"{key} must be >= 1")
        lo, hi = self.angle_span_deg
        if not -90 <= lo <= hi <= 90:
            raise ConfigurationError(f"bad angle span {self.angle_span_deg}")
        if not 0 < self.range_span_m[0] <= self.range_span_m[1]:
            raise ConfigurationError(f"bad range span {self.range_span_m}")
        if self.axis == "antennas" and any(int(v) != v or v < 4 or int(v) % 4 for v in self.grid):
            raise ConfigurationError("antenna counts must be multiples of 4")
        if self.axis == "angle" and not all(lo <= v <= hi for v in self.grid):
            raise ConfigurationError("angle grid leaves the angle span")
        if self.axis == "distance" and not all(v > 0 for v in self.grid):
            raise ConfigurationError("distances must be positive")
        if self.axis == "carrier" and not all(v > 0 for v in self.grid):
            raise ConfigurationError("carriers must be positive")

    @property
    def fspl(self) -> FsplMode:
        return FsplMode(self.fspl_mode)

    @property
    def angle_span_rad(self) -> tuple[float, float]:
        return (math.radians(self.angle_span_deg[0]), math.radians(self.angle_span_deg[1]))

    def base_geometry(self) -> ArrayGeometry:
        try:
            return ArrayGeometry(self.n_antennas, self.carrier_ghz * 1e9, self.spacing_m)
        except ValueError as exc:
            raise ConfigurationError(str(exc)) from None

    def output_path(self) -> Path:
        path = Path(self.output_dir)
        if not path.is_absolute():
            path = Path(os.environ.get(OUTPUT_ROOT_ENV, ".")) / path
        return path

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("source")
        return d


def parse_grid(text: str) -> tuple[float, ...]:
    text = text.strip()
    if ":" in text:
        parts = [float(p) for p in text.split(":")]
        if len(parts) != 3 or parts[2] <= 0:
            raise ConfigurationError(f"grid range must be start:stop:step with step > 0, got {text!r}")
        start, stop, step = parts
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        return tuple(round(start + i * step, 12) for i in range(max(count, 0)))
    return tuple(float(v) for v in _split(text))


def _split(text: str) -> list[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigurationError(f"not a boolean: {text!r}")


_CONVERT = {
    "name": str, "axis": lambda s: s.strip().lower(), "grid": parse_grid,
    "schemes": lambda s: tuple(v.lower() for v in _split(s)),
    "n_antennas": int, "carrier_ghz": float, "spacing_m": float,
    "fspl_mode": lambda s: s.strip().lower(), "snr_db": float,
    "angle_span_deg": lambda s: tuple(float(v) for v in _split(s)),
    "range_span_m": lambda s: tuple(float(v) for v in _split(s)),
    "eval_frames": int, "n_users": int, "seed": int,
    "exhaustive_grid": lambda s: tuple(int(v) for v in s.lower().replace(" ", "").split("x")),
    "checkpoint": str, "train_frames": int, "epochs": int, "antenna_epochs": int,
    "batch_size": int, "lr": float, "widths": lambda s: tuple(int(v) for v in _split(s)),
    "tanh_head": _bool, "workers": int, "output_dir": str,
}


def parse_config(text: str, source: str | None = None, **overrides) -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"),
                                       inline_comment_prefixes=("#",))
    parser.optionxform = str
    try:
        parser.read_string("[experiment]\n" + text, source or "<config>")
    except configparser.Error as exc:
        raise ConfigurationError(f"cannot parse config: {exc}") from None
    values = {}
    for key, raw in parser["experiment"].items():
        if key not in _CONVERT:
            raise ConfigurationError(f"unknown config key {key!r}")
        try:
            values[key] = _CONVERT[key](raw)
        except (ValueError, TypeError) as exc:
            raise ConfigurationError(f"bad value for {key}: {raw!r} ({exc})") from None
    values.update(overrides)
    for key in ("axis", "grid"):
        if key not in values:
            raise ConfigurationError(f"missing required key {key!r}")
    for key, size in (("angle_span_deg", 2), ("range_span_m", 2), ("exhaustive_grid", 2), ("widths", 3)):
        if key in values and len(values[key]) != size:
            raise ConfigurationError(f"{key} needs {size} values")
    return ExperimentConfig(source=source, **values)


def load_config(path, **overrides) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, str(path), **overrides)
