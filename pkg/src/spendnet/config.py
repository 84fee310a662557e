"""Run configuration: defaults, the flat key=value file format and seed derivation."""

from __future__ import annotations

import zlib
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np


class ConfigError(ValueError):
    pass


VARIANT_NAMES = {"ex-cash": "excluding_cash", "inc-cash": "including_cash"}


def parse_k_range(text: str) -> tuple[int, ...]:
    """``"2-20"`` (inclusive) or ``"3,5,15"`` into a sorted tuple of ints."""
    text = str(text).strip()
    try:
        if "-" in text:
            lo, hi = (int(t) for t in text.split("-", 1))
            ks = range(lo, hi + 1)
        else:
            ks = [int(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad k range {text!r}") from exc
    out = tuple(sorted(set(ks)))
    if not out or out[0] < 2:
        raise ConfigError(f"k range {text!r} must be non-empty with k >= 2")
    return out


@dataclass(frozen=True)
class RunConfig:
    input_dir: str = "."
    out_dir: str = "out"
    seed: int = 0
    taxonomy: str | None = None
    # ingestion
    min_months: int = 2
    # classes and consumption
    n_classes: int = 9
    variant: str = "ex-cash"
    # null model
    swap_multiplier: int = 5
    replicas: int = 100
    jobs: int = 1
    # categories
    min_purchases: int = 100
    rho_min: float = 1.5
    min_common: int | None = None
    # demographics
    k_range: tuple[int, ...] = tuple(range(2, 21))
    kmeans_restarts: int = 10
    gap_references: int = 50
    standardize: bool = True
    svg: bool = False
    # generate
    n_egos: int = 10_000
    pareto_shape: float = 2.5
    planted_classes: int = 9
    homophily: float = 0.8
    mean_degree: float = 10.0
    concentration: float = 100.0
    months: int = 12

    def __post_init__(self):
        if self.variant not in VARIANT_NAMES:
            raise ConfigError(f"variant must be one of {sorted(VARIANT_NAMES)}")
        for name in ("n_classes", "swap_multiplier", "replicas", "jobs", "min_months",
                     "min_purchases", "kmeans_restarts", "gap_references"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if not self.rho_min > 0:
            raise ConfigError("rho_min must be positive")
        if self.min_common is not None and self.min_common < 1:
            raise ConfigError("min_common must be >= 1")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")

    @property
    def variant_name(self) -> str:
        return VARIANT_NAMES[self.variant]

    def echo(self) -> dict:
        """Parameters as written to report.json (the output directory is omitted)."""
        d = asdict(self)
        d.pop("out_dir")
        d["k_range"] = list(self.k_range)
        return d

    def stage_seed(self, stage: str) -> int:
        return stage_seed(self.seed, stage)


def stage_seed(master: int, stage: str) -> int:
    """A per-stage seed derived from the master seed and the stage name."""
    ss = np.random.SeedSequence([int(master), zlib.crc32(stage.encode())])
    return int(ss.generate_state(1, np.uint32)[0])


_FIELDS = {f.name: f for f in fields(RunConfig)}
_BOOL = {"1": True, "true": True, "yes": True, "on": True, "0": False, "false": False, "no": False, "off": False}


def coerce(name: str, value):
    """Convert a text value to the type of RunConfig field ``name``."""
    key = name.replace("-", "_")
    if key not in _FIELDS:
        raise ConfigError(f"unknown setting {name!r}")
    default = _FIELDS[key].default
    if not isinstance(value, str):
        return key, value
    text = value.strip()
    if key == "k_range":
        return key, parse_k_range(text)
    if key in ("min_common", "taxonomy") and text.lower() in ("", "auto", "none"):
        return key, None
    try:
        if isinstance(default, bool):
            return key, _BOOL[text.lower()]
        if isinstance(default, int) or key == "min_common":
            return key, int(text)
        if isinstance(default, float):
            return key, float(text)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad value for {name}: {value!r}") from exc
    return key, text


def read_config_file(path: str | Path) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for n, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected key=value")
        k, v = (t.strip() for t in line.split("=", 1))
        key, val = coerce(k, v)
        out[key] = val
    return out


def build_config(file_values: dict | None = None, overrides: dict | None = None) -> RunConfig:
    """Defaults, then config-file values, then explicit overrides (flags win)."""
    merged = dict(file_values or {})
    for k, v in (overrides or {}).items():
        if v is not None:
            merged[k] = v
    try:
        return replace(RunConfig(), **merged)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
