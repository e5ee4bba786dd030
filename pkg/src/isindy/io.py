"""Time-series CSV files, run configuration files and model persistence."""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np


class DataError(ValueError):
    """Unreadable or invalid data file."""


class ConfigError(ValueError):
    """Invalid run configuration; the message names the offending key."""


@dataclass(frozen=True)
class TimeSeries:
    """T x N sample matrix, one row per time step."""

    samples: np.ndarray
    dt: float | None = None
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
            raise DataError(f"time series must be a non-empty T x N matrix, got shape {x.shape}")
        bad = np.argwhere(~np.isfinite(x))
        if bad.size:
            t, n = bad[0]
            raise DataError(f"non-finite value at row {t}, column {n}")
        if self.dt is not None and not self.dt > 0:
            raise DataError(f"dt must be positive, got {self.dt}")
        if self.labels is not None:
            labels = tuple(str(s) for s in self.labels)
            if len(labels) != x.shape[1]:
                raise DataError(f"{len(labels)} labels for {x.shape[1]} columns")
            object.__setattr__(self, "labels", labels)
        x.setflags(write=False)
        object.__setattr__(self, "samples", x)

    @property
    def T(self) -> int:
        return self.samples.shape[0]

    @property
    def N(self) -> int:
        return self.samples.shape[1]

    def columns(self, n: int) -> "TimeSeries":
        """First ``n`` columns."""
        if not 1 <= n <= self.N:
            raise DataError(f"cannot select {n} of {self.N} columns")
        labels = self.labels[:n] if self.labels else None
        return TimeSeries(self.samples[:, :n], self.dt, labels)

    def fingerprint(self) -> str:
        import hashlib

        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.samples).tobytes())
        h.update(str(self.samples.shape).encode())
        return h.hexdigest()[:16]


# --------------------------------------------------------------------------- CSV

def _is_number(tok: str) -> bool:
    try:
        float(tok)
    except ValueError:
        return False
    return True


def read_csv(path) -> TimeSeries:
    """Read a comma-separated series; a non-numeric first row is taken as header."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such data file: {path}")
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()
    lines = [(i + 1, ln) for i, ln in enumerate(lines) if ln.strip()]
    if not lines:
        raise DataError(f"{path}: empty file")
    labels = None
    first = [tok.strip() for tok in lines[0][1].split(",")]
    if not all(_is_number(tok) for tok in first):
        labels = tuple(first)
        lines = lines[1:]
        if not lines:
            raise DataError(f"{path}: header but no data rows")
    width = len(labels) if labels else len(lines[0][1].split(","))
    rows = []
    for lineno, ln in lines:
        toks = ln.split(",")
        if len(toks) != width:
            raise DataError(f"{path}: line {lineno} has {len(toks)} fields, expected {width}")
        row = []
        for col, tok in enumerate(toks):
            try:
                v = float(tok)
            except ValueError:
                raise DataError(f"{path}: line {lineno}, column {col + 1}: cannot parse {tok.strip()!r}") from None
            if not math.isfinite(v):
                raise DataError(f"{path}: line {lineno}, column {col + 1}: non-finite value {tok.strip()!r}")
            row.append(v)
        rows.append(row)
    return TimeSeries(np.array(rows, dtype=float), labels=labels)


def write_csv(series: TimeSeries, path, extra: dict[str, np.ndarray] | None = None) -> None:
    """Write with shortest round-trip float formatting and LF line endings.

    ``extra`` appends named columns (e.g. prediction errors) after the data.
    """
    x = series.samples
    if x.size == 0:
        raise DataError("refusing to write an empty series")
    cols = [x[:, j] for j in range(x.shape[1])]
    names = list(series.labels) if series.labels else None
    if extra:
        names = names or [f"x{j + 1}" for j in range(x.shape[1])]
        for name, col in extra.items():
            col = np.asarray(col, dtype=float)
            if col.shape != (x.shape[0],):
                raise DataError(f"extra column {name!r} has wrong length")
            cols.append(col)
            names.append(name)
    with open(path, "w", newline="\n") as fh:
        if names:
            fh.write(",".join(names) + "\n")
        for row in zip(*cols):
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


# ------------------------------------------------------------------------ config

_ENGINES = ("conventional", "iterative")
_SYSTEMS = ("lorenz", "logistic", "surrogate", "sum_signal")
_SWEEPABLE = ("beta", "S", "N")


@dataclass
class RunConfig:
    """Flat run configuration. Exactly one of ``data`` / ``system`` is set."""

    data: str | None = None
    system: str | None = None
    engine: str = "iterative"
    S: Any = 4
    beta: Any = 0.01
    tau: float = 1e-6
    debias: bool = True
    per_dimension: bool = True
    standardize: bool = True
    max_sweeps: int = 10000
    tol: float = 1e-10
    dictionary_cap: int = 10**6
    N: Any = None
    # generator parameters
    steps: int = 10000
    dt: float = 0.01
    r: float = 3.9
    x0: list | None = None
    snr_db: float = math.inf
    seed: int = 0
    noise: float = 0.01
    columns: int = 36
    # bench
    repetitions: int = 1
    engines: list = field(default_factory=lambda: list(_ENGINES))
    # outputs
    out: str | None = None
    model_out: str = "model.txt"
    report_out: str | None = None
    format: str = "csv"

    def grids(self) -> dict[str, list]:
        """Swept keys mapped to their value lists."""
        return {k: getattr(self, k) for k in _SWEEPABLE if isinstance(getattr(self, k), list)}

    def plan(self) -> list[dict[str, Any]]:
        """One dict of scalar overrides per run of the sweep (cartesian product)."""
        runs = [{}]
        for key, values in self.grids().items():
            runs = [dict(r, **{key: v}) for r in runs for v in values]
        return runs

    def fit_config(self, **overrides):
        from .engine import FitConfig

        vals = dict(S=self.S, beta=self.beta, survivor_tol=self.tau, debias=self.debias,
                    per_dimension=self.per_dimension, standardize=self.standardize,
                    max_sweeps=self.max_sweeps, tol=self.tol, dictionary_cap=self.dictionary_cap)
        vals.update(overrides)
        for key in ("S", "beta"):
            if isinstance(vals[key], list):
                raise ConfigError(f"{key}: a grid was given; pick a single value for a fit")
        return FitConfig(**vals)


_TYPES = {
    "data": "str", "system": "str", "engine": "str", "S": "int|list[int]",
    "beta": "float|list[float]", "tau": "float", "debias": "bool", "per_dimension": "bool",
    "standardize": "bool", "max_sweeps": "int", "tol": "float", "dictionary_cap": "int",
    "N": "int|list[int]", "steps": "int", "dt": "float", "r": "float", "x0": "list[float]",
    "snr_db": "float", "seed": "int", "noise": "float", "columns": "int",
    "repetitions": "int", "engines": "list[str]",
    "out": "str", "model_out": "str", "report_out": "str", "format": "str",
}


def _scalar(key: str, kind: str, text: str):
    text = text.strip()
    try:
        if kind == "int":
            if not re.fullmatch(r"[+-]?\d+", text):
                raise ValueError
            return int(text)
        if kind == "float":
            v = float(text)
            if math.isnan(v):
                raise ValueError
            return v
        if kind == "bool":
            low = text.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError
        return text.strip("\"'")
    except ValueError:
        raise ConfigError(f"{key}: expected {kind}, got {text!r}") from None


def coerce_value(key: str, text: str):
    """Parse ``text`` as the declared type of config key ``key``."""
    if key not in _TYPES:
        raise ConfigError(f"unknown config key {key!r}")
    kinds = _TYPES[key].split("|")
    text = text.strip()
    if text.startswith("["):
        listkind = next((k for k in kinds if k.startswith("list[")), None)
        if listkind is None or not text.endswith("]"):
            raise ConfigError(f"{key}: expected {_TYPES[key]}, got {text!r}")
        inner = listkind[5:-1]
        items = [tok for tok in text[1:-1].split(",") if tok.strip()]
        if not items:
            raise ConfigError(f"{key}: empty list")
        return [_scalar(key, inner, tok) for tok in items]
    scalar = next((k for k in kinds if not k.startswith("list[")), None)
    if scalar is None:
        raise ConfigError(f"{key}: expected a bracketed list, got {text!r}")
    return _scalar(key, scalar, text)


def validate_config(cfg: RunConfig) -> RunConfig:
    if (cfg.data is None) == (cfg.system is None):
        raise ConfigError("data: exactly one of 'data' (CSV path) or 'system' (generator) is required")
    if cfg.system is not None and cfg.system not in _SYSTEMS:
        raise ConfigError(f"system: must be one of {', '.join(_SYSTEMS)}, got {cfg.system!r}")
    if cfg.engine not in _ENGINES:
        raise ConfigError(f"engine: must be one of {', '.join(_ENGINES)}, got {cfg.engine!r}")
    for e in cfg.engines:
        if e not in _ENGINES:
            raise ConfigError(f"engines: unknown engine {e!r}")
    if cfg.format not in ("csv", "jsonl"):
        raise ConfigError(f"format: must be csv or jsonl, got {cfg.format!r}")
    for key in ("S", "N"):
        vals = getattr(cfg, key)
        for v in vals if isinstance(vals, list) else [vals]:
            if v is not None and v < 1:
                raise ConfigError(f"{key}: must be >= 1, got {v}")
    betas = cfg.beta if isinstance(cfg.beta, list) else [cfg.beta]
    if any(b < 0 for b in betas):
        raise ConfigError("beta: must be >= 0")
    if isinstance(cfg.beta, list) and cfg.beta != sorted(cfg.beta):
        raise ConfigError("beta: grid must be sorted ascending")
    if cfg.tau < 0:
        raise ConfigError("tau: must be >= 0")
    if not cfg.dt > 0:
        raise ConfigError(f"dt: must be > 0, got {cfg.dt}")
    if cfg.steps < 1:
        raise ConfigError("steps: must be >= 1")
    if cfg.noise < 0:
        raise ConfigError("noise: must be >= 0")
    if cfg.columns < 1:
        raise ConfigError("columns: must be >= 1")
    if cfg.repetitions < 1:
        raise ConfigError("repetitions: must be >= 1")
    return cfg


def parse_config(text: str, overrides: dict[str, str] | None = None) -> RunConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment. Overrides win."""
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _TYPES:
            raise ConfigError(f"unknown config key {key!r} (line {lineno})")
        if key in raw:
            raise ConfigError(f"{key}: given twice (line {lineno})")
        raw[key] = value
    raw.update(overrides or {})
    values = {key: coerce_value(key, value) for key, value in raw.items()}
    return validate_config(RunConfig(**values))


def load_config(path, overrides: dict[str, str] | None = None) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such config file: {path}")
    return parse_config(path.read_text(), overrides)


def config_items(cfg: RunConfig) -> dict[str, Any]:
    """Plain dict echo of a config, for provenance records."""
    return {f.name: getattr(cfg, f.name) for f in fields(cfg)}


# --------------------------------------------------------------------- models

def save_model(model, path) -> None:
    Path(path).write_text(model.to_text())


def load_model(path):
    from .engine import SparseModel

    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such model file: {path}")
    return SparseModel.from_text(path.read_text())


def save_report(report, path) -> None:
    Path(path).write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
