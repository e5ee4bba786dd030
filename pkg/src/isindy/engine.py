"""Identification engines: conventional and iterative sparse regression.

Both engines fit the discrete-time flow map ``x(t+1) = F(x(t))``: targets are
samples ``1..T`` and features are evaluated on samples ``0..T-1``.

Degree convention: the conventional dictionary for depth ``S`` is every
monomial of degree ``<= S + 1``. The iterative engine starts from
``{1, x1, ..., xN}`` and performs up to ``S`` expansions, so
both engines can reach the same maximal degree.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .dictionary import (
    DEFAULT_CAP,
    DimensionError,
    Dictionary,
    default_names,
    evaluate_array,
    expand,
    full_dictionary,
    parse_dictionary_lines,
    unity_set,
)
from .io import TimeSeries
from .solver import LassoOptions, lasso, least_squares_pinv

log = logging.getLogger(__name__)

MODEL_MAGIC = "isindy-model 1"


class ModelFormatError(ValueError):
    """Malformed model file; the message carries the line number."""


@dataclass(frozen=True)
class FitConfig:
    """Engine settings.

    ``S`` is the expansion depth, ``beta`` the Lasso weight and
    ``survivor_tol`` the strict magnitude threshold a coefficient must exceed
    to survive. ``stop_early=False`` disables the stopping rule so that all
    ``S`` expansions run.
    """

    S: int = 4
    beta: float = 0.01
    survivor_tol: float = 1e-6
    debias: bool = True
    per_dimension: bool = True
    standardize: bool = True
    max_sweeps: int = 10000
    tol: float = 1e-10
    dictionary_cap: int = DEFAULT_CAP
    stop_early: bool = True

    def __post_init__(self):
        if int(self.S) != self.S or self.S < 1:
            raise ValueError(f"S must be a positive integer, got {self.S}")
        if not self.beta >= 0:
            raise ValueError(f"beta must be >= 0, got {self.beta}")
        if not self.survivor_tol >= 0:
            raise ValueError(f"survivor_tol must be >= 0, got {self.survivor_tol}")
        if self.dictionary_cap < 1:
            raise ValueError("dictionary_cap must be >= 1")

    @property
    def lasso_options(self) -> LassoOptions:
        return LassoOptions(beta=self.beta, max_sweeps=self.max_sweeps, tol=self.tol,
                            standardize=self.standardize)


@dataclass
class FitReport:
    engine: str
    iterations_used: list[int]
    dictionary_sizes: list[list[int]]
    converged_by_stopping_rule: list[bool]
    truncated: list[bool]
    solver_converged: list[bool]
    modeling_error: float
    total_order: int
    wall_time: float

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def mean_iterations(self) -> float:
        return float(np.mean(self.iterations_used))


@dataclass(frozen=True, eq=False)
class SparseModel:
    """Per-output survivor dictionaries with aligned coefficient vectors."""

    ambient_dim: int
    dictionaries: tuple[Dictionary, ...]
    coefficients: tuple[np.ndarray, ...]
    labels: tuple[str, ...] | None = None
    output_labels: tuple[str, ...] | None = None
    config: dict = field(default_factory=dict)
    fingerprint: str = ""

    def __post_init__(self):
        if len(self.dictionaries) != len(self.coefficients):
            raise ValueError("need one coefficient vector per output dictionary")
        coefs = []
        for d, c in zip(self.dictionaries, self.coefficients):
            c = np.asarray(c, dtype=float).reshape(-1)
            if d.ambient_dim != self.ambient_dim:
                raise DimensionError("output dictionary dimension differs from model dimension")
            if len(d) != c.size:
                raise ValueError("coefficient vector not aligned with its dictionary")
            c.setflags(write=False)
            coefs.append(c)
        object.__setattr__(self, "coefficients", tuple(coefs))

    @property
    def n_outputs(self) -> int:
        return len(self.dictionaries)

    @property
    def total_order(self) -> int:
        return sum(len(d) for d in self.dictionaries)

    def same_as(self, other: "SparseModel") -> bool:
        """Identical survivor sets and bitwise-identical coefficients."""
        return (self.ambient_dim == other.ambient_dim
                and self.dictionaries == other.dictionaries
                and all(np.array_equal(a, b) for a, b in zip(self.coefficients, other.coefficients)))

    def predict(self, X) -> np.ndarray:
        """One-step predictions for every row of a T x N array."""
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.ambient_dim:
            raise DimensionError(f"state has {X.shape[1]} entries, model expects {self.ambient_dim}")
        out = np.zeros((X.shape[0], self.n_outputs))
        for n, (d, c) in enumerate(zip(self.dictionaries, self.coefficients)):
            if len(d):
                out[:, n] = c @ evaluate_array(d, X)
        return out

    def equations(self, precision: int = 6) -> list[str]:
        names = list(self.labels) if self.labels else default_names(self.ambient_dim)
        outs = list(self.output_labels) if self.output_labels else (
            names if self.n_outputs == self.ambient_dim else [f"y{n + 1}" for n in range(self.n_outputs)])
        lines = []
        for out, d, c in zip(outs, self.dictionaries, self.coefficients):
            rhs = ""
            for m, v in zip(d, c):
                mag = f"{abs(v):.{precision}g}"
                term = mag if m.degree == 0 else f"{mag}·{m.render(names)}"
                if not rhs:
                    rhs = ("-" if v < 0 else "") + term
                else:
                    rhs += (" - " if v < 0 else " + ") + term
            lines.append(f"{out}' = {rhs or '0'}")
        return lines

    # ---------------------------------------------------------- persistence
    def to_text(self) -> str:
        lines = [MODEL_MAGIC, f"N={self.ambient_dim}", f"outputs={self.n_outputs}"]
        if self.labels:
            lines.append("labels=" + ",".join(self.labels))
        if self.output_labels:
            lines.append("output_labels=" + ",".join(self.output_labels))
        lines.append("fingerprint=" + self.fingerprint)
        lines.append("config=" + json.dumps(self.config, sort_keys=True))
        for n, (d, c) in enumerate(zip(self.dictionaries, self.coefficients)):
            lines.append(f"output {n + 1}")
            lines.append(d.to_text().rstrip("\n"))
            lines.append(f"coefficients {c.size}")
            lines.extend(repr(float(v)) for v in c)
        lines.append("end")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "SparseModel":
        lines = text.splitlines()

        def fail(i, msg):
            raise ModelFormatError(f"line {i + 1}: {msg}")

        if not lines or lines[0].strip() != MODEL_MAGIC:
            fail(0, f"expected {MODEL_MAGIC!r} header")
        meta = {}
        i = 1
        while i < len(lines) and not lines[i].startswith("output "):
            if lines[i].strip() == "end":
                break
            if "=" not in lines[i]:
                fail(i, f"expected key=value, got {lines[i]!r}")
            k, v = lines[i].split("=", 1)
            meta[k] = (v, i)
            i += 1
        try:
            dim = int(meta["N"][0])
            n_out = int(meta["outputs"][0])
        except KeyError as e:
            fail(i, f"missing header field {e.args[0]}")
        except ValueError:
            fail(meta["N"][1], "bad N/outputs value")
        try:
            config = json.loads(meta["config"][0]) if "config" in meta else {}
        except json.JSONDecodeError:
            fail(meta["config"][1], "config is not valid JSON")
        dicts, coefs = [], []
        for n in range(n_out):
            if i >= len(lines) or lines[i].strip() != f"output {n + 1}":
                fail(i, f"expected 'output {n + 1}'")
            try:
                d, i = parse_dictionary_lines(lines, i + 1)
            except ValueError as e:
                raise ModelFormatError(str(e)) from None
            if d.ambient_dim != dim:
                fail(i - 1, f"dictionary dimension {d.ambient_dim} != N={dim}")
            if i >= len(lines) or not lines[i].startswith("coefficients "):
                fail(i, "expected 'coefficients <count>'")
            try:
                count = int(lines[i].split()[1])
            except (IndexError, ValueError):
                fail(i, "bad coefficient count")
            if count != len(d):
                fail(i, f"{count} coefficients for {len(d)} terms")
            vals = []
            for j in range(i + 1, i + 1 + count):
                if j >= len(lines):
                    fail(j, "unexpected end of file in coefficients")
                try:
                    v = float(lines[j])
                except ValueError:
                    fail(j, f"bad coefficient {lines[j]!r}")
                if not np.isfinite(v):
                    fail(j, "non-finite coefficient")
                vals.append(v)
            i += 1 + count
            dicts.append(d)
            coefs.append(np.array(vals))
        if i >= len(lines) or lines[i].strip() != "end":
            fail(i, "expected 'end'")
        labels = tuple(meta["labels"][0].split(",")) if "labels" in meta else None
        out_labels = tuple(meta["output_labels"][0].split(",")) if "output_labels" in meta else None
        if labels is not None and len(labels) != dim:
            fail(meta["labels"][1], "label count does not match N")
        return cls(dim, tuple(dicts), tuple(coefs), labels, out_labels, config,
                   meta.get("fingerprint", ("", 0))[0])


# ------------------------------------------------------------------ helpers

def _split(data, targets=None):
    """Regressor rows X (T x N) and target rows Y (T x M)."""
    x = np.asarray(getattr(data, "samples", data), dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if targets is None:
        if x.shape[0] < 2:
            raise ValueError("need at least 2 samples to form one-step targets")
        return x[:-1], x[1:]
    y = np.asarray(targets, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    if y.shape[0] != x.shape[0] or x.shape[0] < 1:
        raise ValueError(f"inputs have {x.shape[0]} rows but targets have {y.shape[0]}")
    return x, y


def select_survivors(dictionary: Dictionary, coefs, tau: float):
    """Keep the terms whose coefficient magnitude strictly exceeds ``tau``."""
    coefs = np.asarray(coefs, dtype=float)
    if coefs.shape != (len(dictionary),):
        raise ValueError(f"{coefs.size} coefficients for {len(dictionary)} terms")
    keep = np.abs(coefs) > tau
    return dictionary.subset(keep), coefs[keep]


def _solve(psi, y, cfg: FitConfig, warm=None):
    if cfg.beta == 0:
        return least_squares_pinv(psi, y), True
    sol = lasso(psi, y, cfg.lasso_options, warm_start=warm)
    if not sol.converged:
        log.warning("lasso hit max_sweeps=%d on %d features", cfg.max_sweeps, psi.shape[0])
    return sol.coefficients, sol.converged


def _debias(dictionary, coefs, X, y):
    if len(dictionary) == 0:
        return coefs
    return least_squares_pinv(evaluate_array(dictionary, X), y)


def _meta(cfg: FitConfig, engine: str) -> dict:
    d = asdict(cfg)
    d["engine"] = engine
    return d


def _labels(data):
    return getattr(data, "labels", None)


def _fingerprint(X, Y):
    import hashlib

    h = hashlib.sha256(np.ascontiguousarray(X).tobytes())
    h.update(np.ascontiguousarray(Y).tobytes())
    return h.hexdigest()[:16]


def _residual_error(model: SparseModel, X, Y) -> float:
    r = Y - model.predict(X)
    return float(np.sum(r * r) / X.shape[0])


# ------------------------------------------------------------------ engines

def fit_conventional(data, cfg: FitConfig = FitConfig(), targets=None):
    """Single Lasso per output on the full dictionary of degree ``S + 1``."""
    t0 = time.perf_counter()
    X, Y = _split(data, targets)
    N = X.shape[1]
    full = full_dictionary(N, cfg.S + 1, cap=cfg.dictionary_cap)
    psi = evaluate_array(full, X)
    dicts, coefs, solved = [], [], []
    for n in range(Y.shape[1]):
        b, ok = _solve(psi, Y[:, n], cfg)
        d, c = select_survivors(full, b, cfg.survivor_tol)
        if cfg.debias:
            c = _debias(d, c, X, Y[:, n])
        dicts.append(d)
        coefs.append(c)
        solved.append(ok)
    model = SparseModel(N, tuple(dicts), tuple(coefs), _labels(data), None,
                        _meta(cfg, "conventional"), _fingerprint(X, Y))
    wall = time.perf_counter() - t0
    M = Y.shape[1]
    report = FitReport("conventional", [1] * M, [[len(full)] for _ in range(M)], [False] * M,
                       [False] * M, solved, _residual_error(model, X, Y), model.total_order, wall)
    return model, report


@dataclass
class _Trace:
    dictionary: Dictionary
    coefs: np.ndarray
    sizes: list = field(default_factory=list)
    iterations: int = 0
    stopped: bool = False
    truncated: bool = False
    solved: bool = True


def _warm(prev: Dictionary, prev_coefs, cand: Dictionary):
    if prev_coefs is None:
        return None
    w = np.zeros(len(cand))
    for m, v in zip(prev, prev_coefs):
        w[cand.index(m)] = v
    return w


def _iterate_one(X, y, cfg: FitConfig, unity: Dictionary) -> _Trace:
    tr = _Trace(unity, None)
    for _ in range(cfg.S):
        cand = expand(tr.dictionary, unity)
        if len(cand) > cfg.dictionary_cap:
            tr.truncated = True
            log.warning("candidate dictionary of %d terms exceeds cap %d; keeping previous survivors",
                        len(cand), cfg.dictionary_cap)
            break
        b, ok = _solve(evaluate_array(cand, X), y, cfg, _warm(tr.dictionary, tr.coefs, cand))
        tr.solved &= ok
        tr.sizes.append(len(cand))
        tr.iterations += 1
        surv, c = select_survivors(cand, b, cfg.survivor_tol)
        unchanged = surv == tr.dictionary
        tr.dictionary, tr.coefs = surv, c
        # an empty survivor set expands to nothing, so it is a fixed point too
        tr.stopped |= unchanged or len(surv) == 0
        if len(surv) == 0 or (unchanged and cfg.stop_early):
            break
    if tr.coefs is None:
        # cap tripped before any solve
        tr.coefs = np.zeros(len(tr.dictionary))
    return tr


def _iterate_shared(X, Y, cfg: FitConfig, unity: Dictionary):
    M = Y.shape[1]
    shared = unity
    per = [(unity, None)] * M
    sizes, iters, stopped, truncated, solved = [], 0, False, False, True
    for _ in range(cfg.S):
        cand = expand(shared, unity)
        if len(cand) > cfg.dictionary_cap:
            truncated = True
            break
        psi = evaluate_array(cand, X)
        new = []
        for n in range(M):
            d_prev, c_prev = per[n]
            warm = _warm(d_prev, c_prev, cand) if c_prev is not None else None
            b, ok = _solve(psi, Y[:, n], cfg, warm)
            solved &= ok
            new.append(select_survivors(cand, b, cfg.survivor_tol))
        per = new
        sizes.append(len(cand))
        iters += 1
        union = Dictionary(X.shape[1], [m for d, _ in per for m in d])
        unchanged = union == shared
        shared = union
        if len(union) == 0 or (unchanged and cfg.stop_early):
            stopped = True
            break
    per = [(d, np.zeros(len(d)) if c is None else c) for d, c in per]
    return per, sizes, iters, stopped, truncated, solved


def fit_iterative(data, cfg: FitConfig = FitConfig(), targets=None):
    """Expand-and-compress identification with the unchanged-survivors stopping rule."""
    t0 = time.perf_counter()
    X, Y = _split(data, targets)
    N, M = X.shape[1], Y.shape[1]
    unity = unity_set(N)
    if cfg.per_dimension:
        traces = [_iterate_one(X, Y[:, n], cfg, unity) for n in range(M)]
        per = [(t.dictionary, t.coefs) for t in traces]
        sizes = [t.sizes for t in traces]
        iters = [t.iterations for t in traces]
        stopped = [t.stopped for t in traces]
        truncated = [t.truncated for t in traces]
        solved = [t.solved for t in traces]
    else:
        per, sz, it, st, tr, ok = _iterate_shared(X, Y, cfg, unity)
        sizes, iters, stopped = [list(sz) for _ in range(M)], [it] * M, [st] * M
        truncated, solved = [tr] * M, [ok] * M
    dicts, coefs = [], []
    for n, (d, c) in enumerate(per):
        if cfg.debias:
            c = _debias(d, c, X, Y[:, n])
        dicts.append(d)
        coefs.append(c)
    model = SparseModel(N, tuple(dicts), tuple(coefs), _labels(data), None,
                        _meta(cfg, "iterative"), _fingerprint(X, Y))
    wall = time.perf_counter() - t0
    report = FitReport("iterative", iters, sizes, stopped, truncated, solved,
                       _residual_error(model, X, Y), model.total_order, wall)
    return model, report


ENGINES = {"conventional": fit_conventional, "iterative": fit_iterative}


def fit(data, cfg: FitConfig = FitConfig(), engine: str = "iterative", targets=None):
    try:
        fn = ENGINES[engine]
    except KeyError:
        raise ValueError(f"unknown engine {engine!r}") from None
    return fn(data, cfg, targets=targets)


# --------------------------------------------------------------- prediction

def predict_one_step(model: SparseModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != model.ambient_dim:
        raise DimensionError(f"state has {x.size} entries, model expects {model.ambient_dim}")
    if not np.all(np.isfinite(x)):
        raise ValueError("state must be finite")
    return model.predict(x[None, :])[0]


@dataclass(frozen=True)
class Rollout:
    series: TimeSeries
    diverged: bool

    @property
    def steps_completed(self) -> int:
        return self.series.T - 1


def rollout(model: SparseModel, x0, steps: int, bound: float = 1e6) -> Rollout:
    """Iterate the one-step map from ``x0``; rows are x0, x(1), ..., x(steps).

    Stops early, flagging divergence, once any coordinate leaves ``[-bound, bound]``.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if model.n_outputs != model.ambient_dim:
        raise DimensionError("rollout needs a model whose outputs are its own state")
    x = np.asarray(x0, dtype=float).reshape(-1)
    if x.size != model.ambient_dim:
        raise DimensionError(f"x0 has {x.size} entries, model expects {model.ambient_dim}")
    out = np.empty((steps + 1, x.size))
    out[0] = x
    diverged = False
    done = steps
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(1, steps + 1):
            x = model.predict(x[None, :])[0]
            if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > bound:
                diverged = True
                done = t - 1
                break
            out[t] = x
    return Rollout(TimeSeries(out[:done + 1], labels=model.labels), diverged)


def modeling_error(model: SparseModel, data, targets=None) -> float:
    """Mean over time of the summed squared one-step residual."""
    X, Y = _split(data, targets)
    if X.shape[1] != model.ambient_dim or Y.shape[1] != model.n_outputs:
        raise DimensionError("data does not match model dimensions")
    return _residual_error(model, X, Y)
