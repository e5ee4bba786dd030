"""Parameter sweeps comparing the conventional and iterative engines."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .dictionary import DictionaryCapError, dictionary_size, evaluate_array, expand, unity_set
from .dynamics import LorenzParams, NoiseSpec, simulate_lorenz, sum_signal_experiment
from .engine import FitConfig, fit
from .solver import row_scales

log = logging.getLogger(__name__)

COLUMNS = (
    "sweep", "value", "engine", "repetition", "status", "modeling_error", "total_order",
    "mean_iterations", "wall_time", "dictionary_sizes", "concurrency", "message",
)
SCHEMA = {
    "sweep": "swept parameter name (beta | S | N)",
    "value": "swept parameter value",
    "engine": "conventional | iterative",
    "repetition": "repetition index (noise seed index for averaged sweeps)",
    "status": "ok | skipped | failed",
    "modeling_error": "mean over time of summed squared one-step residual",
    "total_order": "surviving terms summed over output dimensions",
    "mean_iterations": "Lasso solves per output dimension, averaged",
    "wall_time": "seconds per fit call (monotonic clock)",
    "dictionary_sizes": "candidate dictionary size per iteration, per output dimension",
    "concurrency": "number of cells timed concurrently",
    "message": "error text for skipped or failed cells",
}


@dataclass
class SweepResult:
    sweep: str
    rows: list[dict] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def ok_rows(self, engine: str | None = None) -> list[dict]:
        return [r for r in self.rows if r["status"] == "ok" and (engine is None or r["engine"] == engine)]

    def summary(self) -> list[dict]:
        """Means over repetitions for every (value, engine) cell that succeeded."""
        groups: dict[tuple, list[dict]] = {}
        for r in self.ok_rows():
            groups.setdefault((r["value"], r["engine"]), []).append(r)
        out = []
        for (value, engine), rows in sorted(groups.items(), key=lambda kv: (kv[0][0], kv[0][1])):
            out.append({
                "value": value,
                "engine": engine,
                "runs": len(rows),
                "modeling_error": float(np.mean([r["modeling_error"] for r in rows])),
                "total_order": float(np.mean([r["total_order"] for r in rows])),
                "mean_iterations": float(np.mean([r["mean_iterations"] for r in rows])),
                "wall_time": float(np.mean([r["wall_time"] for r in rows])),
            })
        return out

    def series(self, key: str, engine: str) -> tuple[list, list]:
        s = [r for r in self.summary() if r["engine"] == engine]
        return [r["value"] for r in s], [r[key] for r in s]


def _cell(sweep, value, engine, rep, data, cfg, targets=None) -> dict:
    row = dict.fromkeys(COLUMNS)
    row.update(sweep=sweep, value=value, engine=engine, repetition=rep, concurrency=1, message="")
    try:
        _, report = fit(data, cfg, engine, targets=targets)
    except DictionaryCapError as e:
        row.update(status="skipped", message=str(e))
    except Exception as e:  # a failed cell must not abort the sweep
        log.warning("cell %s=%s %s failed: %s", sweep, value, engine, e)
        row.update(status="failed", message=f"{type(e).__name__}: {e}")
    else:
        row.update(
            status="ok",
            modeling_error=report.modeling_error,
            total_order=report.total_order,
            mean_iterations=report.mean_iterations,
            wall_time=report.wall_time,
            dictionary_sizes=report.dictionary_sizes,
        )
    return row


def _fingerprint(data) -> str:
    fp = getattr(data, "fingerprint", None)
    return fp() if callable(fp) else ""


def _metadata(cfg: FitConfig, data, **extra) -> dict:
    meta = {"config": asdict(cfg), "data_fingerprint": _fingerprint(data)}
    meta.update(extra)
    return meta


def _sort(rows: list[dict]) -> list[dict]:
    return sorted(rows, key=lambda r: (r["value"], r["engine"], r["repetition"]))


def beta_sweep(data, betas: Sequence[float], cfg: FitConfig = FitConfig(),
               engines: Iterable[str] = ("conventional", "iterative"), targets=None,
               seed: int = 0) -> SweepResult:
    """Fit every engine at every beta on one fixed dataset."""
    betas = [float(b) for b in betas]
    if betas != sorted(betas) or not betas:
        raise ValueError("beta grid must be non-empty and sorted ascending")
    rows = [_cell("beta", b, eng, 0, data, replace(cfg, beta=b), targets)
            for b in betas for eng in engines]
    return SweepResult("beta", _sort(rows), _metadata(cfg, data, grid=betas, seed=seed, repetitions=1))


def noise_seeds(seed: int, repetitions: int) -> list[int]:
    """Independent per-repetition seeds derived from one master seed."""
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(repetitions)]


def sum_signal_zero_beta(inputs, target, cfg: FitConfig = FitConfig()) -> float:
    """Smallest beta at which the first iterative Lasso returns the zero vector."""
    x = np.asarray(getattr(inputs, "samples", inputs))
    g1 = unity_set(x.shape[1])
    psi = evaluate_array(expand(g1, g1), x)
    w = row_scales(psi) if cfg.standardize else np.ones(psi.shape[0])
    return float(2.0 * np.max(np.abs(psi @ np.asarray(target)) / w))


def sum_signal_beta_sweep(betas: Sequence[float] | None = None, cfg: FitConfig = FitConfig(S=20),
                          params: LorenzParams = LorenzParams(), steps: int = 1000,
                          snr_db: float = 20.0, repetitions: int = 50, seed: int = 0,
                          engines: Iterable[str] = ("iterative",), decades: float = 3.0,
                          points: int = 7) -> SweepResult:
    """Beta sweep on the noisy next-step sum signal, averaged over noise draws.

    The Lorenz trajectory is shared; each repetition draws fresh noise from
    its own seed. With ``betas=None`` the grid spans ``decades`` decades
    below a top value just above the largest zero-solution threshold over
    all repetitions, so the top of the grid always yields an empty model.
    """
    states = simulate_lorenz(params, steps)
    seeds = noise_seeds(seed, repetitions)
    draws = [sum_signal_experiment(params, steps, NoiseSpec(snr_db, s), states=states) for s in seeds]
    if betas is None:
        top = 1.01 * max(sum_signal_zero_beta(x, y, cfg) for x, y in draws)
        betas = list(top * np.logspace(-decades, 0, points))
    betas = [float(b) for b in betas]
    if betas != sorted(betas):
        raise ValueError("beta grid must be sorted ascending")
    rows = []
    for rep, (x, y) in enumerate(draws):
        for b in betas:
            for eng in engines:
                rows.append(_cell("beta", b, eng, rep, x, replace(cfg, beta=b), targets=y))
    meta = _metadata(cfg, states, grid=betas, seed=seed, repetitions=repetitions, snr_db=snr_db,
                     steps=steps, note="metrics averaged over independent noise draws, one spawned seed per repetition")
    return SweepResult("beta", _sort(rows), meta)


def depth_sweep(data, depths: Sequence[int], cfg: FitConfig = FitConfig(),
                engines: Iterable[str] = ("conventional", "iterative"), targets=None) -> SweepResult:
    """Conventional uses the full dictionary of degree S+1; iterative runs at most S expansions."""
    depths = [int(s) for s in depths]
    if not depths:
        raise ValueError("empty S grid")
    rows = [_cell("S", s, eng, 0, data, replace(cfg, S=s), targets) for s in depths for eng in engines]
    return SweepResult("S", _sort(rows), _metadata(cfg, data, grid=depths))


def dimension_sweep(data, dims: Sequence[int], cfg: FitConfig = FitConfig(),
                    engines: Iterable[str] = ("conventional", "iterative")) -> SweepResult:
    """Fit on the first N columns for each N; conventional is skipped past the cap."""
    dims = [int(n) for n in dims]
    if not dims:
        raise ValueError("empty N grid")
    rows = []
    for n in dims:
        sub = data.columns(n)
        for eng in engines:
            if eng == "conventional" and dictionary_size(n, cfg.S + 1) > cfg.dictionary_cap:
                row = dict.fromkeys(COLUMNS)
                row.update(sweep="N", value=n, engine=eng, repetition=0, status="skipped", concurrency=1,
                           message=f"dictionary of {dictionary_size(n, cfg.S + 1)} terms exceeds cap "
                                   f"{cfg.dictionary_cap}")
                rows.append(row)
                continue
            rows.append(_cell("N", n, eng, 0, sub, cfg))
    return SweepResult("N", _sort(rows), _metadata(cfg, data, grid=dims))


# ----------------------------------------------------------------- emission

def _csv_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, dict)):
        return json.dumps(v, separators=(",", ":")).replace(",", ";")
    s = str(v)
    return s.replace(",", ";").replace("\n", " ")


def render(result: SweepResult, fmt: str = "csv") -> str:
    if fmt == "csv":
        lines = [f"# sweep={result.sweep}"]
        lines += [f"# column {k}: {SCHEMA[k]}" for k in COLUMNS]
        lines.append("# metadata " + json.dumps(result.metadata, sort_keys=True))
        lines.append(",".join(COLUMNS))
        lines += [",".join(_csv_value(r.get(k)) for k in COLUMNS) for r in result.rows]
        return "\n".join(lines) + "\n"
    if fmt in ("jsonl", "json-lines"):
        header = {"_header": {"sweep": result.sweep, "columns": list(COLUMNS), "schema": SCHEMA,
                              "metadata": result.metadata}}
        lines = [json.dumps(header, sort_keys=True)]
        lines += [json.dumps({k: r.get(k) for k in COLUMNS}, sort_keys=True) for r in result.rows]
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown format {fmt!r}; use csv or jsonl")


def emit(result: SweepResult, path, fmt: str = "csv") -> None:
    """Write one sweep to ``path``; column order and key order are fixed."""
    with open(path, "w", newline="\n") as fh:
        fh.write(render(result, fmt))
