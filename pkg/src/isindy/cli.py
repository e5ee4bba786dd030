"""Command-line interface: ``isindy simulate | fit | predict | bench | show``.

Exit codes: 0 success, 1 usage error, 2 data/parse error, 3 numerical failure.
The dictionary size cap defaults to 10**6 and can be overridden with the
``ISINDY_DICTIONARY_CAP`` environment variable.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import bench, dynamics
from .dictionary import DictionaryCapError
from .engine import ModelFormatError, fit, modeling_error, rollout
from .io import (
    ConfigError,
    DataError,
    RunConfig,
    TimeSeries,
    load_config,
    load_model,
    parse_config,
    read_csv,
    save_model,
    save_report,
    write_csv,
)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
CAP_ENV = "ISINDY_DICTIONARY_CAP"

log = logging.getLogger("isindy")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _positive(flag):
    def check(text):
        try:
            v = float(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"{flag} expects a number, got {text!r}") from None
        if not v > 0:
            raise argparse.ArgumentTypeError(f"{flag} must be > 0, got {text}")
        return v
    return check


def _add_overrides(p):
    p.add_argument("--config", help="key = value run configuration file")
    p.add_argument("--data", help="CSV time series (overrides 'data' in the config)")
    p.add_argument("--engine", choices=("conventional", "iterative"))
    p.add_argument("--beta", help="Lasso weight, or a bracketed grid for bench")
    p.add_argument("--S", dest="S", help="expansion depth, or a bracketed grid for bench")
    p.add_argument("--tau", help="survivor threshold")
    p.add_argument("--seed", help="random seed")
    p.add_argument("--format", choices=("csv", "jsonl"), help="bench output format")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="isindy", description="Sparse polynomial system identification.",
        epilog=f"environment: {CAP_ENV} overrides the dictionary size cap (default 10**6). "
               "exit codes: 0 ok, 1 usage, 2 data/parse, 3 numerical failure.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sim = sub.add_parser("simulate", help="generate a reference time series")
    sim.add_argument("system", choices=("lorenz", "logistic", "surrogate"))
    sim.add_argument("--steps", type=int, default=None,
                     help="integration steps (lorenz, logistic) or rows (surrogate)")
    sim.add_argument("--dt", type=_positive("--dt"), default=0.01, help="Lorenz sampling interval")
    sim.add_argument("--x0", type=_floats, help="initial state, comma separated")
    sim.add_argument("--r", type=float, default=3.9, help="logistic growth rate")
    sim.add_argument("--sigma", type=float, default=10.0)
    sim.add_argument("--rho", type=float, default=28.0)
    sim.add_argument("--alpha", type=float, default=8.0 / 3.0)
    sim.add_argument("--columns", type=int, default=36, help="surrogate column count")
    sim.add_argument("--noise", type=float, default=0.01, help="surrogate process noise std")
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--out", required=True, help="output CSV path")

    f = sub.add_parser("fit", help="identify a sparse model")
    _add_overrides(f)
    f.add_argument("--out", help="model file path (default: model_out from config)")
    f.add_argument("--report", help="FitReport JSON path")

    pr = sub.add_parser("predict", help="roll out or one-step predict with a model")
    pr.add_argument("--model", required=True)
    src = pr.add_mutually_exclusive_group(required=True)
    src.add_argument("--x0", type=_floats, help="initial state for a rollout")
    src.add_argument("--data", help="reference series; rollout starts at its first row")
    pr.add_argument("--steps", type=int, help="rollout steps (default: reference length - 1)")
    pr.add_argument("--one-step", action="store_true", help="predict each row from the previous reference row")
    pr.add_argument("--bound", type=float, default=1e6, help="divergence bound")
    pr.add_argument("--out", required=True)

    b = sub.add_parser("bench", help="run a beta, S or N sweep")
    _add_overrides(b)
    b.add_argument("--out", help="results path")

    sh = sub.add_parser("show", help="print the equations stored in a model file")
    sh.add_argument("model")
    return parser


# ------------------------------------------------------------------ commands

def cmd_simulate(args) -> int:
    if args.system == "lorenz":
        x0 = tuple(args.x0) if args.x0 else (-8.0, 7.0, 27.0)
        if len(x0) != 3:
            raise UsageError("--x0 needs three values for lorenz")
        p = dynamics.LorenzParams(args.sigma, args.rho, args.alpha, args.dt, x0)
        series = dynamics.simulate_lorenz(p, args.steps or 10000)
    elif args.system == "logistic":
        x0 = args.x0[0] if args.x0 else 0.5
        series = dynamics.logistic_series(args.r, x0, args.steps or 500)
    else:
        series = dynamics.surrogate_series(args.steps or 840, args.columns, args.seed, noise=args.noise)
    write_csv(series, args.out)
    print(f"wrote {series.T} x {series.N} samples to {args.out}")
    return EXIT_OK


def _overrides(args) -> dict[str, str]:
    out = {}
    for key in ("data", "engine", "beta", "S", "tau", "seed", "format"):
        val = getattr(args, key, None)
        if val is not None:
            out[key] = str(val)
    if os.environ.get(CAP_ENV):
        out["dictionary_cap"] = os.environ[CAP_ENV]
    return out


def _run_config(args) -> RunConfig:
    over = _overrides(args)
    if args.config:
        return load_config(args.config, over)
    return parse_config("", over)


def load_data(cfg: RunConfig):
    """Dataset named by a run config: ``(series, targets_or_None)``."""
    targets = None
    if cfg.data is not None:
        series = read_csv(cfg.data)
    elif cfg.system == "lorenz":
        x0 = tuple(cfg.x0) if cfg.x0 else (-8.0, 7.0, 27.0)
        series = dynamics.simulate_lorenz(dynamics.LorenzParams(dt=cfg.dt, x0=x0), cfg.steps)
    elif cfg.system == "logistic":
        series = dynamics.logistic_series(cfg.r, cfg.x0[0] if cfg.x0 else 0.5, cfg.steps)
    elif cfg.system == "surrogate":
        series = dynamics.surrogate_series(cfg.steps, cfg.columns, cfg.seed, noise=cfg.noise)
    else:
        x0 = tuple(cfg.x0) if cfg.x0 else (-8.0, 7.0, 27.0)
        series, targets = dynamics.sum_signal_experiment(
            dynamics.LorenzParams(dt=cfg.dt, x0=x0), cfg.steps,
            dynamics.NoiseSpec(cfg.snr_db, cfg.seed))
    if isinstance(cfg.N, int) and cfg.N != series.N:
        series = series.columns(cfg.N)
    return series, targets


def cmd_fit(args) -> int:
    cfg = _run_config(args)
    if cfg.grids():
        raise UsageError(f"fit takes single values; grids given for {', '.join(cfg.grids())} (use bench)")
    series, targets = load_data(cfg)
    model, report = fit(series, cfg.fit_config(), cfg.engine, targets=targets)
    out = args.out or cfg.model_out
    save_model(model, out)
    report_path = args.report or cfg.report_out or str(Path(out).with_suffix(".report.json"))
    save_report(report, report_path)
    for line in model.equations():
        print(line)
    print(f"engine={report.engine} order={report.total_order} error={report.modeling_error:.6g} "
          f"iterations={report.iterations_used} time={report.wall_time:.3f}s")
    print(f"model -> {out}; report -> {report_path}")
    return EXIT_OK


def cmd_predict(args) -> int:
    model = load_model(args.model)
    reference = read_csv(args.data) if args.data else None
    if args.one_step:
        if reference is None:
            raise UsageError("--one-step needs --data")
        x = reference.samples
        pred = model.predict(x[:-1])
        err = x[1:] - pred
        extra = {f"err_{j + 1}": err[:, j] for j in range(err.shape[1])}
        write_csv(TimeSeries(pred, labels=model.labels), args.out, extra=extra)
        agg = modeling_error(model, reference)
        print(f"one-step predictions for {pred.shape[0]} rows; modeling error {agg:.10g}")
        return EXIT_OK
    x0 = args.x0 if reference is None else reference.samples[0]
    steps = args.steps or (reference.T - 1 if reference is not None else None)
    if not steps or steps < 1:
        raise UsageError("--steps must be >= 1")
    ro = rollout(model, x0, steps, bound=args.bound)
    traj = ro.series.samples
    extra = None
    if reference is not None:
        n = min(traj.shape[0], reference.T)
        errs = np.full(traj.shape, np.nan)
        errs[:n] = reference.samples[:n] - traj[:n]
        # rows past the reference carry no error; write 0 so the file stays finite
        errs = np.nan_to_num(errs)
        extra = {f"err_{j + 1}": errs[:, j] for j in range(errs.shape[1])}
    write_csv(TimeSeries(traj, labels=model.labels), args.out, extra=extra)
    status = "DIVERGED" if ro.diverged else "bounded"
    print(f"rollout of {ro.steps_completed} steps ({status}); max |x| = {np.abs(traj).max():.6g}")
    return EXIT_NUMERIC if ro.diverged else EXIT_OK


def cmd_bench(args) -> int:
    cfg = _run_config(args)
    grids = cfg.grids()
    if len(grids) != 1:
        raise UsageError("bench needs exactly one grid among beta, S, N (e.g. beta = [0.001, 0.01])")
    (key, grid), = grids.items()
    base = {k: (v[0] if isinstance(v, list) else v) for k, v in
            (("S", cfg.S), ("beta", cfg.beta))}
    fc = cfg.fit_config(**base)
    engines = cfg.engines
    if cfg.system == "sum_signal":
        if key != "beta":
            raise UsageError("the sum_signal system supports beta sweeps only")
        x0 = tuple(cfg.x0) if cfg.x0 else (-8.0, 7.0, 27.0)
        snr = cfg.snr_db if math.isfinite(cfg.snr_db) else 20.0
        result = bench.sum_signal_beta_sweep(grid, fc, dynamics.LorenzParams(dt=cfg.dt, x0=x0),
                                             cfg.steps, snr, cfg.repetitions, cfg.seed, engines)
    else:
        series, targets = load_data(RunConfig(**{**vars(cfg), "N": None}))
        if key == "beta":
            sub = series.columns(cfg.N) if isinstance(cfg.N, int) else series
            result = bench.beta_sweep(sub, grid, fc, engines, targets=targets, seed=cfg.seed)
        elif key == "S":
            sub = series.columns(cfg.N) if isinstance(cfg.N, int) else series
            result = bench.depth_sweep(sub, grid, fc, engines, targets=targets)
        else:
            result = bench.dimension_sweep(series, grid, fc, engines)
    out = args.out or cfg.out or f"sweep_{key}.{cfg.format}"
    bench.emit(result, out, cfg.format)
    print(f"{'value':>12} {'engine':>13} {'runs':>5} {'error':>12} {'order':>8} {'iters':>6} {'time[s]':>9}")
    for r in result.summary():
        print(f"{r['value']:>12.6g} {r['engine']:>13} {r['runs']:>5d} {r['modeling_error']:>12.4e} "
              f"{r['total_order']:>8.1f} {r['mean_iterations']:>6.2f} {r['wall_time']:>9.4f}")
    skipped = [r for r in result.rows if r["status"] != "ok"]
    for r in skipped:
        print(f"{r['status']}: {key}={r['value']} {r['engine']}: {r['message']}")
    print(f"results -> {out}")
    return EXIT_OK


def cmd_show(args) -> int:
    model = load_model(args.model)
    print(f"N={model.ambient_dim} outputs={model.n_outputs} order={model.total_order} "
          f"engine={model.config.get('engine', '?')} fingerprint={model.fingerprint}")
    for line in model.equations():
        print(line)
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "predict": cmd_predict,
            "bench": cmd_bench, "show": cmd_show}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as e:
        print(f"isindy: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (FileNotFoundError, DataError, ConfigError, ModelFormatError, DictionaryCapError) as e:
        print(f"isindy: error: {e}", file=sys.stderr)
        return EXIT_DATA
    except (dynamics.SimulationError, np.linalg.LinAlgError, FloatingPointError) as e:
        print(f"isindy: numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as e:
        print(f"isindy: error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
