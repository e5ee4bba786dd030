"""Reference data generators."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .io import TimeSeries


class SimulationError(RuntimeError):
    """The integrated state became non-finite."""


@dataclass(frozen=True)
class LorenzParams:
    sigma: float = 10.0
    rho: float = 28.0
    alpha: float = 8.0 / 3.0
    dt: float = 0.01
    x0: tuple[float, float, float] = (-8.0, 7.0, 27.0)

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError(f"dt must be positive and finite, got {self.dt}")
        vals = (self.sigma, self.rho, self.alpha, *self.x0)
        if len(self.x0) != 3 or not all(math.isfinite(v) for v in vals):
            raise ValueError("Lorenz parameters and x0 must be finite; x0 has 3 entries")


@dataclass(frozen=True)
class NoiseSpec:
    snr_db: float = 20.0
    seed: int = 0


def lorenz_rhs(state, p: LorenzParams = LorenzParams()) -> np.ndarray:
    x, y, z = state
    return np.array([p.sigma * (y - x), x * (p.rho - z) - y, x * y - p.alpha * z])


def simulate_lorenz(p: LorenzParams = LorenzParams(), steps: int = 10000) -> TimeSeries:
    """Fixed-step classical RK4; returns ``steps + 1`` samples starting at x0."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    s, r, a, h = p.sigma, p.rho, p.alpha, p.dt
    out = np.empty((steps + 1, 3))
    x, y, z = (float(v) for v in p.x0)
    out[0] = x, y, z

    def f(x, y, z):
        return s * (y - x), x * (r - z) - y, x * y - a * z

    for t in range(1, steps + 1):
        k1 = f(x, y, z)
        k2 = f(x + 0.5 * h * k1[0], y + 0.5 * h * k1[1], z + 0.5 * h * k1[2])
        k3 = f(x + 0.5 * h * k2[0], y + 0.5 * h * k2[1], z + 0.5 * h * k2[2])
        k4 = f(x + h * k3[0], y + h * k3[1], z + h * k3[2])
        x += h / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        y += h / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        z += h / 6.0 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
        if not (math.isfinite(x) and math.isfinite(y) and math.isfinite(z)):
            raise SimulationError(f"Lorenz state became non-finite at step {t} (dt={h})")
        out[t] = x, y, z
    return TimeSeries(out, dt=h, labels=("x", "y", "z"))


def logistic_series(r: float = 3.9, x0: float = 0.5, steps: int = 500) -> TimeSeries:
    """Iterate ``x <- r x (1 - x)``; ``steps + 1`` samples including x0."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    out = np.empty(steps + 1)
    x = float(x0)
    out[0] = x
    for t in range(1, steps + 1):
        x = r * x * (1.0 - x)
        out[t] = x
    return TimeSeries(out[:, None], dt=1.0, labels=("x",))


def noise_variance(signal, snr_db: float) -> float:
    signal = np.asarray(signal, dtype=float)
    if signal.size == 0:
        raise ValueError("empty signal")
    return float(np.mean(signal * signal) / 10.0 ** (snr_db / 10.0))


def add_noise_snr(signal, spec: NoiseSpec, rng: np.random.Generator | None = None) -> np.ndarray:
    """Add white Gaussian noise scaled to the requested SNR in dB.

    ``snr_db = inf`` returns the signal unchanged.
    """
    signal = np.asarray(signal, dtype=float)
    if signal.size == 0:
        raise ValueError("empty signal")
    if math.isinf(spec.snr_db) and spec.snr_db > 0:
        return signal.copy()
    var = noise_variance(signal, spec.snr_db)
    rng = np.random.default_rng(spec.seed) if rng is None else rng
    return signal + rng.normal(0.0, math.sqrt(var), size=signal.shape)


def sum_signal_experiment(p: LorenzParams = LorenzParams(), steps: int = 10000,
                          spec: NoiseSpec = NoiseSpec(), states: TimeSeries | None = None):
    """Lorenz states x(t) as inputs and the noisy next-step sum as target.

    Returns ``(inputs, target)`` where ``inputs`` holds samples 0..T-1 and
    ``target[t] = x(t+1) + y(t+1) + z(t+1) + noise``. A precomputed
    trajectory may be passed as ``states`` to share it across noise seeds.
    """
    states = simulate_lorenz(p, steps) if states is None else states
    x = states.samples
    clean = x[1:].sum(axis=1)
    target = add_noise_snr(clean, spec)
    return TimeSeries(x[:-1], dt=states.dt, labels=states.labels), target


def surrogate_series(T: int = 840, N: int = 36, seed: int = 0, coupling: float = 0.2,
                     noise: float = 1e-2) -> TimeSeries:
    """Chain of coupled logistic maps, standing in for a multivariate sensor record.

    ``x_n(t+1) = (1-c) f_n(x_n(t)) + c f_{n-1}(x_{n-1}(t)) + noise`` with
    ``f_n(x) = r_n x (1 - x)`` and ``x_0`` uncoupled. Each coordinate depends
    only on itself and its predecessor, so the first ``k`` columns always form
    a closed subsystem with a sparse quadratic flow map. Returns ``T`` samples.
    """
    rng = np.random.default_rng(seed)
    r = rng.uniform(3.6, 3.95, size=N)
    x = rng.uniform(0.2, 0.8, size=N)
    out = np.empty((T, N))
    burn = 100
    for t in range(-burn, T):
        if t >= 0:
            out[t] = x
        fx = r * x * (1.0 - x)
        nxt = (1.0 - coupling) * fx
        nxt[1:] += coupling * fx[:-1]
        nxt[0] = fx[0]
        x = np.clip(nxt + noise * rng.standard_normal(N), 0.0, 1.0)
    return TimeSeries(out, dt=1.0, labels=tuple(f"s{i + 1}" for i in range(N)))
