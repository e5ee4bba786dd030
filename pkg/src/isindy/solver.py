"""Sparse least-squares solvers.

The Lasso objective used throughout is::

    ||y - Psi^T b||_2^2 + beta * ||b||_1

with no ``1/(2T)`` factor. A regularization value ``alpha`` from a tool that
minimizes ``(1/2T)||y - Xb||^2 + alpha||b||_1`` corresponds to
``beta = 2 * T * alpha`` here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .dictionary import FeatureMatrix


@dataclass(frozen=True)
class LassoOptions:
    beta: float = 0.01
    max_sweeps: int = 10000
    tol: float = 1e-10
    standardize: bool = True

    def __post_init__(self):
        if not (self.beta >= 0 and np.isfinite(self.beta)):
            raise ValueError(f"beta must be finite and >= 0, got {self.beta}")
        if not self.tol >= 0:
            raise ValueError(f"tol must be >= 0, got {self.tol}")
        if self.max_sweeps < 1:
            raise ValueError(f"max_sweeps must be >= 1, got {self.max_sweeps}")


@dataclass
class LassoSolution:
    coefficients: np.ndarray
    sweeps_used: int
    converged: bool
    objective_value: float
    objective_history: np.ndarray | None = None
    penalty_weights: np.ndarray | None = None


def _design_array(design) -> np.ndarray:
    values = design.values if isinstance(design, FeatureMatrix) else design
    return np.asarray(values, dtype=float)


def _check_inputs(psi: np.ndarray, y: np.ndarray):
    if psi.ndim != 2:
        raise ValueError("design must be a K x T matrix")
    if y.ndim != 1 or y.shape[0] != psi.shape[1]:
        raise ValueError(f"target length {y.shape} does not match design columns {psi.shape[1]}")
    if y.shape[0] < 1:
        raise ValueError("need at least one sample")
    if not np.all(np.isfinite(psi)):
        raise ValueError("design contains non-finite values")
    if not np.all(np.isfinite(y)):
        raise ValueError("target contains non-finite values")


def objective(psi, y, beta, b) -> float:
    """Exact Lasso objective at ``b``."""
    psi = _design_array(psi)
    r = np.asarray(y, dtype=float) - psi.T @ b
    return float(r @ r + beta * np.abs(b).sum())


def row_scales(psi: np.ndarray) -> np.ndarray:
    """Root-mean-square of each feature row; constant-zero rows get scale 1."""
    rms = np.sqrt(np.mean(psi * psi, axis=1)) if psi.shape[1] else np.ones(psi.shape[0])
    rms[~(rms > 0)] = 1.0
    return rms


@njit(cache=True)
def _cd_gram(gram, corr, yy, half_thr, b, max_sweeps, tol, history):
    K = corr.shape[0]
    q = gram @ b
    sweeps = 0
    converged = False
    for sweep in range(max_sweeps):
        biggest = 0.0
        for k in range(K):
            gkk = gram[k, k]
            old = b[k]
            if gkk <= 0.0:
                new = 0.0
            else:
                g = corr[k] - q[k] + gkk * old
                if g > half_thr[k]:
                    new = (g - half_thr[k]) / gkk
                elif g < -half_thr[k]:
                    new = (g + half_thr[k]) / gkk
                else:
                    new = 0.0
            d = new - old
            if d != 0.0:
                for j in range(K):
                    q[j] += d * gram[j, k]
                b[k] = new
                if abs(d) > biggest:
                    biggest = abs(d)
        sweeps = sweep + 1
        obj = yy
        for k in range(K):
            obj += -2.0 * corr[k] * b[k] + b[k] * q[k] + 2.0 * half_thr[k] * abs(b[k])
        history[sweep] = obj
        if biggest <= tol:
            converged = True
            break
    return sweeps, converged


def _solve_sub(gram, rhs):
    try:
        x = np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError:
        x = np.linalg.lstsq(gram, rhs, rcond=None)[0]
    return x


def _feature_sign(gram, corr, yy, half_thr, b, max_steps=500):
    """Active-set polish of ``b`` (feature-sign search), in place.

    Each step solves the optimality equations on the active signed set and
    line-searches the segment toward that solution, stopping at zero
    crossings; the objective never increases.
    """
    slack = 1e-12 * (np.abs(corr).max() + 1.0)
    sign = np.sign(b)
    active = b != 0
    for _ in range(max_steps):
        grad = gram @ b - corr
        on = np.flatnonzero(active)
        on_viol = np.abs(grad[on] + half_thr[on] * sign[on]).max() if on.size else 0.0
        if on_viol <= slack * 10:
            off = np.flatnonzero(~active)
            if off.size == 0:
                return
            viol = np.abs(grad[off]) - half_thr[off]
            j = int(np.argmax(viol))
            if viol[j] <= slack:
                return
            k = off[j]
            active[k] = True
            sign[k] = -np.sign(grad[k])
            on = np.flatnonzero(active)
        target = _solve_sub(gram[np.ix_(on, on)], corr[on] - half_thr[on] * sign[on])
        if not np.all(np.isfinite(target)):
            return
        cur = b[on]
        step = target - cur
        # the smooth part is quadratic along the step: s0 + s1 t + s2 t^2
        sub = gram[np.ix_(on, on)]
        s1 = 2.0 * step @ (grad[on])
        s2 = step @ sub @ step
        stops = [(1.0, -1)]
        for i in np.flatnonzero((np.sign(target) != sign[on]) & (step != 0)):
            t = -cur[i] / step[i]
            if 0.0 < t < 1.0:
                stops.append((float(t), int(i)))
        pen0 = 2.0 * half_thr[on] @ np.abs(cur)
        best_t, best_i, best_gain = None, -1, 0.0
        for t, i in stops:
            seg = cur + t * step
            if i >= 0:
                seg[i] = 0.0
            gain = s1 * t + s2 * t * t + 2.0 * half_thr[on] @ np.abs(seg) - pen0
            if gain < best_gain:
                best_t, best_i, best_gain = t, i, gain
        if best_t is None:
            return
        best = b.copy()
        best[on] = cur + best_t * step
        if best_i >= 0:
            best[on[best_i]] = 0.0
        b[:] = best
        active = b != 0
        sign = np.where(active, np.sign(b), 0.0)


def _scaled_objective(gram, corr, yy, half_thr, b):
    return float(yy - 2.0 * corr @ b + b @ (gram @ b) + 2.0 * half_thr @ np.abs(b))


def lasso(design, target, opts: LassoOptions = LassoOptions(), warm_start=None,
          record_history: bool = False, chunk: int = 25) -> LassoSolution:
    """Solve the Lasso problem by cyclic coordinate descent.

    Parameters
    ----------
    design : FeatureMatrix or ndarray, shape (K, T)
        Feature rows evaluated at T samples.
    target : ndarray, shape (T,)
    opts : LassoOptions
        With ``standardize`` set, every row is rescaled to unit RMS before
        solving, so the penalty acts on standardized coefficients (raw
        coefficient ``k`` carries penalty weight equal to its row RMS). The
        returned coefficients are always in raw units and
        ``objective_value`` is the unweighted objective at them.
    warm_start : ndarray, optional
        Raw-unit starting coefficients.
    chunk : int
        Sweeps between active-set polishes. Coordinate descent crawls on
        highly correlated monomials, so after every ``chunk`` unconverged
        sweeps the iterate is refined by feature-sign search, which only
        ever lowers the objective. Convergence is still decided by a
        coordinate sweep.
    """
    psi = _design_array(design)
    y = np.asarray(target, dtype=float)
    _check_inputs(psi, y)
    K = psi.shape[0]
    if K == 0:
        return LassoSolution(np.zeros(0), 0, True, float(y @ y),
                             np.zeros(0) if record_history else None, np.zeros(0))

    scale = row_scales(psi) if opts.standardize else np.ones(K)
    z = psi / scale[:, None]
    gram = z @ z.T
    corr = z @ y
    yy = float(y @ y)
    b = np.zeros(K) if warm_start is None else np.asarray(warm_start, dtype=float) * scale
    if b.shape != (K,) or not np.all(np.isfinite(b)):
        raise ValueError("warm start must be a finite vector matching the design rows")
    b = b.copy()
    half_thr = np.full(K, 0.5 * opts.beta)
    history = np.empty(opts.max_sweeps)
    used, converged = 0, False
    while used < opts.max_sweeps:
        n = min(chunk, opts.max_sweeps - used)
        sweeps, converged = _cd_gram(gram, corr, yy, half_thr, b, n, float(opts.tol),
                                     history[used:])
        used += sweeps
        if converged or used >= opts.max_sweeps:
            break
        _feature_sign(gram, corr, yy, half_thr, b)
    coefs = b / scale
    return LassoSolution(
        coefficients=coefs,
        sweeps_used=int(used),
        converged=bool(converged),
        objective_value=objective(psi, y, opts.beta, coefs),
        objective_history=history[:used].copy() if record_history else None,
        penalty_weights=scale,
    )


def least_squares_pinv(design, target) -> np.ndarray:
    """Minimum-norm least-squares coefficients, ``pinv(Psi^T) @ y``."""
    psi = _design_array(design)
    y = np.asarray(target, dtype=float)
    _check_inputs(psi, y)
    if psi.shape[0] == 0:
        return np.zeros(0)
    coefs, *_ = np.linalg.lstsq(psi.T, y, rcond=None)
    return coefs


def kkt_violation(design, target, beta: float, b, weights=None) -> float:
    """Largest violation of the Lasso optimality conditions at ``b``.

    With ``g_k = 2 <row_k, y - Psi^T b>`` the conditions are
    ``g_k = beta * w_k * sign(b_k)`` on the support and ``|g_k| <= beta * w_k``
    elsewhere. ``weights`` defaults to all ones (the plain objective); pass
    ``LassoSolution.penalty_weights`` to certify a standardized solve.
    """
    psi = _design_array(design)
    y = np.asarray(target, dtype=float)
    b = np.asarray(b, dtype=float)
    if psi.ndim != 2 or y.shape != (psi.shape[1],) or b.shape != (psi.shape[0],):
        raise ValueError("shape mismatch between design, target and coefficients")
    if not beta > 0:
        raise ValueError("kkt_violation needs beta > 0")
    w = np.ones_like(b) if weights is None else np.asarray(weights, dtype=float)
    g = 2.0 * (psi @ (y - psi.T @ b))
    lam = beta * w
    on = b != 0
    viol = np.where(on, np.abs(g - lam * np.sign(b)), np.maximum(0.0, np.abs(g) - lam))
    return float(viol.max()) if viol.size else 0.0
