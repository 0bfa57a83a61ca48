"""Numeric kernel backends.

Every hot kernel exists twice: a vectorised pure-numpy implementation
(``*_np``) and a numba-jitted loop implementation (``*_nb``).  The public
names are bound to the numba versions when numba imports cleanly and the
environment variable ``DEFAULTABLE_HJB_NUMBA`` is not set to a falsy value
(``0``, ``false``, ``no``, ``off``); otherwise the numpy versions are used.

``benchmarks/bench_backends.py`` times both paths side by side.
"""

from __future__ import annotations

import os

import numpy as np
from scipy.linalg import solve_banded

_THETA_TOL = 1e-12
_MAX_HALLEY = 50


def _flag_enabled() -> bool:
    flag = os.environ.get("DEFAULTABLE_HJB_NUMBA", "1").strip().lower()
    return flag not in ("0", "false", "no", "off")


# ---------------------------------------------------------------------------
# pure-numpy implementations
# ---------------------------------------------------------------------------

def theta_array_np(y: np.ndarray) -> np.ndarray:
    """Solve w * exp(w) = y elementwise for y > 0 (principal Lambert-W).

    Halley iteration; initial guess y for y < 1, log-based for y >= e,
    with a bisection fallback for any straggler.
    """
    y = np.asarray(y, dtype=np.float64)
    scalar = y.ndim == 0
    y = np.atleast_1d(y)
    w = np.where(y < 1.0, y, 0.0)
    mid = (y >= 1.0) & (y < np.e)
    if mid.any():
        w = np.where(mid, np.log1p(y), w)
    big = y >= np.e
    if big.any():
        ly = np.log(np.where(big, y, np.e))
        w = np.where(big, ly - np.log(ly), w)
    tol = _THETA_TOL * np.maximum(1.0, y)
    active = np.ones(y.shape, dtype=bool)
    for _ in range(_MAX_HALLEY):
        ew = np.exp(w)
        f = w * ew - y
        active = np.abs(f) > tol
        if not active.any():
            break
        denom = ew * (w + 1.0) - f * (w + 2.0) / (2.0 * w + 2.0)
        w = np.where(active, w - f / denom, w)
    else:
        # bisection fallback, guaranteed bracket [0, log(y)+1] (or [0,1])
        bad = np.abs(w * np.exp(w) - y) > tol
        for i in np.flatnonzero(bad):
            lo, hi = 0.0, max(1.0, np.log(y[i]) + 1.0)
            for _ in range(200):
                mid_w = 0.5 * (lo + hi)
                if mid_w * np.exp(mid_w) < y[i]:
                    lo = mid_w
                else:
                    hi = mid_w
            w[i] = 0.5 * (lo + hi)
    return w[0] if scalar else w


def theta_from_log_array_np(u: np.ndarray) -> np.ndarray:
    """Solve w + log(w) = u elementwise, i.e. theta(exp(u)) without exp(u).

    Valid for u >= 1 (used when exp(u) would overflow).
    """
    u = np.asarray(u, dtype=np.float64)
    scalar = u.ndim == 0
    u = np.atleast_1d(u)
    w = np.maximum(u - np.log(np.maximum(u, 1.0)), 0.5)
    for _ in range(_MAX_HALLEY):
        f = w + np.log(w) - u
        if np.all(np.abs(f) <= 1e-13 * np.maximum(1.0, np.abs(u))):
            break
        w = w - f * w / (w + 1.0)
    return w[0] if scalar else w


def tridiag_solve_np(dl: np.ndarray, d: np.ndarray, du: np.ndarray,
                     rhs: np.ndarray) -> np.ndarray:
    """Solve a tridiagonal system; dl/du are the sub/super diagonals (len n-1)."""
    n = d.shape[0]
    ab = np.zeros((3, n))
    ab[0, 1:] = du
    ab[1, :] = d
    ab[2, :-1] = dl
    return solve_banded((1, 1), ab, rhs)


def cir_paths_np(x0: float, kappa: float, theta_lr: float, xi: float,
                 dt: float, normals: np.ndarray) -> np.ndarray:
    """Full-truncation Euler paths of dX = kappa(theta - X)dt + xi sqrt(X) dW.

    Returns the floored process max(x_tilde, 0); the auxiliary x_tilde is
    propagated internally.
    """
    n_paths, n_steps = normals.shape
    sq = np.sqrt(dt)
    out = np.empty((n_paths, n_steps + 1))
    out[:, 0] = x0
    xt = np.full(n_paths, float(x0))
    for k in range(n_steps):
        xp = np.maximum(xt, 0.0)
        xt = xt + kappa * (theta_lr - xp) * dt + xi * np.sqrt(xp) * sq * normals[:, k]
        out[:, k + 1] = np.maximum(xt, 0.0)
    return out


def ou_paths_np(x0: float, b_mr: float, dt: float,
                normals: np.ndarray) -> np.ndarray:
    """Exact Gaussian transition paths of dX = -b X dt + dW."""
    n_paths, n_steps = normals.shape
    if b_mr == 0.0:
        decay = 1.0
        sd = np.sqrt(dt)
    else:
        decay = np.exp(-b_mr * dt)
        sd = np.sqrt((1.0 - decay * decay) / (2.0 * b_mr))
    out = np.empty((n_paths, n_steps + 1))
    out[:, 0] = x0
    for k in range(n_steps):
        out[:, k + 1] = decay * out[:, k] + sd * normals[:, k]
    return out


def crossing_times_np(intensity: np.ndarray, dt: float,
                      exp_draws: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """First time the trapezoidal cumulative intensity crosses exp_draws.

    Returns (delta, step): delta is the crossing time offset (inf if no
    crossing), step the index of the step containing the crossing
    (n_steps if none).
    """
    n_paths, n_cols = intensity.shape
    n_steps = n_cols - 1
    inc = 0.5 * (intensity[:, 1:] + intensity[:, :-1]) * dt
    cum = np.zeros((n_paths, n_cols))
    np.cumsum(inc, axis=1, out=cum[:, 1:])
    crossed = cum[:, -1] >= exp_draws
    idx = np.argmax(cum >= exp_draws[:, None], axis=1)  # first col with cum >= e
    step = np.where(crossed, np.maximum(idx - 1, 0), n_steps)
    delta = np.full(n_paths, np.inf)
    if crossed.any():
        rows = np.flatnonzero(crossed)
        k = step[rows]
        lo = cum[rows, k]
        hi = cum[rows, k + 1]
        denom = np.where(hi > lo, hi - lo, 1.0)
        frac = np.clip((exp_draws[rows] - lo) / denom, 0.0, 1.0)
        delta[rows] = dt * (k + frac)
    return delta, step


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    numba = None
    HAVE_NUMBA = False

if HAVE_NUMBA:

    @numba.njit(cache=True)
    def _theta_scalar_nb(y: float) -> float:
        if y < 1.0:
            w = y
        elif y < np.e:
            w = np.log1p(y)
        else:
            ly = np.log(y)
            w = ly - np.log(ly)
        tol = _THETA_TOL * max(1.0, y)
        for _ in range(_MAX_HALLEY):
            ew = np.exp(w)
            f = w * ew - y
            if abs(f) <= tol:
                return w
            w = w - f / (ew * (w + 1.0) - f * (w + 2.0) / (2.0 * w + 2.0))
        if abs(w * np.exp(w) - y) > tol:
            lo = 0.0
            hi = max(1.0, np.log(y) + 1.0)
            for _ in range(200):
                mid = 0.5 * (lo + hi)
                if mid * np.exp(mid) < y:
                    lo = mid
                else:
                    hi = mid
            w = 0.5 * (lo + hi)
        return w

    @numba.njit(cache=True)
    def _theta_array_nb(y: np.ndarray) -> np.ndarray:
        out = np.empty(y.shape[0])
        for i in range(y.shape[0]):
            out[i] = _theta_scalar_nb(y[i])
        return out

    def theta_array_nb(y):
        y = np.asarray(y, dtype=np.float64)
        if y.ndim == 0:
            return _theta_scalar_nb(float(y))
        return _theta_array_nb(np.ascontiguousarray(y.ravel())).reshape(y.shape)

    @numba.njit(cache=True)
    def _theta_from_log_scalar_nb(u: float) -> float:
        w = max(u - np.log(max(u, 1.0)), 0.5)
        tol = 1e-13 * max(1.0, abs(u))
        for _ in range(_MAX_HALLEY):
            f = w + np.log(w) - u
            if abs(f) <= tol:
                return w
            w = w - f * w / (w + 1.0)
        return w

    @numba.njit(cache=True)
    def _theta_from_log_array_nb(u: np.ndarray) -> np.ndarray:
        out = np.empty(u.shape[0])
        for i in range(u.shape[0]):
            out[i] = _theta_from_log_scalar_nb(u[i])
        return out

    def theta_from_log_array_nb(u):
        u = np.asarray(u, dtype=np.float64)
        if u.ndim == 0:
            return _theta_from_log_scalar_nb(float(u))
        return _theta_from_log_array_nb(np.ascontiguousarray(u.ravel())).reshape(u.shape)

    @numba.njit(cache=True)
    def tridiag_solve_nb(dl, d, du, rhs):
        n = d.shape[0]
        cp = np.empty(n)
        dp = np.empty(n)
        cp[0] = du[0] / d[0] if n > 1 else 0.0
        dp[0] = rhs[0] / d[0]
        for i in range(1, n):
            m = d[i] - dl[i - 1] * cp[i - 1]
            cp[i] = du[i] / m if i < n - 1 else 0.0
            dp[i] = (rhs[i] - dl[i - 1] * dp[i - 1]) / m
        x = np.empty(n)
        x[n - 1] = dp[n - 1]
        for i in range(n - 2, -1, -1):
            x[i] = dp[i] - cp[i] * x[i + 1]
        return x

    @numba.njit(cache=True)
    def cir_paths_nb(x0, kappa, theta_lr, xi, dt, normals):
        n_paths, n_steps = normals.shape
        sq = np.sqrt(dt)
        out = np.empty((n_paths, n_steps + 1))
        for p in range(n_paths):
            xt = x0
            out[p, 0] = x0
            for k in range(n_steps):
                xp = max(xt, 0.0)
                xt = xt + kappa * (theta_lr - xp) * dt + xi * np.sqrt(xp) * sq * normals[p, k]
                out[p, k + 1] = max(xt, 0.0)
        return out

    @numba.njit(cache=True)
    def ou_paths_nb(x0, b_mr, dt, normals):
        n_paths, n_steps = normals.shape
        if b_mr == 0.0:
            decay = 1.0
            sd = np.sqrt(dt)
        else:
            decay = np.exp(-b_mr * dt)
            sd = np.sqrt((1.0 - decay * decay) / (2.0 * b_mr))
        out = np.empty((n_paths, n_steps + 1))
        for p in range(n_paths):
            out[p, 0] = x0
            for k in range(n_steps):
                out[p, k + 1] = decay * out[p, k] + sd * normals[p, k]
        return out

    @numba.njit(cache=True)
    def crossing_times_nb(intensity, dt, exp_draws):
        n_paths, n_cols = intensity.shape
        n_steps = n_cols - 1
        delta = np.full(n_paths, np.inf)
        step = np.full(n_paths, n_steps, dtype=np.int64)
        for p in range(n_paths):
            e = exp_draws[p]
            cum = 0.0
            for k in range(n_steps):
                inc = 0.5 * (intensity[p, k] + intensity[p, k + 1]) * dt
                nxt = cum + inc
                if nxt >= e:
                    denom = inc if inc > 0.0 else 1.0
                    frac = (e - cum) / denom
                    if frac < 0.0:
                        frac = 0.0
                    elif frac > 1.0:
                        frac = 1.0
                    delta[p] = dt * (k + frac)
                    step[p] = k
                    break
                cum = nxt
        return delta, step

else:  # pragma: no cover
    theta_array_nb = None
    theta_from_log_array_nb = None
    tridiag_solve_nb = None
    cir_paths_nb = None
    ou_paths_nb = None
    crossing_times_nb = None


USE_NUMBA = HAVE_NUMBA and _flag_enabled()

if USE_NUMBA:
    theta_array = theta_array_nb
    theta_from_log_array = theta_from_log_array_nb
    tridiag_solve = tridiag_solve_nb
    cir_paths = cir_paths_nb
    ou_paths = ou_paths_nb
    crossing_times = crossing_times_nb
else:
    theta_array = theta_array_np
    theta_from_log_array = theta_from_log_array_np
    tridiag_solve = tridiag_solve_np
    cir_paths = cir_paths_np
    ou_paths = ou_paths_np
    crossing_times = crossing_times_np


def backend_name() -> str:
    return "numba" if USE_NUMBA else "numpy"
