"""Product-log evaluation on the positive real axis.

``theta(y)`` is the unique positive solution of w * exp(w) = y; it drives
the nonlinearity of the certainty-equivalent PDE.  ``theta_composite``
evaluates the composite term theta((gamma/sigma^2) * exp(mu/sigma^2
+ alpha*f - grad_term)) in an overflow-safe way: for large exponents the
equation w + log(w) = u is solved directly instead of exponentiating.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import backends

# exp overflows double precision near 709; stay clear of it
_LOG_SWITCH_HI = 700.0
# below this, theta(e^u) = e^u * (1 - e^u) to far better than 1e-12 relative
_LOG_SWITCH_LO = -30.0


class ThetaDomainError(ValueError):
    """Raised when theta is evaluated outside (0, inf) or on non-finite input."""


@dataclass(frozen=True)
class ThetaCompositeArgs:
    """Arguments of the composite theta term at a single point."""

    gamma_over_sigma2: float
    mu_over_sigma2: float
    alpha: float
    f_value: float = 0.0
    grad_term: float = 0.0

    def __post_init__(self):
        if not self.gamma_over_sigma2 > 0:
            raise ThetaDomainError("gamma_over_sigma2 must be positive")
        if not self.alpha > 0:
            raise ThetaDomainError("alpha must be positive")


def theta(y):
    """Principal Lambert-W on (0, inf): returns w with w * exp(w) = y.

    Accepts scalars or arrays; relative tolerance is fixed at 1e-12.
    """
    arr = np.asarray(y, dtype=np.float64)
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0.0):
        raise ThetaDomainError("theta requires finite y > 0")
    return backends.theta_array(arr if arr.ndim else float(arr))


def theta_derivative(y):
    """d theta / dy via the identity y * theta'(y) * (1 + theta(y)) = theta(y)."""
    w = theta(y)
    return w / (np.asarray(y, dtype=np.float64) * (1.0 + w))


def theta_of_log(u):
    """theta(exp(u)) for any real u, safe against exp overflow/underflow."""
    arr = np.asarray(u, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ThetaDomainError("theta_of_log requires finite input")
    scalar = arr.ndim == 0
    arr = np.atleast_1d(arr)
    out = np.empty_like(arr)
    hi = arr > _LOG_SWITCH_HI
    lo = arr < _LOG_SWITCH_LO
    mid = ~(hi | lo)
    if hi.any():
        out[hi] = backends.theta_from_log_array(arr[hi])
    if lo.any():
        ey = np.exp(arr[lo])
        out[lo] = ey * (1.0 - ey)
    if mid.any():
        out[mid] = backends.theta_array(np.exp(arr[mid]))
    return out[0] if scalar else out


def theta_composite(gamma_over_sigma2, mu_over_sigma2, alpha,
                    f_value=0.0, grad_term=0.0):
    """Composite theta term theta((g/s2) * exp(m/s2 + alpha*f - grad_term))."""
    g = np.asarray(gamma_over_sigma2, dtype=np.float64)
    pieces = [np.asarray(v, dtype=np.float64)
              for v in (g, mu_over_sigma2, alpha, f_value, grad_term)]
    if not all(np.all(np.isfinite(p)) for p in pieces):
        raise ThetaDomainError("theta_composite requires finite inputs")
    if np.any(g <= 0.0):
        raise ThetaDomainError("gamma_over_sigma2 must be positive")
    if np.any(np.asarray(alpha, dtype=np.float64) <= 0.0):
        raise ThetaDomainError("alpha must be positive")
    u = (np.log(g) + pieces[1] + pieces[2] * pieces[3] - pieces[4])
    return theta_of_log(u)


def theta_composite_args(args: ThetaCompositeArgs):
    """theta_composite from a ThetaCompositeArgs record."""
    return theta_composite(args.gamma_over_sigma2, args.mu_over_sigma2,
                           args.alpha, args.f_value, args.grad_term)
