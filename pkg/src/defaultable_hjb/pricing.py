"""Economic outputs derived from solved certainty-equivalent surfaces.

All operations are nodewise maps over a Surface: the optimal dollar
position in the risky asset, defaultable-bond indifference prices, the
dynamic default-insurance rate in its two equivalent algebraic forms,
the short-horizon approximation of the rate, and the theoretical upper
bound and sign indicator of the rate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lambertw import theta_of_log
from .model import ModelSpec, Preferences
from .solver import Surface


class RadicandNegative(RuntimeError):
    """The insurance-rate square root went negative beyond rounding noise."""

    def __init__(self, node_index, value: float):
        self.node_index = node_index
        self.value = value
        super().__init__(
            f"insurance-rate radicand {value:.3e} at node {node_index}; "
            "the surface is inconsistent (Newton likely did not converge)")


# radicand values in [-_RADICAND_CLAMP, 0) are rounding noise and clamped to 0
_RADICAND_CLAMP = 1e-10


@dataclass
class Policy:
    """Optimal dollar position in the risky asset on the surface grid."""

    values: np.ndarray  # (n_time+1, n_space+1)

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise ValueError("policy must be finite on the grid")


@dataclass
class PricingResult:
    indiff_price: np.ndarray
    insurance_rate: np.ndarray
    upper_bound: np.ndarray
    physical_intensity: np.ndarray
    policy: Policy
    protected_policy: np.ndarray


def _node_fields(G: Surface, m: ModelSpec, pref: Preferences):
    """Per-node x-tilde, theta, and coefficient arrays shared by the maps."""
    xs = G.grid.xs
    mu = np.asarray(m.mu(xs), dtype=float)
    sig = np.asarray(m.sigma(xs), dtype=float)
    gam = np.asarray(m.gamma(xs), dtype=float)
    rho = np.asarray(m.rho(xs), dtype=float)
    a = np.asarray(m.a(xs), dtype=float)
    s2 = sig ** 2
    al = pref.alpha
    grad_term = (al / sig) * a * rho * G.gradient
    x_tilde = mu / s2 - grad_term
    log_y = np.log(gam / s2) + al * G.values
    theta_g = theta_of_log(log_y + x_tilde)
    return x_tilde, theta_g, s2, gam, log_y, al


def optimal_policy(G: Surface, m: ModelSpec, pref: Preferences) -> Policy:
    """pi-hat = (x-tilde - theta_G) / alpha, nodewise on the surface grid."""
    x_tilde, theta_g, _, _, _, al = _node_fields(G, m, pref)
    return Policy(values=(x_tilde - theta_g) / al)


def indifference_price(G_q: Surface, G_0: Surface, q: float) -> np.ndarray:
    """Per-unit buyer's price p = (G_q - G_0) / q for a claim with notional q."""
    if q <= 0:
        raise ValueError("notional q must be positive")
    if G_q.values.shape != G_0.values.shape or G_q.grid != G_0.grid:
        raise ValueError("surfaces must share a grid")
    return (G_q.values - G_0.values) / q


def insurance_rate(G: Surface, m: ModelSpec, pref: Preferences) -> np.ndarray:
    """Default-insurance rate, lower branch of the quadratic.

    f = sigma^2 * (x-tilde - sqrt(x-tilde^2 - (theta^2 + 2 theta
    - 2 (gamma/sigma^2) e^{alpha G}))).  The radicand is non-negative in
    exact arithmetic; values below -1e-10 raise RadicandNegative.
    """
    rad, x_tilde, s2 = _radicand(G, m, pref)
    return s2 * (x_tilde - np.sqrt(rad))


def insurance_rate_upper_branch(G: Surface, m: ModelSpec,
                                pref: Preferences) -> np.ndarray:
    """Upper branch f_+ (diagnostic only; a paying insured would be short)."""
    rad, x_tilde, s2 = _radicand(G, m, pref)
    return s2 * (x_tilde + np.sqrt(rad))


def _radicand(G: Surface, m: ModelSpec, pref: Preferences):
    x_tilde, theta_g, s2, gam, log_y, _ = _node_fields(G, m, pref)
    rad = x_tilde ** 2 - (theta_g ** 2 + 2.0 * theta_g - 2.0 * np.exp(log_y))
    bad = rad < -_RADICAND_CLAMP
    if bad.any():
        idx = tuple(int(k[0]) for k in np.nonzero(bad))
        raise RadicandNegative(idx, float(rad[idx]))
    return np.maximum(rad, 0.0), x_tilde, s2


def insurance_rate_h_form(pi_hat: float, y: float):
    """h(l, y) = l + y e^l - sqrt(l^2 + 2y(l e^l + 1 - e^l)); f = sigma^2 h.

    pi_hat is alpha times the dollar position; y = (gamma/sigma^2) e^{alpha G}.
    """
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0):
        raise ValueError("y must be positive")
    l = np.asarray(pi_hat, dtype=float)
    el = np.exp(l)
    rad = l * l + 2.0 * y * (l * el + 1.0 - el)
    return l + y * el - np.sqrt(np.maximum(rad, 0.0))


def insurance_rate_short_horizon(pi_hat_alpha, gamma_over_sigma2):
    """Short-horizon rate f/sigma^2 = h(alpha pi-hat, gamma/sigma^2) (G ~ 0)."""
    return insurance_rate_h_form(pi_hat_alpha, gamma_over_sigma2)


def zero_rate_position(y: float) -> float:
    """The alpha*pi-hat at which the short-horizon rate vanishes:
    l0(y) = log((sqrt(1 + 2y) - 1) / y)."""
    if y <= 0:
        raise ValueError("y must be positive")
    return float(np.log((np.sqrt(1.0 + 2.0 * y) - 1.0) / y))


def insurance_bounds(G: Surface, policy: Policy, m: ModelSpec,
                     pref: Preferences):
    """(upper, sign_indicator) for the insurance rate.

    upper = gamma e^{alpha (G + pi-hat)} is the default intensity under the
    dual measure; the rate equals it exactly where pi-hat = 0.
    sign_indicator = gamma e^{alpha (2 pi-hat + G)} / (2 sigma^2)
    + e^{alpha pi-hat} - 1 shares the sign of the rate.
    """
    xs = G.grid.xs
    gam = np.asarray(m.gamma(xs), dtype=float)
    s2 = np.asarray(m.sigma(xs), dtype=float) ** 2
    al = pref.alpha
    p = policy.values
    upper = gam * np.exp(al * (G.values + p))
    sign_ind = (gam * np.exp(al * (2.0 * p + G.values)) / (2.0 * s2)
                + np.exp(al * p) - 1.0)
    return upper, sign_ind


def protected_policy(G_d: Surface, f: np.ndarray, m: ModelSpec,
                     pref: Preferences) -> np.ndarray:
    """Optimal position with insurance: ((mu - f)/sigma^2 - gradient term)/alpha."""
    xs = G_d.grid.xs
    mu = np.asarray(m.mu(xs), dtype=float)
    sig = np.asarray(m.sigma(xs), dtype=float)
    rho = np.asarray(m.rho(xs), dtype=float)
    a = np.asarray(m.a(xs), dtype=float)
    al = pref.alpha
    grad_term = (al / sig) * a * rho * G_d.gradient
    return ((mu - np.asarray(f, dtype=float)) / sig ** 2 - grad_term) / al


def pricing_result(G_q: Surface, G_0: Surface, q: float, G_d: Surface,
                   m: ModelSpec, pref: Preferences) -> PricingResult:
    """Bundle every pricing output for aligned surfaces."""
    pol = optimal_policy(G_0, m, pref)
    f = insurance_rate(G_0, m, pref)
    upper, _ = insurance_bounds(G_0, pol, m, pref)
    return PricingResult(
        indiff_price=indifference_price(G_q, G_0, q),
        insurance_rate=f,
        upper_bound=upper,
        physical_intensity=np.asarray(m.gamma(G_0.grid.xs), dtype=float),
        policy=pol,
        protected_policy=protected_policy(G_d, f, m, pref),
    )


def short_horizon_curve(y: float = 2.0 / 3.0, lo: float = -2.0,
                        hi: float = 2.0, step: float = 0.01):
    """Rate-vs-position curve at constant gamma/sigma^2 = y.

    Returns (alpha*pi-hat grid, f/sigma^2, upper bound gamma/sigma^2 * e^l)
    with G = 0, suitable for CSV export.
    """
    n = int(round((hi - lo) / step))
    ls = lo + step * np.arange(n + 1)
    curve = insurance_rate_short_horizon(ls, y)
    upper = y * np.exp(ls)
    return ls, curve, upper


def curves_to_csv(path, columns: dict, header_lines=None) -> None:
    """Write named 1-D arrays as CSV columns, 17 significant digits."""
    names = list(columns)
    arrays = [np.asarray(columns[k], dtype=float) for k in names]
    n = len(arrays[0])
    if any(len(a) != n for a in arrays):
        raise ValueError("columns must share a length")
    with open(path, "w", newline="\n") as fh:
        for line in header_lines or []:
            fh.write(f"# {line}\n")
        fh.write(",".join(names) + "\n")
        for i in range(n):
            fh.write(",".join(f"{a[i]:.17g}" for a in arrays) + "\n")
