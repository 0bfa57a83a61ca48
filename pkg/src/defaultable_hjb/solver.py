"""Backward-in-time solver for the certainty-equivalent HJB equation.

Three modes share one Crank-Nicolson / Newton stepper on a uniform
(time x space) grid:

* full      -- the semilinear equation with the product-log source,
* local     -- the mollified equation with zero lateral Dirichlet data,
* protected -- the protected-market equation driven by an insurance
               rate field, terminal value zero.

The nonlinear source is treated fully implicitly; the Newton Jacobian is
tridiagonal, with the product-log derivatives obtained from the identity
y * theta'(y) * (1 + theta(y)) = theta(y).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import backends
from .lambertw import theta_of_log
from .model import ClaimSpec, LocalizationSpec, ModelSpec, Preferences


class NewtonDivergence(RuntimeError):
    """Newton failed to converge at a time step (grid too coarse/too wide)."""

    def __init__(self, step_index: int, residual_norm: float):
        self.step_index = step_index
        self.residual_norm = residual_norm
        super().__init__(
            f"Newton diverged at time step {step_index}: "
            f"residual {residual_norm:.3e}")


@dataclass(frozen=True)
class GridSpec:
    x_min: float
    x_max: float
    n_space: int
    n_time: int
    t_start: float = 0.0
    t_end: float = 1.0

    def __post_init__(self):
        if not self.x_min < self.x_max:
            raise ValueError("x_min must be below x_max")
        if self.n_space < 16 or self.n_time < 16:
            raise ValueError("need at least 16 space and time intervals")
        if not 0 <= self.t_start < self.t_end:
            raise ValueError("need 0 <= t_start < t_end")

    @property
    def xs(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.n_space + 1)

    @property
    def ts(self) -> np.ndarray:
        return np.linspace(self.t_start, self.t_end, self.n_time + 1)

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.n_space

    @property
    def dt(self) -> float:
        return (self.t_end - self.t_start) / self.n_time


@dataclass(frozen=True)
class SolverOptions:
    newton_tol: float = 1e-10
    newton_max_iter: int = 30
    scheme: str = "crank-nicolson"  # or "backward-euler"
    boundary: str = "extrapolation"  # or "neumann", "dirichlet"

    def __post_init__(self):
        if self.newton_tol <= 0:
            raise ValueError("newton_tol must be positive")
        if self.scheme not in ("crank-nicolson", "backward-euler"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.boundary not in ("extrapolation", "neumann", "dirichlet"):
            raise ValueError(f"unknown boundary {self.boundary!r}")


def central_gradient(values: np.ndarray, dx: float) -> np.ndarray:
    """Row-wise spatial gradient: central in the interior, one-sided at edges."""
    grad = np.empty_like(values)
    grad[..., 1:-1] = (values[..., 2:] - values[..., :-2]) / (2.0 * dx)
    grad[..., 0] = (values[..., 1] - values[..., 0]) / dx
    grad[..., -1] = (values[..., -1] - values[..., -2]) / dx
    return grad


def bilinear_interp(ts: np.ndarray, xs: np.ndarray, values: np.ndarray,
                    t: float, x: np.ndarray) -> np.ndarray:
    """Bilinear lookup in (t, x), clamped to the grid edges."""
    x = np.asarray(x, dtype=float)
    t = min(max(float(t), ts[0]), ts[-1])
    i = min(np.searchsorted(ts, t, side="right") - 1, len(ts) - 2)
    i = max(i, 0)
    wt = (t - ts[i]) / (ts[i + 1] - ts[i])
    xc = np.clip(x, xs[0], xs[-1])
    j = np.clip(np.searchsorted(xs, xc, side="right") - 1, 0, len(xs) - 2)
    wx = (xc - xs[j]) / (xs[j + 1] - xs[j])
    row0 = values[i, j] * (1 - wx) + values[i, j + 1] * wx
    row1 = values[i + 1, j] * (1 - wx) + values[i + 1, j + 1] * wx
    return row0 * (1 - wt) + row1 * wt


@dataclass
class Surface:
    """Certainty equivalent on the grid, together with its spatial gradient."""

    grid: GridSpec
    values: np.ndarray  # (n_time+1, n_space+1); last row = terminal data
    gradient: np.ndarray = field(default=None)
    mode: str = "full"  # "full" | "local" | "protected"
    chi: Optional[np.ndarray] = None          # local mode cutoff on the x nodes
    rate_field: Optional[np.ndarray] = None   # protected mode insurance rate
    boundary: str = "extrapolation"

    def __post_init__(self):
        if self.gradient is None:
            self.gradient = central_gradient(self.values, self.grid.dx)

    def at(self, t: float, x) -> np.ndarray:
        return bilinear_interp(self.grid.ts, self.grid.xs, self.values, t, x)

    def gradient_at(self, t: float, x) -> np.ndarray:
        return bilinear_interp(self.grid.ts, self.grid.xs, self.gradient, t, x)

    def to_csv(self, path, header_lines: Optional[list[str]] = None) -> None:
        """Header row of x nodes, one row per time node, 17 significant digits."""
        with open(path, "w", newline="\n") as fh:
            for line in header_lines or []:
                fh.write(f"# {line}\n")
            fh.write("t," + ",".join(f"{x:.17g}" for x in self.grid.xs) + "\n")
            for t, row in zip(self.grid.ts, self.values):
                fh.write(f"{t:.17g}," + ",".join(f"{v:.17g}" for v in row) + "\n")


class _Coeffs:
    """Model coefficients sampled once on the spatial nodes."""

    def __init__(self, m: ModelSpec, xs: np.ndarray, alpha: float):
        # grid endpoints may sit on the closure of the open domain
        if np.any(xs < m.domain.lower) or np.any(xs > m.domain.upper):
            raise ValueError("grid leaves the model domain")
        self.xs = xs
        self.b = np.asarray(m.b(xs), dtype=float)
        self.A = np.asarray(m.A(xs), dtype=float)
        self.mu = np.asarray(m.mu(xs), dtype=float)
        self.sig = np.asarray(m.sigma(xs), dtype=float)
        self.gam = np.asarray(m.gamma(xs), dtype=float)
        rho = np.asarray(m.rho(xs), dtype=float)
        if np.any(self.A <= 0) or np.any(self.sig <= 0) or np.any(self.gam <= 0):
            raise ValueError("A, sigma, gamma must be positive on the grid")
        if np.any(np.abs(rho) > 1 + 1e-14):
            raise ValueError("rho must lie in [-1, 1]")
        self.rho = rho
        self.s2 = self.sig ** 2
        self.m_ratio = self.mu / self.s2
        self.g_ratio = self.gam / self.s2
        self.log_g_ratio = np.log(self.g_ratio)
        # gradient loading (alpha / sigma) * a * rho
        self.c = alpha * np.sqrt(self.A) * rho / self.sig
        self.alpha = alpha


def _source_full(coef: _Coeffs, G, Gx, chi):
    """Nonlinear source and its (G, Gx) derivatives for the full/local modes."""
    al = coef.alpha
    xt = coef.m_ratio - coef.c * Gx
    th = theta_of_log(coef.log_g_ratio + xt + al * G)
    bracket = 2.0 * coef.g_ratio + xt * xt - th * th - 2.0 * th
    scale = coef.s2 * chi / (2.0 * al)
    N = -0.5 * al * coef.A * Gx * Gx + scale * bracket
    dG = -coef.s2 * chi * th
    dGx = -al * coef.A * Gx - (coef.s2 * chi / al) * coef.c * (xt - th)
    return N, dG, dGx


def _source_protected(coef: _Coeffs, G, Gx, f_row):
    al = coef.alpha
    xt = (coef.mu - f_row) / coef.s2 - coef.c * Gx
    eg = np.exp(al * G)
    N = (-0.5 * al * coef.A * Gx * Gx
         + (coef.s2 / (2.0 * al)) * (2.0 * coef.g_ratio * (1.0 - eg) + xt * xt))
    dG = -coef.gam * eg
    dGx = -al * coef.A * Gx - (coef.s2 / al) * coef.c * xt
    return N, dG, dGx


def _spatial_operator(coef: _Coeffs, G: np.ndarray, dx: float, boundary: str,
                      chi=None, f_row=None, protected=False,
                      want_jacobian=True):
    """F(G) = (1/2) A G_xx + b G_x + N(G, G_x) with the boundary closure.

    Returns (F, (sub, diag, sup)) where the tridiagonal block is dF/dG,
    or (F, None) when want_jacobian is False.
    """
    n = G.shape[0]
    Gx = np.empty(n)
    Gx[1:-1] = (G[2:] - G[:-2]) / (2.0 * dx)
    if boundary == "neumann":
        Gx[0] = 0.0
        Gx[-1] = 0.0
    else:  # extrapolation or dirichlet (edge rows are overwritten for dirichlet)
        Gx[0] = (G[1] - G[0]) / dx
        Gx[-1] = (G[-1] - G[-2]) / dx
    Gxx = np.zeros(n)
    Gxx[1:-1] = (G[2:] - 2.0 * G[1:-1] + G[:-2]) / (dx * dx)
    if boundary == "neumann":
        Gxx[0] = 2.0 * (G[1] - G[0]) / (dx * dx)
        Gxx[-1] = 2.0 * (G[-2] - G[-1]) / (dx * dx)
    # extrapolation: zero second derivative at the edges (Gxx stays 0)

    if protected:
        N, nG, nGx = _source_protected(coef, G, Gx, f_row)
    else:
        N, nG, nGx = _source_full(coef, G, Gx, chi)

    F = 0.5 * coef.A * Gxx + coef.b * Gx + N
    if not want_jacobian:
        return F, None

    sub = np.zeros(n - 1)
    diag = np.zeros(n)
    sup = np.zeros(n - 1)
    # interior rows
    Ai = coef.A[1:-1]
    bi = coef.b[1:-1]
    diag[1:-1] = -Ai / dx ** 2 + nG[1:-1]
    sub[:-1] = 0.5 * Ai / dx ** 2 - (bi + nGx[1:-1]) / (2.0 * dx)
    sup[1:] = 0.5 * Ai / dx ** 2 + (bi + nGx[1:-1]) / (2.0 * dx)
    # boundary rows
    if boundary == "neumann":
        diag[0] = -coef.A[0] / dx ** 2 + nG[0]
        sup[0] = coef.A[0] / dx ** 2
        diag[-1] = -coef.A[-1] / dx ** 2 + nG[-1]
        sub[-1] = coef.A[-1] / dx ** 2
    else:
        diag[0] = -(coef.b[0] + nGx[0]) / dx + nG[0]
        sup[0] = (coef.b[0] + nGx[0]) / dx
        diag[-1] = (coef.b[-1] + nGx[-1]) / dx + nG[-1]
        sub[-1] = -(coef.b[-1] + nGx[-1]) / dx
    return F, (sub, diag, sup)


def _step_residual(U, G_next, F_U, F_next, w_impl, w_expl, dirichlet):
    R = U - G_next - w_impl * F_U - w_expl * F_next
    if dirichlet:
        R[0] = U[0]
        R[-1] = U[-1]
    return R


def _solve_step(coef: _Coeffs, G_next: np.ndarray, dx: float, dt: float,
                opt: SolverOptions, step_index: int, chi=None,
                f_row=None, f_row_next=None, protected=False) -> np.ndarray:
    dirichlet = opt.boundary == "dirichlet"
    if opt.scheme == "crank-nicolson":
        w_impl = w_expl = 0.5 * dt
    else:
        w_impl, w_expl = dt, 0.0
    if w_expl > 0.0:
        F_next, _ = _spatial_operator(coef, G_next, dx, opt.boundary, chi=chi,
                                      f_row=f_row_next, protected=protected,
                                      want_jacobian=False)
    else:
        F_next = 0.0

    U = G_next.copy()
    if dirichlet:
        U[0] = 0.0
        U[-1] = 0.0
    for _ in range(opt.newton_max_iter):
        F_U, (sub, diag, sup) = _spatial_operator(
            coef, U, dx, opt.boundary, chi=chi, f_row=f_row,
            protected=protected)
        R = _step_residual(U, G_next, F_U, F_next, w_impl, w_expl, dirichlet)
        rnorm = float(np.max(np.abs(R)))
        if rnorm <= opt.newton_tol:
            return U
        jd = 1.0 - w_impl * diag
        jsub = -w_impl * sub
        jsup = -w_impl * sup
        if dirichlet:
            jd[0] = jd[-1] = 1.0
            jsup[0] = 0.0
            jsub[-1] = 0.0
        delta = backends.tridiag_solve(jsub, jd, jsup, -R)
        # damped line search: halve up to 10 times on residual increase
        s = 1.0
        for _ in range(10):
            trial = U + s * delta
            F_t, _ = _spatial_operator(coef, trial, dx, opt.boundary, chi=chi,
                                       f_row=f_row, protected=protected,
                                       want_jacobian=False)
            R_t = _step_residual(trial, G_next, F_t, F_next, w_impl, w_expl,
                                 dirichlet)
            if float(np.max(np.abs(R_t))) < rnorm:
                break
            s *= 0.5
        U = U + s * delta
    F_U, _ = _spatial_operator(coef, U, dx, opt.boundary, chi=chi, f_row=f_row,
                               protected=protected, want_jacobian=False)
    R = _step_residual(U, G_next, F_U, F_next, w_impl, w_expl, dirichlet)
    rnorm = float(np.max(np.abs(R)))
    if rnorm > opt.newton_tol:
        raise NewtonDivergence(step_index, rnorm)
    return U


def hjb_rhs(m: ModelSpec, g: float, gx: float, x: float, alpha: float) -> float:
    """Pointwise zeroth-order + gradient nonlinearity of the full equation."""
    coef = _Coeffs(m, np.atleast_1d(np.asarray(x, dtype=float)), alpha)
    N, _, _ = _source_full(coef, np.atleast_1d(float(g)),
                           np.atleast_1d(float(gx)), np.ones(1))
    return float(N[0])


def solve_full(m: ModelSpec, c: ClaimSpec, pref: Preferences, grid: GridSpec,
               opt: SolverOptions = SolverOptions()) -> Surface:
    """Solve the full equation backward from G(T, .) = q * phi."""
    xs = grid.xs
    coef = _Coeffs(m, xs, pref.alpha)
    chi = np.ones_like(xs)
    values = np.empty((grid.n_time + 1, grid.n_space + 1))
    values[-1] = c.q * np.asarray(c.phi(xs), dtype=float)
    for i in range(grid.n_time - 1, -1, -1):
        values[i] = _solve_step(coef, values[i + 1], grid.dx, grid.dt, opt,
                                step_index=i, chi=chi)
    return Surface(grid=grid, values=values, mode="full", boundary=opt.boundary)


def solve_local(m: ModelSpec, c: ClaimSpec, pref: Preferences,
                loc: LocalizationSpec, grid: GridSpec,
                opt: SolverOptions = SolverOptions()) -> Surface:
    """Solve the mollified equation on E_n with zero Dirichlet lateral data."""
    if not (np.isclose(grid.x_min, loc.outer[0]) and
            np.isclose(grid.x_max, loc.outer[1])):
        raise ValueError("grid must coincide with the localization interval E_n")
    opt = SolverOptions(newton_tol=opt.newton_tol,
                        newton_max_iter=opt.newton_max_iter,
                        scheme=opt.scheme, boundary="dirichlet")
    xs = grid.xs
    coef = _Coeffs(m, xs, pref.alpha)
    chi = np.asarray(loc.chi(xs), dtype=float)
    values = np.empty((grid.n_time + 1, grid.n_space + 1))
    values[-1] = chi * c.q * np.asarray(c.phi(xs), dtype=float)
    for i in range(grid.n_time - 1, -1, -1):
        values[i] = _solve_step(coef, values[i + 1], grid.dx, grid.dt, opt,
                                step_index=i, chi=chi)
    return Surface(grid=grid, values=values, mode="local", chi=chi,
                   boundary="dirichlet")


def solve_local_chi(m: ModelSpec, c: ClaimSpec, pref: Preferences,
                    chi_values: np.ndarray, grid: GridSpec,
                    opt: SolverOptions = SolverOptions()) -> Surface:
    """Local-mode solve with an explicit cutoff sampled on the grid nodes."""
    xs = grid.xs
    coef = _Coeffs(m, xs, pref.alpha)
    chi = np.asarray(chi_values, dtype=float)
    opt = SolverOptions(newton_tol=opt.newton_tol,
                        newton_max_iter=opt.newton_max_iter,
                        scheme=opt.scheme, boundary="dirichlet")
    values = np.empty((grid.n_time + 1, grid.n_space + 1))
    values[-1] = chi * c.q * np.asarray(c.phi(xs), dtype=float)
    for i in range(grid.n_time - 1, -1, -1):
        values[i] = _solve_step(coef, values[i + 1], grid.dx, grid.dt, opt,
                                step_index=i, chi=chi)
    return Surface(grid=grid, values=values, mode="local", chi=chi,
                   boundary="dirichlet")


def solve_protected(m: ModelSpec, pref: Preferences, f_surface: np.ndarray,
                    grid: GridSpec,
                    opt: SolverOptions = SolverOptions()) -> Surface:
    """Solve the protected-market equation with terminal value zero.

    f_surface is the insurance rate on the same (time x space) grid.
    """
    f_surface = np.asarray(f_surface, dtype=float)
    if f_surface.shape != (grid.n_time + 1, grid.n_space + 1):
        raise ValueError("rate field not aligned with the grid")
    xs = grid.xs
    coef = _Coeffs(m, xs, pref.alpha)
    values = np.empty((grid.n_time + 1, grid.n_space + 1))
    values[-1] = 0.0
    for i in range(grid.n_time - 1, -1, -1):
        values[i] = _solve_step(coef, values[i + 1], grid.dx, grid.dt, opt,
                                step_index=i, protected=True,
                                f_row=f_surface[i], f_row_next=f_surface[i + 1])
    return Surface(grid=grid, values=values, mode="protected",
                   rate_field=f_surface, boundary=opt.boundary)


def residual(surface: Surface, m: ModelSpec, pref: Preferences,
             opt: SolverOptions = SolverOptions(),
             rate_field: Optional[np.ndarray] = None) -> np.ndarray:
    """Discrete stepping residual of the surface, one row per time step.

    Uses exactly the operators the stepper drives to newton_tol; a
    converged solve therefore has max-norm residual <= 10 * newton_tol.
    For protected-mode evaluation of a full-mode surface, pass rate_field.
    """
    grid = surface.grid
    coef = _Coeffs(m, grid.xs, pref.alpha)
    protected = surface.mode == "protected" or rate_field is not None
    chi = surface.chi if surface.chi is not None else np.ones_like(grid.xs)
    f_field = rate_field if rate_field is not None else surface.rate_field
    boundary = surface.boundary
    dirichlet = boundary == "dirichlet"
    if opt.scheme == "crank-nicolson":
        w_impl = w_expl = 0.5 * grid.dt
    else:
        w_impl, w_expl = grid.dt, 0.0
    out = np.empty((grid.n_time, grid.n_space + 1))
    for i in range(grid.n_time):
        f_row = f_field[i] if protected else None
        f_next = f_field[i + 1] if protected else None
        F_i, _ = _spatial_operator(coef, surface.values[i], grid.dx, boundary,
                                   chi=chi, f_row=f_row, protected=protected,
                                   want_jacobian=False)
        if w_expl > 0:
            F_n, _ = _spatial_operator(coef, surface.values[i + 1], grid.dx,
                                       boundary, chi=chi, f_row=f_next,
                                       protected=protected, want_jacobian=False)
        else:
            F_n = 0.0
        out[i] = _step_residual(surface.values[i], surface.values[i + 1],
                                F_i, F_n, w_impl, w_expl, dirichlet)
    return out


def default_grid(m: ModelSpec, pref: Preferences, n_space: int = 200,
                 n_time: int = 200, t_start: float = 0.0) -> GridSpec:
    """Grid on the model's default truncation interval, ending at the horizon."""
    from .model import default_truncation
    lo, hi = default_truncation(m)
    return GridSpec(x_min=lo, x_max=hi, n_space=n_space, n_time=n_time,
                    t_start=t_start, t_end=pref.horizon_T)
