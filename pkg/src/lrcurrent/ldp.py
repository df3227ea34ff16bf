"""Generating curves, Legendre-Fenchel rate functions and fluctuation bounds."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import minimize_scalar

from .currents import CurrentKernel, Direction, FieldProfile, LatticeSystem
from .operators import fermi_symbol, norm_bound
from .quasifree import CumulantTriple, KernelBasis, MomentFunction, cumulants

FD_STEP = 1e-3
FD_STEP_THIRD = 1e-2
DEGENERATE_CURVATURE = 1e-8


def default_s_grid(n: int = 81, s_max: float = 2.0) -> np.ndarray:
    if n % 2 == 0:
        raise ValueError("s-grid needs an odd number of points so that it contains 0")
    grid = np.linspace(-s_max, s_max, n)
    grid[n // 2] = 0.0
    return grid


def _central(fun, s: float, h: float, order: int) -> float:
    if order == 1:
        return (fun(s + h) - fun(s - h)) / (2.0 * h)
    if order == 2:
        return (fun(s + h) - 2.0 * fun(s) + fun(s - h)) / h**2
    if order == 3:
        return (fun(s + 2 * h) - 2.0 * fun(s + h) + 2.0 * fun(s - h) - fun(s - 2 * h)) / (2.0 * h**3)
    raise ValueError("supported derivative orders are 1, 2, 3")


def richardson_derivative(fun, s: float, order: int, h: float | None = None) -> float:
    """Central difference at h and h/2 combined to cancel the h^2 error term."""
    if h is None:
        h = FD_STEP_THIRD if order == 3 else FD_STEP
    coarse = _central(fun, s, h, order)
    fine = _central(fun, s, h / 2.0, order)
    return (4.0 * fine - coarse) / 3.0


@dataclass(frozen=True)
class Instance:
    """Everything one disorder sample contributes: lattice, kernel K and Gibbs symbol."""

    system: LatticeSystem
    kernel: CurrentKernel
    beta: float
    symbol: np.ndarray = field(repr=False)
    basis: KernelBasis = field(repr=False)
    moment: MomentFunction = field(repr=False)

    @property
    def volume(self) -> int:
        return self.kernel.volume

    def J(self, s: float) -> float:
        """Finite-volume generating function ln state(e^{s<A,KA>}) / |Lambda_L|."""
        return self.moment(s) / self.volume if s != 0 else 0.0

    def current(self) -> float:
        return float(np.einsum("ij,ji->", self.symbol, self.kernel.matrix).real) / self.volume

    def cumulants(self, s: float = 0.0) -> CumulantTriple:
        return cumulants(self.basis.function(self.basis.values), self.system.dec, self.beta, s)


def make_instance(system: LatticeSystem, kernel: CurrentKernel, beta: float) -> Instance:
    f = fermi_symbol(system.dec, beta)
    basis = KernelBasis.of(kernel.matrix)
    return Instance(system, kernel, beta, f, basis, MomentFunction(basis, f))


@dataclass(frozen=True)
class GeneratingCurve:
    s: np.ndarray
    J: np.ndarray
    dJ: np.ndarray
    d2J: np.ndarray
    d3J: np.ndarray
    params: dict = field(default_factory=dict)

    def second_divided_differences(self) -> np.ndarray:
        s, j = self.s, self.J
        left = (j[1:-1] - j[:-2]) / (s[1:-1] - s[:-2])
        right = (j[2:] - j[1:-1]) / (s[2:] - s[1:-1])
        return 2.0 * (right - left) / (s[2:] - s[:-2])

    def at_zero(self) -> int:
        hits = np.nonzero(self.s == 0.0)[0]
        if not hits.size:
            raise ValueError("s-grid does not contain 0")
        return int(hits[0])


def generating_curve(inst: Instance, s_grid=None, params: dict | None = None,
                     derivatives: bool = True) -> GeneratingCurve:
    s_grid = default_s_grid() if s_grid is None else np.asarray(s_grid, dtype=float)
    if not np.allclose(s_grid, -s_grid[::-1], atol=1e-14, rtol=0):
        raise ValueError("s-grid must be symmetric about 0")
    vol = inst.volume
    j = np.array([inst.J(float(s)) for s in s_grid])
    derivs = np.full((3, s_grid.size), np.nan)
    if derivatives:
        for i, s in enumerate(s_grid):
            for order in (1, 2, 3):
                derivs[order - 1, i] = richardson_derivative(inst.moment, float(s), order) / vol
    return GeneratingCurve(s_grid, j, derivs[0], derivs[1], derivs[2], dict(params or {}))


@dataclass(frozen=True)
class RateFunction:
    x: np.ndarray
    I: np.ndarray
    boundary: np.ndarray          # True where the supremum sits at the s-grid edge
    argmax_s: np.ndarray
    x_star: float
    curvature: float = float("nan")

    def grid_step(self) -> float:
        return float(np.max(np.diff(self.x)))


def default_x_grid(curve: GeneratingCurve, n: int = 201) -> np.ndarray:
    spline = CubicSpline(curve.s, curve.J)
    lo = curve.dJ[0] if np.isfinite(curve.dJ[0]) else float(spline(curve.s[0], 1))
    hi = curve.dJ[-1] if np.isfinite(curve.dJ[-1]) else float(spline(curve.s[-1], 1))
    return np.linspace(lo, hi, n)


def legendre(curve: GeneratingCurve, x_grid=None) -> RateFunction:
    """I(x) = sup_s (s x - J(s)): grid argmax, then golden-section search on
    the cubic-spline interpolant of J between the neighbouring grid points."""
    x_grid = default_x_grid(curve) if x_grid is None else np.asarray(x_grid, dtype=float)
    s, j = curve.s, curve.J
    spline = CubicSpline(s, j)
    vals = np.empty(x_grid.size)
    flags = np.zeros(x_grid.size, dtype=bool)
    where = np.empty(x_grid.size)
    for n, x in enumerate(x_grid):
        obj = s * x - j
        i = int(np.argmax(obj))
        best, best_s = float(obj[i]), float(s[i])
        neg = lambda t: -(t * x - float(spline(t)))  # noqa: E731
        if 0 < i < s.size - 1:
            res = minimize_scalar(neg, method="golden", bracket=(s[i - 1], s[i], s[i + 1]),
                                  options={"xtol": 1e-12})
            lo, hi = s[i - 1], s[i + 1]
        else:
            # edge cell: the optimum may still sit strictly inside it
            lo, hi = (s[0], s[1]) if i == 0 else (s[-2], s[-1])
            res = minimize_scalar(neg, method="bounded", bounds=(lo, hi),
                                  options={"xatol": 1e-12})
        if res.success and -res.fun > best and lo <= res.x <= hi:
            best, best_s = float(-res.fun), float(res.x)
        edge = s[0] if i == 0 else s[-1]
        flags[n] = i in (0, s.size - 1) and abs(best_s - edge) < 1e-9
        vals[n], where[n] = best, best_s
    k = int(np.argmin(vals))
    return RateFunction(x_grid, vals, flags, where, float(x_grid[k]))


def biconjugate(rate: RateFunction, s_grid) -> np.ndarray:
    """sup_x (s x - I(x)) over the x-grid of a rate function."""
    s_grid = np.asarray(s_grid, dtype=float)
    return np.max(s_grid[:, None] * rate.x[None, :] - rate.I[None, :], axis=1)


def biconjugate_bound(rate: RateFunction, curve: GeneratingCurve) -> float:
    """Grid-resolution error of the discrete biconjugate: dx^2 / (8 min J'')."""
    curv = np.min(curve.d2J) if np.all(np.isfinite(curve.d2J)) else np.nan
    if not curv > 0:
        return float("inf")
    return rate.grid_step() ** 2 / (8.0 * curv)


@dataclass(frozen=True)
class QuadraticFit:
    degenerate: bool
    predicted: float = float("nan")
    windows: tuple = ()
    fitted: tuple = ()
    gaps: tuple = ()

    @property
    def gap(self) -> float:
        return self.gaps[-1] if self.gaps else float("nan")

    @property
    def shrinking(self) -> bool:
        return len(self.gaps) > 1 and all(b < a for a, b in zip(self.gaps, self.gaps[1:]))


def quadratic_asymptotics_check(rate: RateFunction, curvature_j: float,
                                window: float | None = None, halvings: int = 2,
                                threshold: float = DEGENERATE_CURVATURE) -> QuadraticFit:
    """Least-squares parabola through I near x*, compared with 1/J''(0)."""
    if not curvature_j > threshold:
        return QuadraticFit(degenerate=True)
    predicted = 1.0 / curvature_j
    if window is None:
        window = 0.25 * (rate.x[-1] - rate.x[0])
    windows, fitted, gaps = [], [], []
    for _ in range(halvings + 1):
        mask = np.abs(rate.x - rate.x_star) <= window
        if mask.sum() < 5:
            raise ValueError("fit window holds fewer than 5 grid points")
        coef = np.polyfit(rate.x[mask] - rate.x_star, rate.I[mask], 2)
        windows.append(window)
        fitted.append(2.0 * coef[0])
        gaps.append(abs(2.0 * coef[0] - predicted) / predicted)
        window /= 2.0
    return QuadraticFit(False, predicted, tuple(windows), tuple(fitted), tuple(gaps))


def fluctuation_trace(kernel: CurrentKernel | np.ndarray, f: np.ndarray,
                      volume: int | None = None) -> float:
    """Tr(K (1 - f) K f) / |Lambda_L|."""
    k, volume = _kv(kernel, volume)
    kf = k @ f
    tr = np.einsum("ij,ji->", k @ k, f) - np.einsum("ij,ji->", kf, kf)
    return float(tr.real) / volume


def hs_lower_bound(kernel: CurrentKernel | np.ndarray, beta: float, lam: float,
                   theta: float, d: int, volume: int | None = None) -> float:
    """Tr(K* K) / (|Lambda_L| (1 + e^{beta (2d(2+theta) + lambda)})^2)."""
    k, volume = _kv(kernel, volume)
    hs = float(np.sum(np.abs(k) ** 2))
    return hs / volume / (1.0 + math.exp(beta * norm_bound(d, lam, theta))) ** 2


def _kv(kernel, volume):
    if isinstance(kernel, CurrentKernel):
        return kernel.matrix, kernel.volume if volume is None else volume
    if volume is None:
        raise ValueError("volume required for a bare matrix")
    return np.asarray(kernel), volume


def upsilon(field_: FieldProfile, w: Direction) -> float:
    """(int <w, E> a^2)^2 + (1/2) sum_k (w_k int E_k a^2)^2."""
    m2 = w.array * field_.moment(2)
    return float(np.sum(m2) ** 2 + 0.5 * np.sum(m2**2))


def fluct_floor(lam: float, beta: float, theta: float, d: int, ups: float,
                var_omega: float) -> float:
    return lam**2 * ups * var_omega / (1.0 + math.exp(beta * norm_bound(d, lam, theta))) ** 2


@dataclass(frozen=True)
class FluctuationReport:
    F: float
    d2J_fd: float
    hs_bound: float
    upsilon: float
    floor: float
    current: float
    quad_error: float

    def to_row(self) -> dict:
        return {"F": self.F, "d2J_fd": self.d2J_fd, "hs_bound": self.hs_bound,
                "upsilon": self.upsilon, "floor": self.floor, "current": self.current,
                "quad_error": self.quad_error}


def fluctuation_report(inst: Instance, field_: FieldProfile, w: Direction,
                       var_omega: float) -> FluctuationReport:
    sys_ = inst.system
    ups = upsilon(field_, w)
    return FluctuationReport(
        F=fluctuation_trace(inst.kernel, inst.symbol),
        d2J_fd=richardson_derivative(inst.moment, 0.0, 2) / inst.volume,
        hs_bound=hs_lower_bound(inst.kernel, inst.beta, sys_.lam, sys_.theta, sys_.d),
        upsilon=ups,
        floor=fluct_floor(sys_.lam, inst.beta, sys_.theta, sys_.d, ups, var_omega),
        current=inst.current(),
        quad_error=inst.kernel.quad_error,
    )
