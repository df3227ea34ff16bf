"""Electric-field profiles, current operators and the linear-response
current kernel K.

K is the one-particle operator whose second quantisation is the total
linear-response current in the inner box Lambda_L.  Its paramagnetic part
involves the dynamics on the whole lattice; we evaluate that dynamics on an
enlarged box Lambda_{L+m} and rely on the locality of the propagator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.integrate import quad

from .lattice import (MAX_SITES, DisorderSample, DisorderSpec, LatticeBox,
                      build_box, sample_disorder)
from .operators import (CombesThomasParams, SpectralDecomp, default_margin,
                        hamiltonian, hopping_matrix, spectral)

FIELD_SHAPES = ("constant", "half_sine", "polynomial")

# integrals of the unit-interval shape p(u) against 1, u, u^2
_SHAPE_MOMENTS = {
    "constant": (1.0, 0.5, 1.0 / 3.0),
    "half_sine": (2.0 / math.pi, 1.0 / math.pi, (math.pi**2 - 4.0) / math.pi**3),
    "polynomial": (8.0 / 15.0, 4.0 / 15.0, 16.0 / 105.0),
}


class QuadratureError(RuntimeError):
    """Time quadrature did not reach the requested accuracy."""


def _shape(name: str, u: np.ndarray) -> np.ndarray:
    if name == "constant":
        return np.ones_like(u)
    if name == "half_sine":
        return np.sin(np.pi * u)
    return 16.0 * u**2 * (1.0 - u) ** 2


@dataclass(frozen=True)
class FieldProfile:
    """E(alpha) = amplitude * p((alpha - lo) / T) on [lo, hi] = [shift - T, shift].

    ``constant`` is only piecewise continuous (jumps at both ends of its
    support); the other shapes are continuous.
    """

    shape: str = "half_sine"
    T: float = 0.5
    amplitude: tuple = (1.0,)
    shift: float = 0.0
    nodes: int = 16

    def __post_init__(self):
        if self.shape not in FIELD_SHAPES:
            raise ValueError(f"unknown field shape {self.shape!r}")
        if self.T <= 0:
            raise ValueError("field horizon T must be positive")
        object.__setattr__(self, "amplitude", tuple(float(a) for a in self.amplitude))

    @property
    def d(self) -> int:
        return len(self.amplitude)

    @property
    def support(self) -> tuple[float, float]:
        return self.shift - self.T, self.shift

    @property
    def horizon(self) -> float:
        """Largest |gamma| reached by the inner time integral."""
        return max(0.0, -self.support[0])

    @property
    def is_zero(self) -> bool:
        return not any(self.amplitude)

    def __call__(self, alpha) -> np.ndarray:
        alpha = np.asarray(alpha, dtype=float)
        lo, hi = self.support
        u = (alpha - lo) / self.T
        inside = (alpha >= lo) & (alpha <= hi)
        vals = np.where(inside, _shape(self.shape, np.clip(u, 0.0, 1.0)), 0.0)
        return vals[..., None] * np.asarray(self.amplitude)

    def moment(self, power: int) -> np.ndarray:
        """Closed-form integral of E_k(alpha) alpha^power, power in {0, 1, 2}."""
        p0, p1, p2 = _SHAPE_MOMENTS[self.shape]
        lo, T = self.support[0], self.T
        if power == 0:
            scalar = T * p0
        elif power == 1:
            scalar = T * (lo * p0 + T * p1)
        elif power == 2:
            scalar = T * (lo**2 * p0 + 2.0 * lo * T * p1 + T**2 * p2)
        else:
            raise ValueError("closed-form moments exist for powers 0, 1, 2")
        return scalar * np.asarray(self.amplitude)

    def numeric_moment(self, power: int) -> np.ndarray:
        lo, hi = self.support
        p = lambda a: _shape(self.shape, np.asarray((a - lo) / self.T)) * a**power  # noqa: E731
        scalar, _ = quad(p, lo, hi, epsabs=0.0, epsrel=1e-13, limit=200)
        return scalar * np.asarray(self.amplitude)

    def shifted(self, t: float) -> "FieldProfile":
        """The field alpha -> E(alpha + t), i.e. the response at time t."""
        return replace(self, shift=self.shift - t)

    def scaled(self, s: float) -> "FieldProfile":
        return replace(self, amplitude=tuple(s * a for a in self.amplitude))

    def to_dict(self) -> dict:
        return {"shape": self.shape, "T": self.T, "amplitude": list(self.amplitude),
                "shift": self.shift, "nodes": self.nodes}


@dataclass(frozen=True)
class Direction:
    w: tuple

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float)
        if abs(np.linalg.norm(w) - 1.0) > 1e-12:
            raise ValueError("direction must be a unit vector")
        object.__setattr__(self, "w", tuple(w))

    @classmethod
    def of(cls, vec) -> "Direction":
        vec = np.asarray(vec, dtype=float)
        norm = np.linalg.norm(vec)
        if norm == 0:
            raise ValueError("direction cannot be the zero vector")
        return cls(tuple(vec / norm))

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.w)


@dataclass(frozen=True)
class LatticeSystem:
    """Inner box, enlarged box, one disorder sample and the Hamiltonian on it."""

    inner: LatticeBox
    outer: LatticeBox
    sample: DisorderSample = field(repr=False)
    lam: float
    theta: float
    h: np.ndarray = field(repr=False)
    dec: SpectralDecomp = field(repr=False)
    inner_idx: np.ndarray = field(repr=False)
    margin_rule: str = "explicit"

    @property
    def d(self) -> int:
        return self.inner.d

    @property
    def margin(self) -> int:
        return self.outer.L - self.inner.L

    @property
    def volume(self) -> int:
        return self.inner.n_sites


def build_system(d: int, L: int, spec: DisorderSpec, lam: float, theta: float,
                 margin: int | None = None, horizon: float = 1.0,
                 ct_params: CombesThomasParams | None = None, eps: float = 1e-8,
                 max_sites: int = MAX_SITES) -> LatticeSystem:
    rule = "explicit"
    if margin is None:
        margin, rule = default_margin(d, L, lam, theta, horizon,
                                      ct_params or CombesThomasParams(d=d, theta=theta),
                                      eps, max_sites)
    inner = build_box(d, L, max_sites)
    outer = build_box(d, L + margin, max_sites)
    sample = sample_disorder(spec, outer)
    return system_from_sample(inner, sample, lam, theta, rule)


def system_from_sample(inner: LatticeBox, sample: DisorderSample, lam: float,
                       theta: float, margin_rule: str = "explicit") -> LatticeSystem:
    outer = sample.box
    h = hamiltonian(outer, sample, lam, theta)
    return LatticeSystem(inner=inner, outer=outer, sample=sample, lam=lam, theta=theta,
                         h=h, dec=spectral(h), inner_idx=outer.sub_indices(inner),
                         margin_rule=margin_rule)


def single_hop(x, y, sample: DisorderSample, theta: float, box: LatticeBox) -> np.ndarray:
    """S_{x,y}: the single entry <e_x, Delta e_y> at row x, column y."""
    i, j = box.index(x), box.index(y)
    delta = hopping_matrix(box, sample, theta)
    s = np.zeros((box.n_sites, box.n_sites), dtype=complex)
    s[i, j] = delta[i, j]
    return s


def paramagnetic_current(x, y, sample: DisorderSample, theta: float,
                         box: LatticeBox) -> np.ndarray:
    """-2 Im S_{x,y} with Im C = (C - C*) / 2i."""
    s = single_hop(x, y, sample, theta, box)
    return -2.0 * (s - s.conj().T) / 2j


def _axis_pairs(system: LatticeSystem, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Outer-box indices of (x, x + e_k) with both ends in the inner box."""
    inner = system.inner
    mask = inner.sites[:, k] < inner.L
    tails = inner.sites[mask]
    heads = tails.copy()
    heads[:, k] += 1
    return system.outer.indices(tails), system.outer.indices(heads)


def _hopping(system: LatticeSystem) -> np.ndarray:
    return hopping_matrix(system.outer, system.sample, system.theta)


def assemble_M(system: LatticeSystem, k: int) -> np.ndarray:
    """Diamagnetic operator: sum over inner edges along axis k of 2 Re S_{x+e_k,x}."""
    _check_axis(system, k)
    delta = _hopping(system)
    tails, heads = _axis_pairs(system, k)
    n = system.outer.n_sites
    m = np.zeros((n, n), dtype=complex)
    m[heads, tails] = delta[heads, tails]
    m[tails, heads] = delta[tails, heads]
    return m


def current_sum(system: LatticeSystem, k: int, delta: np.ndarray | None = None) -> np.ndarray:
    """Sum over inner edges along axis k of Im S_{x+e_k,x}."""
    _check_axis(system, k)
    delta = _hopping(system) if delta is None else delta
    tails, heads = _axis_pairs(system, k)
    n = system.outer.n_sites
    b = np.zeros((n, n), dtype=complex)
    b[heads, tails] = delta[heads, tails] / 2j
    b[tails, heads] = -delta[tails, heads] / 2j
    return b


def _check_axis(system: LatticeSystem, k: int) -> None:
    if not 0 <= k < system.d:
        raise ValueError(f"axis index {k} outside 0..{system.d - 1}")


def assemble_N(system: LatticeSystem, gamma: float, q: int, k: int) -> np.ndarray:
    """4i [e^{-i gamma h} B_q e^{i gamma h}, B_k] with B the inner current sums."""
    delta = _hopping(system)
    bq = current_sum(system, q, delta)
    bk = current_sum(system, k, delta)
    dec = system.dec
    u = dec.apply(np.exp(1j * gamma * dec.values))
    x = u.conj().T @ bq @ u
    return 4j * (x @ bk - bk @ x)


@dataclass(frozen=True)
class CurrentKernel:
    matrix: np.ndarray = field(repr=False)
    inner_idx: np.ndarray = field(repr=False)
    volume: int
    nodes: int
    quad_error: float

    def inner_block(self) -> np.ndarray:
        return self.matrix[np.ix_(self.inner_idx, self.inner_idx)]


class _Conjugator:
    """Columns of e^{-i gamma h} Y e^{i gamma h} for Y supported on the inner box."""

    def __init__(self, dec: SpectralDecomp, idx: np.ndarray):
        self.values = dec.values
        self.vectors = dec.vectors
        self.v_in = dec.vectors[idx]               # (n_in, n)
        self.v_in_h = self.v_in.conj().T           # (n, n_in)

    def columns(self, gamma: float, y_in: np.ndarray) -> np.ndarray:
        ph = np.exp(1j * gamma * self.values)
        u_in = (self.v_in * ph) @ self.v_in_h                      # U(gamma)[in, in]
        left = (self.vectors * ph.conj()) @ self.v_in_h           # U(-gamma)[:, in]
        return left @ (y_in @ u_in)


def _segments(lo: float, hi: float) -> list[tuple[float, float]]:
    """gamma-intervals on which G(gamma) = int_lo^{min(hi, -gamma)} E is smooth."""
    segs = []
    if hi < 0:
        segs.append((0.0, -hi))
    segs.append((max(0.0, -hi), -lo))
    return [(a, b) for a, b in segs if b > a]


def _paramagnetic(system: LatticeSystem, field_: FieldProfile, w: np.ndarray,
                  n: int, conj: _Conjugator, b_in: list[np.ndarray],
                  bw_in: np.ndarray) -> np.ndarray:
    lo, hi = field_.support
    idx = system.inner_idx
    size = system.outer.n_sites
    x_nodes, x_weights = leggauss(n)
    acc = np.zeros((size, len(idx)), dtype=complex)
    for a, b in _segments(lo, hi):
        gammas = 0.5 * (b - a) * x_nodes + 0.5 * (b + a)
        gweights = 0.5 * (b - a) * x_weights
        for gamma, gw in zip(gammas, gweights):
            top = min(hi, -gamma)
            alphas = 0.5 * (top - lo) * x_nodes + 0.5 * (top + lo)
            g = (0.5 * (top - lo) * x_weights) @ field_(alphas)    # G_q(gamma)
            if not np.any(g):
                continue
            y_in = sum(gq * bq for gq, bq in zip(g, b_in))
            acc += gw * conj.columns(gamma, y_in)
    # acc = int G(gamma) X(gamma)[:, in] dgamma; commutator with B_w
    xb = acc @ bw_in                              # columns in the inner box
    out = np.zeros((size, size), dtype=complex)
    out[:, idx] += 4j * xb
    out[idx, :] -= 4j * (bw_in @ acc.conj().T)
    return out


def assemble_K(system: LatticeSystem, field_: FieldProfile, w: Direction,
               tol: float = 1e-9, max_nodes: int = 512) -> CurrentKernel:
    """Current kernel K = sum_k w_k [ (int E_k) M_k + int_0^{-lo} 4i[X(gamma), B_k] dgamma ],
    X(gamma) = e^{-i gamma h} (sum_q G_q(gamma) B_q) e^{i gamma h}.

    The (alpha, gamma) integral is a tensor Gauss-Legendre rule: gamma outer,
    alpha inner over [lo, min(hi, -gamma)].  Node counts start at
    ``field_.nodes`` and double until the paramagnetic part moves by less than
    ``tol`` in max entry.
    """
    if field_.d != system.d or len(w.w) != system.d:
        raise ValueError("field, direction and lattice dimensions differ")
    lo, hi = field_.support
    if hi > 0:
        raise ValueError("field support must lie in (-inf, 0]")
    wv = w.array
    size = system.outer.n_sites
    idx = system.inner_idx
    if field_.is_zero:
        return CurrentKernel(np.zeros((size, size), dtype=complex), idx, system.volume, 0, 0.0)

    kern = np.zeros((size, size), dtype=complex)
    charge = field_.moment(0)
    for k in range(system.d):
        if wv[k] != 0 and charge[k] != 0:
            kern += wv[k] * charge[k] * assemble_M(system, k)

    delta = _hopping(system)
    sub = np.ix_(idx, idx)
    b_in = [current_sum(system, q, delta)[sub] for q in range(system.d)]
    bw_in = sum(wv[k] * b_in[k] for k in range(system.d))
    conj = _Conjugator(system.dec, idx)

    n = max(2, int(field_.nodes))
    prev = _paramagnetic(system, field_, wv, n, conj, b_in, bw_in)
    while True:
        n *= 2
        cur = _paramagnetic(system, field_, wv, n, conj, b_in, bw_in)
        err = float(np.max(np.abs(cur - prev)))
        if err < tol:
            break
        if n >= max_nodes:
            raise QuadratureError(f"time quadrature error {err:.3e} above {tol:.1e} "
                                  f"at {n} nodes")
        prev = cur
    kern += cur
    kern = 0.5 * (kern + kern.conj().T)
    return CurrentKernel(kern, idx, system.volume, n, err)


def linear_response_current(kernel: CurrentKernel, symbol: np.ndarray) -> float:
    """Expected current density Tr(f K) / |Lambda_L|."""
    val = np.einsum("ij,ji->", symbol, kernel.matrix)
    return float(val.real) / kernel.volume
