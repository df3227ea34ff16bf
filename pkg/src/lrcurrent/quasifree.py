"""Gauge-invariant quasi-free states at the level of their one-particle symbol.

Convention: a symbol S encodes the two-point function
``state(a*_x a_y) = S[y, x]``, so that the expectation of the bilinear
``<A, K A> = sum_ij K_ij a*_i a_j`` is ``Tr(S K)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .operators import SpectralDecomp, hermiticity_defect

log = logging.getLogger(__name__)

SYMBOL_DRIFT = 1e-10
LOWRANK_CUTOFF = 1e-13
IMAG_TOL = 1e-8


class NumericError(ArithmeticError):
    """A determinant or spectral computation left its trusted regime."""


@dataclass(frozen=True)
class StateSymbol:
    matrix: np.ndarray = field(repr=False)
    provenance: str = "gibbs"

    @property
    def n(self) -> int:
        return self.matrix.shape[0]


def make_symbol(s: np.ndarray, provenance: str = "gibbs", clamp: bool = True) -> StateSymbol:
    """Validate a symbol; eigenvalues drifting out of [0, 1] are clamped."""
    s = np.asarray(s, dtype=complex)
    if hermiticity_defect(s) > 1e-10:
        raise ValueError("state symbol must be Hermitian")
    s = 0.5 * (s + s.conj().T)
    if clamp:
        vals, vecs = np.linalg.eigh(s)
        drift = max(-vals.min(), vals.max() - 1.0, 0.0)
        if drift > 0:
            if drift > SYMBOL_DRIFT:
                log.warning("symbol spectrum leaves [0, 1] by %.3e; clamping", drift)
            s = (vecs * np.clip(vals, 0.0, 1.0)) @ vecs.conj().T
    return StateSymbol(s, provenance)


def _mat(s) -> np.ndarray:
    return s.matrix if isinstance(s, StateSymbol) else np.asarray(s)


def wick_2n(s, creators, annihilators) -> complex:
    """state(a*_{x_1} ... a*_{x_N} a_{y_N} ... a_{y_1}) = det[S[y_l, x_k]]_{l,k}.

    Lists of different length give 0 (gauge invariance).
    """
    creators, annihilators = list(creators), list(annihilators)
    if len(creators) != len(annihilators):
        return 0.0 + 0.0j
    if not creators:
        return 1.0 + 0.0j
    m = _mat(s)[np.ix_(annihilators, creators)]
    return complex(np.linalg.det(m))


@dataclass(frozen=True)
class KernelBasis:
    """Eigenpairs of a Hermitian K with negligible eigenvalues dropped."""

    values: np.ndarray
    vectors: np.ndarray

    @classmethod
    def of(cls, k: np.ndarray, cutoff: float = LOWRANK_CUTOFF) -> "KernelBasis":
        k = np.asarray(k)
        vals, vecs = np.linalg.eigh(0.5 * (k + k.conj().T))
        top = np.max(np.abs(vals)) if vals.size else 0.0
        keep = np.abs(vals) > cutoff * top if top > 0 else np.zeros(vals.shape, bool)
        return cls(vals[keep], vecs[:, keep])

    @property
    def rank(self) -> int:
        return self.values.shape[0]

    def function(self, fvals: np.ndarray) -> np.ndarray:
        return (self.vectors * fvals) @ self.vectors.conj().T


class MomentFunction:
    """s -> ln state(e^{s <A, K A>}) = ln det(1 + S (e^{sK} - 1)).

    The determinant is reduced to the range of K: with K = Q diag(k) Q*,
    det(1 + S Q diag(e^{sk} - 1) Q*) = det(1 + diag(e^{sk} - 1) Q* S Q).
    """

    def __init__(self, k: np.ndarray | KernelBasis, s):
        self.basis = k if isinstance(k, KernelBasis) else KernelBasis.of(k)
        q = self.basis.vectors
        self.compressed = q.conj().T @ _mat(s) @ q

    def __call__(self, s: float) -> float:
        r = self.basis.rank
        if r == 0:
            return 0.0
        m = np.eye(r, dtype=complex) + np.expm1(s * self.basis.values)[:, None] * self.compressed
        sign, logabs = np.linalg.slogdet(m)
        if not np.isfinite(logabs) or sign == 0:
            raise NumericError(f"singular moment determinant at s={s!r}")
        phase = float(np.angle(sign))
        if abs(phase) >= IMAG_TOL:
            raise NumericError(f"moment determinant has phase {phase:.3e} at s={s!r}")
        return float(logabs)


def log_moment(k: np.ndarray, s) -> float:
    """ln state(e^{<A, K A>}) for the quasi-free state with symbol S."""
    return MomentFunction(k, s)(1.0)


def deformed_symbol(k: np.ndarray | KernelBasis, dec: SpectralDecomp, beta: float,
                    s: float) -> StateSymbol:
    """(1 + e^{-sK/2} e^{beta h} e^{-sK/2})^{-1}."""
    basis = k if isinstance(k, KernelBasis) else KernelBasis.of(k)
    n = dec.values.shape[0]
    if s == 0 or basis.rank == 0:
        half = np.eye(n, dtype=complex)
    else:
        q = basis.vectors
        half = np.eye(n, dtype=complex) + (q * np.expm1(-0.5 * s * basis.values)) @ q.conj().T
    gibbs = dec.apply(np.exp(beta * dec.values))
    a = half @ gibbs @ half
    vals, vecs = np.linalg.eigh(0.5 * (a + a.conj().T))
    if vals.min() <= 0:
        raise NumericError("deformed Gibbs operator lost positivity")
    sym = (vecs * expit(-np.log(vals))) @ vecs.conj().T
    return StateSymbol(sym, "deformed")


@dataclass(frozen=True)
class CumulantTriple:
    first: float
    second: float
    third: float
    method: str = "closed-form"


def _tr(a, b) -> complex:
    return np.einsum("ij,ji->", a, b)


def symbol_cumulants(k: np.ndarray, s) -> CumulantTriple:
    """Cumulants of <A, K A> in the quasi-free state with symbol S."""
    sm = _mat(s)
    ks = k @ sm
    kt = k - ks                      # K (1 - S)
    first = _tr(k, sm).real
    second = _tr(ks, kt).real        # Tr(K S K (1-S))
    third = (_tr(kt @ kt, ks) - _tr(kt @ ks, ks)).real
    return CumulantTriple(float(first), float(second), float(third), "closed-form")


def cumulants(k: np.ndarray, dec: SpectralDecomp, beta: float, s: float = 0.0) -> CumulantTriple:
    """First three cumulants of <A, K A> in the deformed state at parameter s.

    These are the first three s-derivatives of ln state(e^{s <A, K A>}).
    """
    return symbol_cumulants(k, deformed_symbol(k, dec, beta, s))


def third_cumulant_moments(k: np.ndarray, s) -> float:
    """kappa_3 = Tr(S K^3) - 3 Tr(S K S K^2) + 2 Tr((S K)^3), a second route."""
    sm = _mat(s)
    sk = sm @ k
    k2 = k @ k
    val = _tr(sm, k2 @ k) - 3.0 * _tr(sk, sm @ k2) + 2.0 * _tr(sk @ sk, sk)
    return float(val.real)


def connected_3pt(s, pairs) -> complex:
    """Truncated correlation of a*_{x1} a_{y1}; a*_{x2} a_{y2}; a*_{x3} a_{y3}.

    Only the two cyclic contractions survive:
    w(a*_{x1} a_{y3}) w(a_{y1} a*_{x2}) w(a_{y2} a*_{x3})
      - w(a*_{x1} a_{y2}) w(a*_{x2} a_{y3}) w(a_{y1} a*_{x3}),
    with w(a*_x a_y) = S[y, x] and w(a_y a*_x) = delta_xy - S[y, x].
    """
    sm = _mat(s)
    (x1, y1), (x2, y2), (x3, y3) = pairs
    t = np.eye(sm.shape[0]) - sm
    return complex(sm[y3, x1] * t[y1, x2] * t[y2, x3]
                   - sm[y2, x1] * sm[y3, x2] * t[y1, x3])
