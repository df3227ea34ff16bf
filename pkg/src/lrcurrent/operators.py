"""One-particle operators on a box: hopping matrix, Hamiltonian and their
functions (Fermi symbol, unitary propagator), all by dense spectral calculus.

Operators are plain complex ``numpy`` arrays indexed by the sites of a
:class:`~lrcurrent.lattice.LatticeBox`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .lattice import (MAX_SITES, CapacityError, DisorderSample, LatticeBox,
                      restrict_sample)

HERMITIAN_RTOL = 1e-12


class PartitionError(ValueError):
    """Site sets of a partition overlap or leave the box."""


def hermiticity_defect(a: np.ndarray) -> float:
    """max |A - A*| relative to max |A| (absolute when A = 0)."""
    scale = float(np.max(np.abs(a))) if a.size else 0.0
    gap = float(np.max(np.abs(a - a.conj().T))) if a.size else 0.0
    return gap / scale if scale > 0 else gap


def is_hermitian(a: np.ndarray, rtol: float = HERMITIAN_RTOL) -> bool:
    return hermiticity_defect(a) <= rtol


def _sample_on(box: LatticeBox, sample: DisorderSample) -> DisorderSample:
    if sample.box.d != box.d or sample.box.L < box.L:
        raise ValueError("disorder sample does not cover the box")
    if sample.box.L == box.L:
        return sample
    return restrict_sample(sample, box)


def hopping_matrix(box: LatticeBox, sample: DisorderSample, theta: float) -> np.ndarray:
    """Hopping operator with diagonal 2d and edge amplitudes -(1 + theta*omega_2).

    The entry (x, x + e_j) carries -(1 + theta*omega_2({x, x+e_j})) and the
    reversed entry its conjugate.
    """
    if theta < 0:
        raise ValueError("theta must be non-negative")
    sample = _sample_on(box, sample)
    n = box.n_sites
    delta = np.zeros((n, n), dtype=complex)
    delta[np.diag_indices(n)] = 2.0 * box.d
    amp = -(1.0 + theta * sample.edge_values)
    delta[sample.edges.tails, sample.edges.heads] = amp
    delta[sample.edges.heads, sample.edges.tails] = np.conj(amp)
    return delta


def hamiltonian(box: LatticeBox, sample: DisorderSample, lam: float, theta: float) -> np.ndarray:
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    h = hopping_matrix(box, sample, theta)
    h[np.diag_indices(box.n_sites)] += lam * _sample_on(box, sample).onsite
    return h


def norm_bound(d: int, lam: float, theta: float) -> float:
    """Uniform bound 2d(2 + theta) + lambda on the Hamiltonian norm."""
    return 2.0 * d * (2.0 + theta) + lam


def restrict(op: np.ndarray, partition) -> np.ndarray:
    """Sum over Z of P_Z op P_Z for pairwise disjoint index sets Z."""
    n = op.shape[0]
    seen = np.zeros(n, dtype=bool)
    out = np.zeros_like(op)
    for part in partition:
        idx = np.asarray(sorted(set(int(i) for i in part)), dtype=int)
        if idx.size == 0:
            continue
        if idx.min() < 0 or idx.max() >= n:
            raise PartitionError("site set leaves the box")
        if np.any(seen[idx]):
            raise PartitionError("site sets of the partition overlap")
        seen[idx] = True
        out[np.ix_(idx, idx)] = op[np.ix_(idx, idx)]
    return out


@dataclass(frozen=True)
class SpectralDecomp:
    values: np.ndarray   # ascending eigenvalues
    vectors: np.ndarray  # columns are orthonormal eigenvectors
    source: np.ndarray

    def apply(self, fvals: np.ndarray) -> np.ndarray:
        """Matrix function with eigenvalue images ``fvals``."""
        return (self.vectors * fvals) @ self.vectors.conj().T

    def reconstruction_error(self) -> float:
        rec = self.apply(self.values.astype(complex))
        scale = max(float(np.max(np.abs(self.source))), 1.0)
        return float(np.max(np.abs(rec - self.source))) / scale


def spectral(op: np.ndarray) -> SpectralDecomp:
    if not is_hermitian(op):
        raise ValueError("spectral decomposition requires a Hermitian operator")
    herm = 0.5 * (op + op.conj().T)
    values, vectors = np.linalg.eigh(herm)
    return SpectralDecomp(values=values, vectors=vectors, source=op)


def fermi_symbol(dec: SpectralDecomp, beta: float) -> np.ndarray:
    """(1 + e^{beta h})^{-1}; beta = 0 gives the tracial symbol 1/2."""
    if beta < 0:
        raise ValueError("beta must be non-negative")
    return dec.apply(expit(-beta * dec.values))


def propagator(dec: SpectralDecomp, t: float) -> np.ndarray:
    """e^{ith}."""
    return dec.apply(np.exp(1j * t * dec.values))


@dataclass(frozen=True)
class CombesThomasParams:
    eta: float = 1.0
    mu: float = 1.0
    d: int = 1
    theta: float = 0.0

    def __post_init__(self):
        if self.eta <= 0 or self.mu <= 0:
            raise ValueError("eta and mu must be strictly positive")

    @property
    def mu_eta(self) -> float:
        return self.mu * min(0.5, self.eta / (8.0 * self.d * (1.0 + self.theta) * math.exp(self.mu)))

    def bound(self, t: float, dist: np.ndarray) -> np.ndarray:
        return 36.0 * np.exp(abs(t * self.eta) - 2.0 * self.mu_eta * np.asarray(dist))


@dataclass(frozen=True)
class CombesThomasReport:
    max_ratio: float
    worst_pair: tuple
    distances: np.ndarray     # distinct |x - y|
    max_ratio_by_distance: np.ndarray
    mean_ratio_by_distance: np.ndarray


def combes_thomas_check(dec: SpectralDecomp, params: CombesThomasParams, t: float,
                        box: LatticeBox) -> CombesThomasReport:
    """Worst ratio |<e_x, e^{ith} e_y>| / (36 e^{|t eta| - 2 mu_eta |x-y|})."""
    u = np.abs(propagator(dec, t))
    diff = box.sites[:, None, :] - box.sites[None, :, :]
    dist = np.sqrt(np.sum(diff.astype(float) ** 2, axis=-1))
    ratio = u / params.bound(t, dist)
    worst = np.unravel_index(int(np.argmax(ratio)), ratio.shape)
    rounded = np.round(dist, 9)
    distances = np.unique(rounded)
    maxr = np.array([ratio[rounded == r].max() for r in distances])
    meanr = np.array([ratio[rounded == r].mean() for r in distances])
    return CombesThomasReport(float(ratio.max()), (int(worst[0]), int(worst[1])),
                              distances, maxr, meanr)


def combes_thomas_margin(params: CombesThomasParams, eps: float = 1e-8) -> int:
    """Boundary margin ceil(ln(1/eps) / (2 mu_eta))."""
    return int(math.ceil(math.log(1.0 / eps) / (2.0 * params.mu_eta)))


def taylor_margin(d: int, lam: float, theta: float, horizon: float, eps: float = 1e-8) -> int:
    """Smallest r whose power-series tail of e^{i t (h - 2d)} beyond order r,
    q^r e^q / r! with q = |t| (2d(1+theta) + lambda), is below eps for |t| <= horizon.
    """
    q = abs(horizon) * (2.0 * d * (1.0 + theta) + lam)
    if q == 0:
        return 1
    r = 1
    while r * math.log(q) + q - math.lgamma(r + 1) > math.log(eps):
        r += 1
    return r


def default_margin(d: int, L: int, lam: float, theta: float, horizon: float,
                   params: CombesThomasParams | None = None, eps: float = 1e-8,
                   max_sites: int = MAX_SITES) -> tuple[int, str]:
    """Margin m for the enlarged box and the rule that produced it.

    The Combes-Thomas rule is used when the enlarged box fits under the
    size cap; otherwise the (sharper, time-horizon dependent) power-series
    tail rule is used.
    """
    params = params or CombesThomasParams(d=d, theta=theta)
    m = combes_thomas_margin(params, eps)
    if (2 * (L + m) + 1) ** d <= max_sites:
        return m, "combes-thomas"
    m = taylor_margin(d, lam, theta, horizon, eps)
    if (2 * (L + m) + 1) ** d > max_sites:
        raise CapacityError("enlarged box exceeds the size cap under every margin rule")
    return m, "taylor-tail"
