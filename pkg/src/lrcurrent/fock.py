"""Brute-force Fock-space oracle for small lattices.

Basis: occupation states |n_0 n_1 ... n_{n-1}> ordered as binary numbers with
site 0 the most significant bit.  ``a_i`` lowers n_i and carries the
Jordan-Wigner sign (-1)^{n_0 + ... + n_{i-1}}.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .lattice import CapacityError

MAX_FOCK_SITES = 12

_LOWER = sp.csr_matrix(np.array([[0.0, 1.0], [0.0, 0.0]]))
_SIGN = sp.csr_matrix(np.diag([1.0, -1.0]))


@dataclass(frozen=True)
class CAROperators:
    n: int
    ops: tuple = field(repr=False)   # sparse annihilators a_0 .. a_{n-1}

    @property
    def dim(self) -> int:
        return 2**self.n

    def a(self, i: int) -> sp.csr_matrix:
        return self.ops[i]

    def adag(self, i: int) -> sp.csr_matrix:
        return self.ops[i].conj().T.tocsr()


def build_car(n: int) -> CAROperators:
    if n < 1:
        raise ValueError("need at least one site")
    if n > MAX_FOCK_SITES:
        raise CapacityError(f"Fock oracle is capped at {MAX_FOCK_SITES} sites")
    ops = []
    for i in range(n):
        op = sp.identity(1, format="csr")
        for j in range(n):
            factor = _SIGN if j < i else (_LOWER if j == i else sp.identity(2, format="csr"))
            op = sp.kron(op, factor, format="csr")
        ops.append(op.astype(complex))
    return CAROperators(n, tuple(ops))


def second_quantize(c: np.ndarray, car: CAROperators) -> np.ndarray:
    """<A, C A> = sum_ij C_ij a*_i a_j as a dense Fock matrix."""
    c = np.asarray(c)
    if c.shape != (car.n, car.n):
        raise ValueError("operator size does not match the Fock space")
    out = sp.csr_matrix((car.dim, car.dim), dtype=complex)
    for i in range(car.n):
        ad = car.adag(i)
        for j in range(car.n):
            if c[i, j] != 0:
                out = out + c[i, j] * (ad @ car.a(j))
    return out.toarray()


def hermitian_exp(m: np.ndarray, scale: float = 1.0) -> np.ndarray:
    """e^{scale * M} for Hermitian M."""
    vals, vecs = np.linalg.eigh(0.5 * (m + m.conj().T))
    return (vecs * np.exp(scale * vals)) @ vecs.conj().T


def gibbs_expectation(h: np.ndarray, obs: np.ndarray, beta: float,
                      car: CAROperators | None = None) -> complex:
    """tr(O e^{-beta <A,hA>}) / tr(e^{-beta <A,hA>})."""
    car = car or build_car(np.asarray(h).shape[0])
    if beta == 0:
        return complex(np.trace(obs)) / car.dim
    hh = second_quantize(h, car)
    vals, vecs = np.linalg.eigh(hh)
    w = np.exp(-beta * (vals - vals.min()))
    rho = (vecs * w) @ vecs.conj().T
    return complex(np.einsum("ij,ji->", rho, obs)) / float(w.sum())


def symbol_density(s: np.ndarray, car: CAROperators | None = None) -> np.ndarray:
    """Normalised Fock density of the quasi-free state with symbol S.

    Requires 0 < S < 1; the density is proportional to exp(-<A, H A>) with
    H = ln((1 - S) S^{-1}).
    """
    s = np.asarray(s, dtype=complex)
    car = car or build_car(s.shape[0])
    vals, vecs = np.linalg.eigh(0.5 * (s + s.conj().T))
    if vals.min() <= 0 or vals.max() >= 1:
        raise ValueError("symbol spectrum must lie strictly inside (0, 1)")
    h = (vecs * np.log((1.0 - vals) / vals)) @ vecs.conj().T
    hh = second_quantize(h, car)
    ev, evec = np.linalg.eigh(hh)
    w = np.exp(-(ev - ev.min()))
    return (evec * (w / w.sum())) @ evec.conj().T


def expectation(rho: np.ndarray, obs: np.ndarray) -> complex:
    return complex(np.einsum("ij,ji->", rho, obs))


def random_hermitian(rng: np.random.Generator, n: int, scale: float = 1.0) -> np.ndarray:
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return scale * 0.5 * (a + a.conj().T)


def random_symbol(rng: np.random.Generator, n: int) -> np.ndarray:
    """Symbol with spectrum drawn uniformly from [0.05, 0.95]."""
    q, _ = np.linalg.qr(rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n)))
    return (q * rng.uniform(0.05, 0.95, n)) @ q.conj().T


def truncated_3pt(rho: np.ndarray, ops) -> complex:
    """Connected part of state(A1 A2 A3) built from full moments."""
    a1, a2, a3 = ops
    e = lambda o: expectation(rho, o)  # noqa: E731
    return (e(a1 @ a2 @ a3) - e(a1) * e(a2 @ a3) - e(a2) * e(a1 @ a3)
            - e(a3) * e(a1 @ a2) + 2.0 * e(a1) * e(a2) * e(a3))


def oracle_suite(draws: int = 50, seed: int = 0, sizes=(2, 3, 4)) -> dict:
    """Max deviations between the symbol calculus and brute-force Fock traces.

    Each draw uses a random Hermitian one-particle Hamiltonian h, its Fermi
    symbol at a random beta, and a random Hermitian K.
    """
    from .operators import fermi_symbol, spectral
    from .quasifree import (connected_3pt, log_moment, symbol_cumulants, wick_2n)

    rng = np.random.default_rng(seed)
    worst = {"log_moment": 0.0, "wick": 0.0, "connected_3pt": 0.0,
             "second_cumulant": 0.0, "third_cumulant": 0.0, "two_point": 0.0}
    cars = {n: build_car(n) for n in sizes}
    for draw in range(draws):
        n = sizes[draw % len(sizes)]
        car = cars[n]
        h = random_hermitian(rng, n)
        beta = float(rng.uniform(0.2, 2.0))
        s = fermi_symbol(spectral(h), beta)
        k = random_hermitian(rng, n, 0.5)
        hh = second_quantize(h, car)
        ev, evec = np.linalg.eigh(hh)
        w = np.exp(-beta * (ev - ev.min()))
        rho = (evec * (w / w.sum())) @ evec.conj().T
        kk = second_quantize(k, car)
        ad = [car.adag(i).toarray() for i in range(n)]
        an = [car.a(i).toarray() for i in range(n)]

        ratio = expectation(rho, hermitian_exp(kk)).real
        worst["log_moment"] = max(worst["log_moment"], abs(np.log(ratio) - log_moment(k, s)))

        x, y = rng.integers(0, n, 2)
        worst["two_point"] = max(worst["two_point"],
                                 abs(expectation(rho, ad[x] @ an[y]) - s[y, x]))

        m = min(3, n)
        xs = list(rng.permutation(n)[:m])
        ys = list(rng.permutation(n)[:m])
        op = np.eye(car.dim, dtype=complex)
        for i in xs:
            op = op @ ad[i]
        for j in reversed(ys):
            op = op @ an[j]
        worst["wick"] = max(worst["wick"], abs(expectation(rho, op) - wick_2n(s, xs, ys)))

        pairs = [tuple(int(v) for v in rng.integers(0, n, 2)) for _ in range(3)]
        ops = [ad[p] @ an[q] for p, q in pairs]
        worst["connected_3pt"] = max(worst["connected_3pt"],
                                     abs(truncated_3pt(rho, ops) - connected_3pt(s, pairs)))

        mom = [expectation(rho, np.linalg.matrix_power(kk, j)).real for j in (1, 2, 3)]
        cum = symbol_cumulants(k, s)
        worst["second_cumulant"] = max(worst["second_cumulant"],
                                       abs(mom[1] - mom[0] ** 2 - cum.second))
        worst["third_cumulant"] = max(worst["third_cumulant"],
                                      abs(mom[2] - 3 * mom[1] * mom[0] + 2 * mom[0] ** 3
                                          - cum.third))
    return worst
