import numpy as np
import pytest

from lrcurrent.fock import random_hermitian, random_symbol
from lrcurrent.operators import fermi_symbol, hermiticity_defect, spectral
from lrcurrent.quasifree import (KernelBasis, MomentFunction, NumericError, connected_3pt,
                                 cumulants, deformed_symbol, log_moment, make_symbol,
                                 symbol_cumulants, third_cumulant_moments, wick_2n)
from lrcurrent.ldp import richardson_derivative


def test_wick_basics(rng):
    s = random_symbol(rng, 4)
    assert wick_2n(s, [1], [2]) == pytest.approx(s[2, 1])
    assert wick_2n(s, [0, 1], [2]) == 0
    assert wick_2n(s, [], []) == 1
    a = wick_2n(s, [0, 1, 3], [2, 1, 0])
    b = wick_2n(s, [1, 0, 3], [2, 1, 0])
    assert b == -a
    # repeated creator gives zero (Pauli)
    assert abs(wick_2n(s, [1, 1], [0, 2])) < 1e-15


def test_log_moment_trivial_cases(rng):
    s = random_symbol(rng, 5)
    assert log_moment(np.zeros((5, 5)), s) == 0.0
    assert abs(log_moment(random_hermitian(rng, 5), np.zeros((5, 5)))) < 1e-14


def test_log_moment_commuting_case(rng):
    # diagonal K and S: product of single-mode factors 1 + p (e^k - 1)
    k = np.diag(rng.normal(size=4))
    p = rng.uniform(0.1, 0.9, 4)
    expected = np.sum(np.log1p(p * np.expm1(np.diag(k))))
    assert log_moment(k, np.diag(p)) == pytest.approx(expected, rel=1e-13)


def test_log_moment_low_rank_matches_full(rng):
    n = 8
    v = rng.normal(size=(n, 2)) + 1j * rng.normal(size=(n, 2))
    k = v @ np.diag([0.7, -1.1]) @ v.conj().T
    s = random_symbol(rng, n)
    full = np.linalg.slogdet(np.eye(n) + s @ (_expm_h(k) - np.eye(n)))[1]
    assert KernelBasis.of(k).rank == 2
    assert log_moment(k, s) == pytest.approx(full, rel=1e-12)


def _expm_h(k):
    vals, vecs = np.linalg.eigh(k)
    return (vecs * np.exp(vals)) @ vecs.conj().T


def test_moment_convex_and_derivatives(rng):
    n = 6
    k = random_hermitian(rng, n, 0.5)
    s = random_symbol(rng, n)
    mf = MomentFunction(k, s)
    grid = np.linspace(-2, 2, 41)
    vals = np.array([mf(t) for t in grid])
    dd = vals[2:] - 2 * vals[1:-1] + vals[:-2]
    assert np.all(dd >= -1e-9)
    cum = symbol_cumulants(k, s)
    assert richardson_derivative(mf, 0.0, 1) == pytest.approx(cum.first, rel=1e-6)
    assert richardson_derivative(mf, 0.0, 2) == pytest.approx(cum.second, rel=1e-5)
    assert richardson_derivative(mf, 0.0, 3) == pytest.approx(cum.third, rel=1e-4)


def test_moment_phase_guard():
    # a non-positive "symbol" drives the determinant negative
    with pytest.raises(NumericError):
        MomentFunction(np.diag([5.0]), np.diag([-0.5]))(1.0)


def test_deformed_symbol(rng):
    n = 6
    h = random_hermitian(rng, n)
    dec = spectral(h)
    k = random_hermitian(rng, n, 0.3)
    s0 = deformed_symbol(k, dec, 1.3, 0.0).matrix
    assert np.max(np.abs(s0 - fermi_symbol(dec, 1.3))) < 1e-12
    s1 = deformed_symbol(k, dec, 1.3, 0.8).matrix
    assert hermiticity_defect(s1) < 1e-11
    ev = np.linalg.eigvalsh(s1)
    assert ev.min() > 0 and ev.max() < 1


def test_cumulants_zero_and_trace_formula(rng):
    n = 5
    dec = spectral(random_hermitian(rng, n))
    c = cumulants(np.zeros((n, n)), dec, 1.0, 0.4)
    assert (c.first, c.second, c.third) == (0.0, 0.0, 0.0)
    k = random_hermitian(rng, n)
    f = fermi_symbol(dec, 0.9)
    c = cumulants(k, dec, 0.9, 0.0)
    tr = np.trace(k @ f @ k @ (np.eye(n) - f)).real
    assert c.second == pytest.approx(tr, rel=1e-9)
    assert c.second >= -1e-10


@pytest.mark.parametrize("s_value", [-1.0, 0.0, 0.7])
def test_third_cumulant_two_routes_and_fd(rng, s_value):
    n = 5
    dec = spectral(random_hermitian(rng, n))
    k = random_hermitian(rng, n, 0.6)
    beta = 1.1
    f = fermi_symbol(dec, beta)
    mf = MomentFunction(k, f)
    c = cumulants(k, dec, beta, s_value)
    sym = deformed_symbol(k, dec, beta, s_value)
    assert third_cumulant_moments(k, sym) == pytest.approx(c.third, rel=1e-10, abs=1e-13)
    # five-point stencil on the log-moment
    h = 1e-2
    stencil = (mf(s_value + 2 * h) - 2 * mf(s_value + h) + 2 * mf(s_value - h)
               - mf(s_value - 2 * h)) / (2 * h**3)
    fine = richardson_derivative(mf, s_value, 3)
    assert fine == pytest.approx(c.third, rel=1e-4)
    assert stencil == pytest.approx(c.third, rel=1e-2)
    assert c.first == pytest.approx(richardson_derivative(mf, s_value, 1), rel=1e-7)


def test_scalar_third_cumulant():
    p, k = 0.3, 1.7
    c = symbol_cumulants(np.array([[k]]), np.array([[p]]))
    assert c.third == pytest.approx(k**3 * p * (1 - p) * (1 - 2 * p), rel=1e-14)


def test_connected_3pt_disconnected_vanishes():
    s = np.diag([0.2, 0.4, 0.6, 0.8])
    assert connected_3pt(s, [(0, 1), (2, 3), (1, 0)]) == 0


def test_make_symbol_clamps(caplog):
    s = np.diag([-1e-6, 0.5, 1 + 1e-6])
    with caplog.at_level("WARNING"):
        sym = make_symbol(s)
    ev = np.linalg.eigvalsh(sym.matrix)
    assert ev.min() >= 0 and ev.max() <= 1
    assert "clamping" in caplog.text
    with pytest.raises(ValueError):
        make_symbol(np.array([[0.1, 0.2], [0.0, 0.3]]))
