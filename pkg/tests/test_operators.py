import numpy as np
import pytest

from lrcurrent.lattice import DisorderSpec, build_box, sample_disorder
from lrcurrent.operators import (CombesThomasParams, PartitionError, combes_thomas_check,
                                 combes_thomas_margin, default_margin, fermi_symbol,
                                 hamiltonian, hermiticity_defect, hopping_matrix,
                                 norm_bound, propagator, restrict, spectral, taylor_margin)


def _sample(d=1, L=3, seed=0, **kw):
    box = build_box(d, L)
    return box, sample_disorder(DisorderSpec(seed=seed, **kw), box)


def test_laplacian_small():
    box, s = _sample(1, 1)
    delta = hopping_matrix(box, s, 0.0)
    expected = np.array([[2, -1, 0], [-1, 2, -1], [0, -1, 2]], dtype=complex)
    assert np.array_equal(delta, expected)


def test_hopping_edge_orientation():
    box = build_box(1, 1)
    s = sample_disorder(DisorderSpec(onsite="point", edge="point", edge_value=1j), box)
    delta = hopping_matrix(box, s, 0.5)
    x, xp = box.index((0,)), box.index((1,))
    assert delta[x, xp] == -(1 + 0.5j)
    assert delta[xp, x] == -(1 - 0.5j)


@pytest.mark.parametrize("d,theta,lam", [(1, 0.0, 0.0), (2, 0.7, 1.3), (3, 1.0, 0.5)])
def test_hamiltonian_hermitian_and_bounded(d, theta, lam):
    box, s = _sample(d, 2, seed=4, edge="disc")
    h = hamiltonian(box, s, lam, theta)
    assert hermiticity_defect(h) < 1e-12
    assert np.max(np.abs(np.linalg.eigvalsh(h))) <= norm_bound(d, lam, theta)
    assert np.array_equal(hamiltonian(box, s, 0.0, theta), hopping_matrix(box, s, theta))
    assert np.allclose(np.diag(h).real, 2 * d + lam * s.onsite)


def test_negative_parameters_rejected():
    box, s = _sample()
    with pytest.raises(ValueError):
        hamiltonian(box, s, -1.0, 0.0)
    with pytest.raises(ValueError):
        hopping_matrix(box, s, -0.1)


def test_restrict():
    box, s = _sample(1, 3, seed=2)
    h = hamiltonian(box, s, 1.0, 0.5)
    n = box.n_sites
    assert np.array_equal(restrict(h, [range(n)]), h)
    assert np.array_equal(restrict(h, [[i] for i in range(n)]), np.diag(np.diag(h)))
    halves = restrict(h, [range(3), range(3, n)])
    assert halves[2, 3] == 0 and halves[1, 2] == h[1, 2]
    with pytest.raises(PartitionError):
        restrict(h, [[0, 1], [1, 2]])
    with pytest.raises(PartitionError):
        restrict(h, [[n]])


def test_spectral_zero_and_laplacian():
    assert np.all(spectral(np.zeros((4, 4))).values == 0)
    n = 9
    box, s = _sample(1, 4)
    dec = spectral(hopping_matrix(box, s, 0.0))
    j = np.arange(1, n + 1)
    assert np.allclose(dec.values, np.sort(2 - 2 * np.cos(j * np.pi / (n + 1))), atol=1e-13)
    assert dec.reconstruction_error() < 1e-11
    u = dec.vectors
    assert np.max(np.abs(u.conj().T @ u - np.eye(n))) < 1e-12
    with pytest.raises(ValueError):
        spectral(np.array([[0, 1], [0, 0]], dtype=complex))


def test_fermi_symbol():
    box, s = _sample(2, 2, seed=7)
    dec = spectral(hamiltonian(box, s, 1.0, 0.3))
    assert np.allclose(fermi_symbol(dec, 0.0), 0.5 * np.eye(box.n_sites), atol=1e-15)
    f = fermi_symbol(dec, 2.0)
    other = dec.apply(1.0 / (1.0 + np.exp(-2.0 * dec.values)))
    assert np.max(np.abs(np.eye(box.n_sites) - f - other)) < 1e-12
    ev = np.linalg.eigvalsh(f)
    assert ev.min() > 0 and ev.max() < 1
    assert hermiticity_defect(f) < 1e-12


def test_propagator_group():
    box, s = _sample(2, 2, seed=8, edge="disc")
    dec = spectral(hamiltonian(box, s, 0.8, 0.6))
    n = box.n_sites
    assert np.allclose(propagator(dec, 0.0), np.eye(n), atol=1e-13)
    u, v = propagator(dec, 0.7), propagator(dec, -1.3)
    assert np.max(np.abs(u @ v - propagator(dec, -0.6))) < 1e-10
    assert np.max(np.abs(u.conj().T - propagator(dec, -0.7))) < 1e-12
    assert np.max(np.abs(u.conj().T @ u - np.eye(n))) < 1e-11


def test_combes_thomas_params():
    p = CombesThomasParams(1.0, 1.0, 1, 0.0)
    assert p.mu_eta == pytest.approx(1 / (8 * np.e))
    assert combes_thomas_margin(p) == 201
    with pytest.raises(ValueError):
        CombesThomasParams(0.0, 1.0)


def test_combes_thomas_check_time_zero_and_decay():
    box, s = _sample(1, 15, seed=1)
    dec = spectral(hamiltonian(box, s, 1.0, 0.0))
    params = CombesThomasParams(d=1)
    rep0 = combes_thomas_check(dec, params, 0.0, box)
    assert rep0.max_ratio <= 1.0 / 36.0 + 1e-15
    rep = combes_thomas_check(dec, params, 2.0, box)
    assert rep.max_ratio <= 1.0
    # averaged magnitude envelope falls off with distance
    tail = rep.mean_ratio_by_distance
    assert tail[-1] < tail[len(tail) // 2] < tail[0]


def test_margins():
    assert taylor_margin(1, 1.0, 0.0, 0.0) == 1
    r = taylor_margin(2, 1.0, 0.0, 0.5)
    q = 0.5 * 5.0
    assert r * np.log(q) + q - np.log(float(np.prod(np.arange(1, r + 1)))) <= np.log(1e-8)
    assert default_margin(1, 32, 1.0, 0.0, 0.5) == (201, "combes-thomas")
    m, rule = default_margin(2, 6, 1.0, 0.0, 0.5)
    assert rule == "taylor-tail" and m == r
