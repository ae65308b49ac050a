import itertools

import numpy as np
import pytest
import scipy.integrate

from rfphi4.gaussian import (ConditionalGaussian, GaussianSpec, det_split,
                             direct_energy, energy_split, gaussian_partition,
                             laplacian, log_gaussian_partition, min_energy,
                             minimizer, resolvent_direct, shifted_operator,
                             source_vector, split_energy_value)
from rfphi4.lattice import LatticeVolume, SiteSet
from rfphi4.model import BoundaryField, ModelParams


def random_subset(vol, rng, max_size=None):
    hi = max_size or vol.nsites
    size = rng.integers(1, hi + 1)
    return SiteSet(vol, tuple(rng.choice(vol.nsites, size=size, replace=False)))


def contact_counts(V):
    vol = V.volume
    table, out_count = vol.neighbor_table()
    vset = set(V.members)
    return np.array([sum(1 for j in table[s] if j >= 0 and int(j) not in vset)
                     + out_count[s] for s in V.members], dtype=float)


def test_single_site_resolvent_d3():
    vol = LatticeVolume((1, 1, 1))
    R = resolvent_direct(vol.all_sites(), 100.0)
    assert R[0, 0] == pytest.approx(1 / 106, rel=1e-14)


def test_two_site_chain_off_diagonal():
    vol = LatticeVolume((2,))
    R = resolvent_direct(vol.all_sites(), 100.0)
    assert R[0, 1] == pytest.approx(1 / (102**2 - 1), rel=1e-12)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_resolvent_row_identity(d, rng):
    vol = LatticeVolume((4,) * d)
    for _ in range(10):
        V = random_subset(vol, rng, max_size=min(vol.nsites, 20))
        R = resolvent_direct(V, 100.0, check_residual=1e-10)
        lhs = R @ (100.0 * np.ones(len(V)) + contact_counts(V))
        assert np.max(np.abs(lhs - 1)) < 1e-10


def test_resolvent_entry_positivity(rng):
    vol = LatticeVolume((4, 4, 4))
    for _ in range(10):
        V = random_subset(vol, rng, max_size=12)
        R = resolvent_direct(V, 50.0)
        assert np.min(R) >= 0


def test_resolvent_diagonal_monotone_in_set(rng):
    vol = LatticeVolume((3, 3))
    x = vol.index((1, 1))
    nested = [SiteSet(vol, (x,))]
    rest = [i for i in range(vol.nsites) if i != x]
    rng.shuffle(rest)
    cur = [x]
    for extra in rest[:5]:
        cur = cur + [extra]
        nested.append(SiteSet(vol, tuple(cur)))
    prev = 0.0
    for V in nested:
        pos = list(V.members).index(x)
        val = resolvent_direct(V, 30.0)[pos, pos]
        assert val >= prev - 1e-15
        prev = val


def test_quadratic_form_sandwich(rng):
    p = ModelParams(q=0.07, m_star=1.0, a=1.3, d=2)
    vol = LatticeVolume((3, 3))
    for _ in range(20):
        V = random_subset(vol, rng)
        A = shifted_operator(V, p)
        v = rng.normal(size=len(V))
        quad = v @ A @ v
        norm2 = v @ v
        assert p.a * norm2 - 1e-12 <= quad <= (p.a + 4 * p.d * p.q) * norm2 + 1e-12


def test_minimizer_constant_at_well():
    p = ModelParams(q=0.2, m_star=1.7, a=1.0, d=2)
    vol = LatticeVolume((3, 3))
    V = vol.all_sites()
    bc = BoundaryField.constant(p.m_star)
    m = minimizer(V, np.ones(9), np.zeros(9), p, bc, mode="global")
    assert np.max(np.abs(m - p.m_star)) < 1e-12


def test_minimizer_single_site_worst_case():
    # one minus site, all boundary values at the wrong-sign window edge
    p = ModelParams(q=0.01, m_star=2.0, a=1.0, d=3)
    A2 = 0.4
    vol = LatticeVolume((1, 1, 1))
    V = vol.all_sites()
    bc = BoundaryField.constant(p.m_star + A2)
    m = minimizer(V, np.array([-1.0]), np.zeros(1), p, bc, mode="global")
    expected = -p.m_star + (2 * p.m_star + A2) * 2 * p.d / (p.c + 2 * p.d)
    assert m[0] == pytest.approx(expected, abs=1e-12)


def test_minimizer_disorder_shift_bounded(rng):
    p = ModelParams(q=0.05, m_star=2.0, a=1.0, delta=0.3, d=2)
    vol = LatticeVolume((3, 3))
    V = vol.all_sites()
    bc = BoundaryField.constant(p.m_star)
    sigma = rng.choice([-1.0, 1.0], 9)
    eta = rng.uniform(-p.delta, p.delta, 9)
    m0 = minimizer(V, sigma, np.zeros(9), p, bc, mode="global")
    m1 = minimizer(V, sigma, eta, p, bc, mode="global")
    assert np.max(np.abs(m1 - m0)) <= p.delta / p.a + 1e-12


def test_conditional_minimizer_decouples(rng):
    p = ModelParams(q=0.1, m_star=1.0, a=1.0, d=1)
    vol = LatticeVolume((5,))
    V = SiteSet(vol, (0, 2, 3))  # two components: {0} and {2,3}
    bc = BoundaryField.constant(0.5)
    inside = {1: 0.3, 4: -0.2}
    sigma = np.array([1.0, -1.0, 1.0])
    eta = rng.uniform(-0.1, 0.1, 3)
    m_whole = minimizer(V, sigma, eta, p, bc, inside_values=inside,
                        mode="conditional", per_component=False)
    m_comp = minimizer(V, sigma, eta, p, bc, inside_values=inside,
                       mode="conditional", per_component=True)
    assert np.allclose(m_whole, m_comp, atol=1e-12)


def test_conditional_requires_boundary_values():
    p = ModelParams(q=0.1, m_star=1.0, a=1.0, d=1)
    vol = LatticeVolume((3,))
    V = SiteSet(vol, (0, 1))
    with pytest.raises(ValueError):
        minimizer(V, np.ones(2), np.zeros(2), p, BoundaryField.constant(1.0),
                  mode="conditional")


def test_min_energy_zero_in_pure_well():
    p = ModelParams(q=0.3, m_star=1.4, a=1.2, d=2)
    vol = LatticeVolume((2, 2))
    bc = BoundaryField.constant(p.m_star)
    val = min_energy(vol, np.ones(4), np.zeros(4), p, bc)
    assert abs(val) < 1e-10


def test_min_energy_flip_covariance(rng):
    p = ModelParams(q=0.15, m_star=1.8, a=1.0, delta=0.4, d=2)
    vol = LatticeVolume((2, 3))
    sigma = rng.choice([-1.0, 1.0], 6)
    eta = rng.uniform(-0.4, 0.4, 6)
    bc = BoundaryField.constant(1.1)
    v1 = min_energy(vol, sigma, eta, p, bc)
    v2 = min_energy(vol, -sigma, -eta, p, bc.negated())
    assert v1 == pytest.approx(v2, rel=1e-12)


def test_min_energy_matches_direct_minimization(rng):
    p = ModelParams(q=0.25, m_star=2.0, a=1.0, delta=0.5, d=1)
    vol = LatticeVolume((3,))
    V = vol.all_sites()
    bc = BoundaryField.constant(2.0)
    for _ in range(10):
        sigma = rng.choice([-1.0, 1.0], 3)
        eta = rng.uniform(-0.5, 0.5, 3)
        z = source_vector(V, sigma, eta, p, bc)
        A = shifted_operator(V, p)
        mmin = np.linalg.solve(A, z)
        direct = direct_energy(V, mmin, sigma, eta, p, bc)
        closed = min_energy(vol, sigma, eta, p, bc)
        assert abs(closed - direct) <= 1e-9 * (1 + abs(direct))


def test_min_energy_normalized_variant(rng):
    # the normalized variant removes the sign-independent pieces: for the
    # all-plus configuration it reduces to minus the disorder-vacuum term
    from rfphi4.gaussian import min_energy_normalized
    p = ModelParams(q=0.1, m_star=2.0, a=1.0, delta=0.3, d=1)
    vol = LatticeVolume((4,))
    V = vol.all_sites()
    bc = BoundaryField.constant(p.m_star)
    eta = rng.uniform(-0.3, 0.3, 4)
    R = resolvent_direct(V, p.c)
    vac = (p.a * p.m_star / p.q) * float(eta @ R @ np.ones(4))
    assert min_energy_normalized(vol, np.ones(4), eta, p, bc) == pytest.approx(-vac, rel=1e-10)
    sigma = rng.choice([-1.0, 1.0], 4)
    direct = (min_energy(vol, sigma, eta, p, bc)
              - min_energy(vol, np.ones(4), eta, p, bc) - vac)
    assert min_energy_normalized(vol, sigma, eta, p, bc) == pytest.approx(direct, rel=1e-12)


def test_energy_split_identity_random(rng):
    p = ModelParams(q=0.2, m_star=1.5, a=1.1, delta=0.3, d=2)
    vol = LatticeVolume((2, 2))
    V = vol.all_sites()
    bc = BoundaryField.constant(1.5)
    sigma = rng.choice([-1.0, 1.0], 4)
    eta = rng.uniform(-0.3, 0.3, 4)
    G = SiteSet(vol, (0,))
    outer, cond, infh = energy_split(vol, G, sigma, eta, p, bc)
    outer.validate()
    for _ in range(100):
        m = rng.normal(0, 2, 4)
        h = direct_energy(V, m, sigma, eta, p, bc)
        s = split_energy_value(outer, cond, infh, vol, m)
        assert abs(h - s) <= 1e-9 * (1 + abs(h))


def test_energy_split_vanishes_at_minimizer(rng):
    p = ModelParams(q=0.1, m_star=1.0, a=1.0, d=1)
    vol = LatticeVolume((4,))
    V = vol.all_sites()
    bc = BoundaryField.constant(0.7)
    sigma = rng.choice([-1.0, 1.0], 4)
    eta = rng.uniform(-0.1, 0.1, 4)
    G = SiteSet(vol, (1,))
    outer, cond, infh = energy_split(vol, G, sigma, eta, p, bc)
    mbar = minimizer(V, sigma, eta, p, bc, mode="global")
    val = split_energy_value(outer, cond, infh, vol, mbar)
    assert val == pytest.approx(infh, abs=1e-10)
    # both fluctuation parts vanish separately at the global minimizer
    pos = {s: k for k, s in enumerate(V.members)}
    assert outer.evaluate(mbar[[pos[s] for s in outer.support.members]]) < 1e-10


def test_energy_split_empty_g_degenerate(rng):
    p = ModelParams(q=0.1, m_star=1.0, a=1.0, d=1)
    vol = LatticeVolume((3,))
    bc = BoundaryField.constant(1.0)
    sigma = np.array([1.0, -1.0, 1.0])
    eta = np.zeros(3)
    outer, cond, infh = energy_split(vol, SiteSet(vol, ()), sigma, eta, p, bc)
    assert len(outer.support) == 0
    assert cond.matrix.shape == (3, 3)
    m = rng.normal(0, 1, 3)
    h = direct_energy(vol.all_sites(), m, sigma, eta, p, bc)
    assert split_energy_value(outer, cond, infh, vol, m) == pytest.approx(h, rel=1e-10)


def test_energy_split_conditional_blocks_decouple():
    p = ModelParams(q=0.1, m_star=1.0, a=1.0, d=1)
    vol = LatticeVolume((5,))
    bc = BoundaryField.constant(1.0)
    sigma = np.ones(5)
    G = SiteSet(vol, (2,))
    _, cond, _ = energy_split(vol, G, sigma, np.zeros(5), p, bc)
    # support {0,2,4} minus dG {1,3} -> components {0},{2},{4}: matrix diagonal
    off = cond.matrix - np.diag(np.diag(cond.matrix))
    assert np.max(np.abs(off)) == 0.0


def test_det_split_full_projection(rng):
    Q = rng.normal(size=(4, 4))
    Q = Q @ Q.T + 4 * np.eye(4)
    f1, f2 = det_split(Q, range(4))
    assert f2 == 1.0
    assert f1 == pytest.approx(np.linalg.det(Q), rel=1e-10)


def test_det_split_one_by_one():
    Q = np.array([[2.5]])
    f1, f2 = det_split(Q, [0])
    assert (f1, f2) == (pytest.approx(2.5), 1.0)


def test_det_split_random(rng):
    Q = rng.normal(size=(6, 6))
    Q = Q @ Q.T + 6 * np.eye(6)
    f1, f2 = det_split(Q, [1, 4])
    assert f1 * f2 == pytest.approx(np.linalg.det(Q), rel=1e-9)


def test_partition_single_site_vs_quadrature():
    p = ModelParams(q=0.3, m_star=1.2, a=1.4, delta=0.2, d=1)
    vol = LatticeVolume((1,))
    bc = BoundaryField.constant(0.9)
    sigma, eta = np.array([-1.0]), np.array([0.15])

    def density(m):
        return np.exp(-direct_energy(vol.all_sites(), [m], sigma, eta, p, bc))

    val, _ = scipy.integrate.quad(density, -15, 15, limit=200)
    assert gaussian_partition(vol, sigma, eta, p, bc) == pytest.approx(val, rel=1e-8)


def test_partition_two_site_vs_quadrature():
    p = ModelParams(q=0.25, m_star=1.0, a=1.1, d=1)
    vol = LatticeVolume((2,))
    bc = BoundaryField.constant(1.0)
    sigma, eta = np.array([1.0, -1.0]), np.array([0.05, -0.1])

    def density(m0, m1):
        return np.exp(-direct_energy(vol.all_sites(), [m0, m1], sigma, eta, p, bc))

    val, _ = scipy.integrate.dblquad(lambda y, x: density(x, y), -12, 12,
                                     lambda x: -12, lambda x: 12)
    assert gaussian_partition(vol, sigma, eta, p, bc) == pytest.approx(val, rel=1e-8)


def test_partition_ratio_depends_only_on_min_energy(rng):
    p = ModelParams(q=0.2, m_star=1.5, a=1.0, d=2)
    vol = LatticeVolume((2, 2))
    bc = BoundaryField.constant(1.5)
    eta = rng.uniform(-0.2, 0.2, 4)
    s1 = np.array([1.0, 1.0, -1.0, 1.0])
    s2 = np.array([-1.0, 1.0, 1.0, -1.0])
    lhs = (log_gaussian_partition(vol, s1, eta, p, bc)
           - log_gaussian_partition(vol, s2, eta, p, bc))
    rhs = min_energy(vol, s2, eta, p, bc) - min_energy(vol, s1, eta, p, bc)
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_gaussian_spec_validates():
    vol = LatticeVolume((2,))
    bad = GaussianSpec(vol.all_sites(), np.array([[1.0, 2.0], [2.0, 1.0]]),
                       np.zeros(2))
    with pytest.raises(Exception):
        bad.validate()
    good = GaussianSpec(vol.all_sites(), np.array([[2.0, 0.5], [0.5, 2.0]]),
                        np.zeros(2))
    assert good.validate()
