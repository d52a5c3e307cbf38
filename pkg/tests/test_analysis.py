import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from opinion_lab.analysis import (
    chord_rates,
    consensus_report,
    contraction_certificate,
    find_equilibria,
    find_equilibrium,
    interior_equilibrium_test,
    mu_inf,
    multistart_starts,
    socially_closed_agents,
)
from opinion_lab.errors import AssumptionViolated, NoConvergence
from opinion_lab.generators import random_network, random_params
from opinion_lab.integrate import IntegratorConfig, simulate, simulate_ensemble
from opinion_lab.model import AgentParams, build_network, invariant_interval, jacobian, preferred_roots

seeds = st.integers(0, 2**32 - 1)


def consensus_network(rng, n, xi, kind="a1"):
    """Random network whose preferences are tuned so every m_i equals ``xi``."""
    base = random_network(rng, n, kind=kind)
    w, r = base.importance, base.resources
    p = xi + xi**3 * base.B / (w * r**2)
    return build_network(base.weights, [AgentParams(*t) for t in zip(p, w, r)])


def test_mu_inf_examples():
    assert mu_inf(np.eye(3)) == 1.0
    assert mu_inf([[-2, 1], [0.5, -3]]) == -1.0
    assert mu_inf(np.zeros((4, 4))) == 0.0
    with pytest.raises(ValueError):
        mu_inf(np.zeros((2, 3)))


def test_certificate_a1(rng):
    net = random_network(rng, 5, kind="a1")
    cert = contraction_certificate(net)
    assert cert.satisfies_A2
    assert np.allclose(cert.per_agent_margin, net.importance * net.resources / net.B)
    assert cert.rate_bound < 0


def test_certificate_hopf(hopf_sc):
    cert = contraction_certificate(hopf_sc.network())
    assert cert.per_agent_margin[0] == pytest.approx(2 - 40 / 3, rel=1e-14)
    assert not cert.satisfies_A2


def test_certificate_single_agent():
    cert = contraction_certificate(build_network([[0.0]], [AgentParams(1.0, 2.5, 4.0)]))
    assert cert.per_agent_margin[0] == pytest.approx(2.5)
    assert cert.satisfies_A2


@given(seeds, st.integers(1, 8))
def test_mu_inf_bound_realized(seed, n):
    rng = np.random.default_rng(seed)
    net = random_network(rng, n)
    cert = contraction_certificate(net)
    assert mu_inf(jacobian(net, np.zeros(n))) == pytest.approx(cert.rate_bound, abs=1e-12 * (1 + abs(cert.rate_bound)))
    for _ in range(5):
        assert mu_inf(jacobian(net, rng.uniform(-10, 10, n))) <= cert.rate_bound + 1e-12


def test_equilibrium_at_consensus(rng):
    net = consensus_network(rng, 4, 2.5)
    rep = find_equilibrium(net, np.full(4, 2.5))
    assert np.allclose(rep.z_star, 2.5, atol=1e-12)
    assert rep.residual < 1e-10 and rep.iterations == 0


def test_disagreement_equilibrium(disagreement_sc):
    net = disagreement_sc.network()
    rep = find_equilibrium(net, disagreement_sc.initial_state())
    assert np.all((rep.z_star >= -11.13) & (rep.z_star <= 15.53))
    assert rep.residual <= 1e-10 * (1 + np.abs(rep.z_star).max())
    assert rep.in_interior_of_M and rep.jacobian_eigen_max_real < 0


def test_no_convergence_without_fallback():
    # a singular 1-D problem from far away: Newton on a flat cubic stalls inside one step budget
    net = build_network([[0.0]], [AgentParams(1.0, 1e-6, 1e3)])
    with pytest.raises(NoConvergence):
        find_equilibrium(net, [1e8], max_iter=2, fallback=False)


@given(seeds, st.integers(1, 8))
@settings(max_examples=15)
def test_uniqueness_under_a2(seed, n):
    rng = np.random.default_rng(seed)
    net = random_network(rng, n, kind="a2")
    sols = [find_equilibrium(net, g).z_star for g in rng.uniform(-20, 20, (10, n))]
    for s in sols[1:]:
        assert np.max(np.abs(s - sols[0])) < 1e-8 * (1 + np.abs(sols[0]).max())


@given(seeds, st.integers(2, 5), st.booleans())
@settings(max_examples=20)
def test_consensus_iff_equal_roots(seed, n, tuned):
    rng = np.random.default_rng(seed)
    net = consensus_network(rng, n, rng.uniform(-3, 3), kind="a2") if tuned else random_network(rng, n, kind="a2")
    rep = consensus_report(net)
    z = find_equilibrium(net, preferred_roots(net)).z_star
    is_consensus = np.ptp(z) <= 1e-8 * (1 + np.abs(z).max())
    assert rep.consensus_exists == tuned == is_consensus


def test_neutral_consensus(rng):
    base = random_network(rng, 4, p_range=(0, 0))
    rep = consensus_report(base)
    assert rep.consensus_exists and rep.xi == 0.0
    assert rep.sigma_delta is None


def test_consensus_fixture_dominance(consensus_sc):
    net = consensus_sc.network()
    rep = consensus_report(net, tol=0.5 / 40)
    assert rep.consensus_exists and rep.xi == pytest.approx(40, abs=0.5)
    printed_sigma = np.array([1.35, 9.49, 7.99, 6.09, 2, 6.59]) * 1e6
    assert np.all(np.abs(rep.dominance_weights / printed_sigma - 1) < 0.01)
    printed_delta = np.array([185.22, 26.40, 31.33, 41.16, 125.39, 37.99])
    assert np.allclose(rep.deviations, printed_delta, atol=0.05)
    assert rep.sigma_delta_spread < 0.01
    assert np.allclose(rep.sigma_delta, net.B * 40**3, rtol=0.01)
    assert rep.dominance_consistent
    assert rep.dominance_order == (1, 2, 5, 3, 4, 0)


@given(seeds, st.integers(2, 6))
def test_dominance_identity_exact(seed, n):
    rng = np.random.default_rng(seed)
    xi = rng.uniform(0.5, 5) * rng.choice([-1, 1])
    net = consensus_network(rng, n, xi)
    rep = consensus_report(net)
    assert rep.consensus_exists
    assert np.allclose(rep.sigma_delta, net.B * abs(xi) ** 3, rtol=1e-9)
    assert rep.dominance_consistent


def test_interior_strongly_connected(disagreement_sc):
    t = interior_equilibrium_test(disagreement_sc.network())
    assert t.holds and not t.unreached_max and not t.unreached_min


def test_interior_two_agent_counterexample():
    # a_12 > 0 (agent 2 influences 1), a_21 = 0, m_1 > m_2
    net = build_network([[0, 1.0], [0, 0]], [(2.0, 1, 1), (0.5, 1, 1)])
    t = interior_equilibrium_test(net)
    assert not t.holds
    assert t.unreached_max == frozenset() and t.unreached_min == frozenset({1})


def test_interior_complete_graph(rng):
    n = 4
    net = build_network(np.ones((n, n)), random_params(rng, n))
    assert interior_equilibrium_test(net).holds


def test_interior_preconditions(rng, hopf_sc):
    with pytest.raises(AssumptionViolated):
        interior_equilibrium_test(hopf_sc.network())
    with pytest.raises(AssumptionViolated):
        interior_equilibrium_test(random_network(rng, 3, kind="a1", p_range=(0, 0)))


@given(seeds, st.integers(2, 5))
@settings(max_examples=30)
def test_interior_test_matches_equilibrium(seed, n):
    rng = np.random.default_rng(seed)
    net = random_network(rng, n, kind="a1", edge_prob=0.3)
    lo, hi, _, _ = invariant_interval(net)
    z = find_equilibrium(net, preferred_roots(net)).z_star
    gap = min(z.min() - lo, hi - z.max())
    if interior_equilibrium_test(net).holds:
        assert gap > 0
    else:
        assert gap < 1e-9 * (1 + abs(lo) + abs(hi))


def test_socially_closed(rng):
    params = random_params(rng, 4)
    assert socially_closed_agents(build_network(np.ones((4, 4)), params)) == frozenset()
    assert socially_closed_agents(build_network(np.zeros((4, 4)), params)) == frozenset(range(4))
    W = np.ones((4, 4))
    W[2] = 0
    net = build_network(W, params)
    assert socially_closed_agents(net) == frozenset({2})
    traj = simulate(net, rng.uniform(-5, 5, 4), IntegratorConfig(t_end=200))
    assert traj.final[2] == pytest.approx(preferred_roots(net)[2], abs=1e-6)


@given(seeds, st.integers(2, 6))
@settings(max_examples=10)
def test_observed_contraction_rate(seed, n):
    rng = np.random.default_rng(seed)
    net = random_network(rng, n, kind="a2")
    cert = contraction_certificate(net)
    T = min(5.0 / abs(cert.rate_bound), 200.0)
    a, b = simulate_ensemble(net, rng.uniform(-10, 10, (2, n)), IntegratorConfig(t_end=T, record_every=T / 100))
    rates = chord_rates(a, b)
    assert rates.size > 0
    assert np.all(rates <= cert.rate_bound + 0.05 * abs(cert.rate_bound))


def test_multistart_lattice_and_random(rng):
    net = random_network(rng, 3)
    S = multistart_starts(net, points_per_axis=4)
    m = preferred_roots(net)
    assert S.shape == (64, 3) and S.min() == pytest.approx(m.min() - 1) and S.max() == pytest.approx(m.max() + 1)
    big = random_network(rng, 6)
    assert multistart_starts(big, n_random=10, seed=1).shape == (10, 6)
    assert np.array_equal(multistart_starts(big, n_random=10, seed=1), multistart_starts(big, n_random=10, seed=1))


def test_multistart_finds_several_equilibria():
    # strong mutual enmity with zero preferences: 0 is unstable and two polarized equilibria appear
    net = build_network([[0, -5.0], [-5.0, 0]], [(0.0, 1, 1), (0.0, 1, 1)])
    # the polarized pair sits at +-sqrt(4.5), outside the default [-1, 1] lattice
    axis = np.linspace(-3, 3, 7)
    eqs = find_equilibria(net, starts=[(a, b) for a in axis for b in axis])
    zs = [tuple(np.round(e.z_star, 8) + 0.0) for e in eqs]
    a = np.sqrt(4.5)
    assert (0.0, 0.0) in zs
    assert any(np.allclose(z, (a, -a)) for z in zs) and any(np.allclose(z, (-a, a)) for z in zs)
    assert zs == sorted(zs)
    assert all(e.residual < 1e-9 for e in eqs)
