import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from netadvect.advection import (
    DirectedFlow, build_advection_matrix, build_directed_flow,
    node_balance_matrix,
)
from netadvect.analysis import (
    UndefinedCorrelationError, classify_persistence, indegree_abundance_correlation,
    linearized_matrix, niche_distance_profile, node_equilibrium_root, principal_eigenvalue,
)
from netadvect.dynamics import SpeciesParams, steady_state
from netadvect.environment import ThermalResponse, growth_rate, uniform_field
from netadvect.graph import from_edges, gen_erdos_renyi, gen_watts_strogatz, laplacian

from oracles import ode_growth_rate

STANDARD = ThermalResponse(3.0, 2.0, 25.0)


def test_linearized_matrix_examples():
    theta = np.array([18.0, 20.0, 28.0])
    g = from_edges(3, [(0, 1), (1, 2)])
    adv = build_advection_matrix(build_directed_flow(g, theta, 20.0))
    p = SpeciesParams(STANDARD, delta=0.5, d=0.0, alpha=0.0)
    sys0 = linearized_matrix(theta, p, laplacian(g), adv)
    r = 3 * np.exp(-(theta - 25) ** 2 / 8) - 0.5
    np.testing.assert_allclose(sys0.m, np.diag(r), atol=0)
    np.testing.assert_allclose(sys0.r, r)

    one = linearized_matrix([25.0], p, np.zeros((1, 1)), np.zeros((1, 1)))
    assert one.m.shape == (1, 1) and one.m[0, 0] == 2.5

    p = SpeciesParams(STANDARD, delta=0.5, d=0.3, alpha=1.0)
    m = linearized_matrix(theta, p, laplacian(g), adv).m
    expected = (np.diag(r)
                - 0.3 * np.array([[1, -1, 0], [-1, 2, -1], [0, -1, 1]])
                - np.array([[0, 0, 0], [0, -1, -1], [0, 1, 1]]))
    np.testing.assert_allclose(m, expected, atol=1e-15)


def test_principal_eigenvalue_examples():
    lam, phi = principal_eigenvalue(np.diag([2.5, -1.0, 0.0]))
    assert lam == 2.5
    np.testing.assert_allclose(phi, [1, 0, 0])
    lap2 = np.array([[1.0, -1.0], [-1.0, 1.0]])
    lam, phi = principal_eigenvalue(-lap2)
    assert lam == pytest.approx(0.0, abs=1e-14)
    np.testing.assert_allclose(phi, [1 / math.sqrt(2)] * 2)


def test_principal_eigenvalue_complex_pair():
    rot = np.array([[0.1, -2.0], [2.0, 0.1]])
    lam, phi = principal_eigenvalue(rot)
    assert lam == pytest.approx(0.1)
    assert phi is None


def test_principal_eigenvalue_rejects_bad_input():
    with pytest.raises(ValueError):
        principal_eigenvalue(np.ones((2, 3)))
    with pytest.raises(ValueError):
        principal_eigenvalue(np.array([[np.nan]]))


def model_matrix(seed, n=30):
    rng = np.random.default_rng(seed)
    g = gen_erdos_renyi(n, rng.uniform(0.1, 0.4), seed)
    f = uniform_field(n, 15, 35, seed)
    p = SpeciesParams(STANDARD, delta=rng.uniform(0.2, 3.5), d=rng.uniform(0, 1.5),
                      alpha=rng.uniform(0, 1.5))
    adv = build_advection_matrix(build_directed_flow(g, f, 25.0))
    return linearized_matrix(f, p, laplacian(g), adv).m


@pytest.mark.parametrize("seed", [1, 3, 5])
def test_eigenvalue_matches_growth_oracle(seed):
    m = model_matrix(seed)
    lam, phi = principal_eigenvalue(m)
    assert abs(lam - ode_growth_rate(m)) <= 1e-3
    if phi is not None:
        assert np.linalg.norm(m @ phi - lam * phi) <= 1e-8


def test_classify_examples():
    assert classify_persistence(-0.2).classification == "extinct"
    assert classify_persistence(0.0).classification == "critical"
    lam, _ = principal_eigenvalue(np.array([[growth_rate(25.0, STANDARD) - 0.5]]))
    assert lam == 2.5
    assert classify_persistence(lam).classification == "persistent"


@pytest.mark.parametrize("seed", range(4))
@pytest.mark.parametrize("c", [0.01, 1.0, 37.0])
def test_classification_scale_invariant(seed, c):
    m = model_matrix(seed, n=15)
    lam, _ = principal_eigenvalue(m)
    lam_c, _ = principal_eigenvalue(c * m)
    assert lam_c == pytest.approx(c * lam, rel=1e-9, abs=1e-12)
    if abs(lam) > 1e-6:
        assert (classify_persistence(lam_c).classification
                == classify_persistence(lam).classification)


def test_node_equilibrium_root_examples():
    assert node_equilibrium_root(-0.5, 1.0, 1.0, 1.0) == pytest.approx(0.5, abs=1e-12)
    assert node_equilibrium_root(-0.5, 1.0, 1.0, 0.0) == 0.0
    with pytest.raises(ValueError):
        node_equilibrium_root(0.1, 0.0, 1.0, 1.0)


@settings(max_examples=300)
@given(r=st.floats(-5, 5), gam=st.floats(1e-3, 5), alpha=st.floats(1e-3, 5),
       inflow=st.floats(0, 5))
def test_node_equilibrium_root_properties(r, gam, alpha, inflow):
    u = node_equilibrium_root(r, gam, alpha, inflow)
    terms = (u * (r - alpha), gam * u * u, alpha * inflow)
    # residual is judged against the size of the terms it cancels
    assert abs(terms[0] - terms[1] + terms[2]) <= 1e-12 * max(1.0, *map(abs, terms))
    assert u >= 0
    if inflow > 0:
        assert u > 0


def test_node_persistence_two_node_chain():
    # node 1 is locally unviable (r < 0) and survives on the inflow from node 0
    theta = np.array([25.0, 30.0])
    g = from_edges(2, [(0, 1)])
    flow = build_directed_flow(g, theta, 25.0)
    p = SpeciesParams(STANDARD, delta=0.5, d=0.0, alpha=1.0)
    gam = growth_rate(theta, STANDARD)
    assert gam[1] - p.delta < 0
    ss = steady_state([0.1, 0.1], theta, p, laplacian(g), node_balance_matrix(flow),
                      tol=1e-12)
    assert ss.converged and ss.clamp_events == 0
    assert ss.u[1] > 0
    root = node_equilibrium_root(gam[1] - p.delta, gam[1], p.alpha, ss.u[0])
    assert ss.u[1] == pytest.approx(root, abs=1e-6)


def test_correlation_examples():
    flow = DirectedFlow(np.array([[0, 1, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 1, 0, 0]]))
    indeg = flow.in_degree().astype(float)
    assert indegree_abundance_correlation(flow, 2 * indeg + 1) == pytest.approx(1.0)
    assert indegree_abundance_correlation(flow, -indeg) == pytest.approx(-1.0)
    with pytest.raises(UndefinedCorrelationError):
        indegree_abundance_correlation(flow, np.ones(4))
    with pytest.raises(UndefinedCorrelationError):
        indegree_abundance_correlation(DirectedFlow(np.zeros((3, 3))), [1, 2, 3])


def test_niche_profile_examples():
    assert niche_distance_profile([1.0, 2.0], [25.0, 25.0], 25.0) == [(0.0, 1.0), (0.0, 2.0)]
    assert niche_distance_profile([0.3, 0.7], [30.0, 25.0], 25.0) == [(0.0, 0.7), (5.0, 0.3)]
    with pytest.raises(ValueError):
        niche_distance_profile([1.0], [25.0, 26.0], 25.0)


@pytest.mark.parametrize("seed", [17, 41, 56])
def test_sign_rule_holds_for_unclamped_model(seed):
    # instances where clamping keeps a population alive although lambda1 < 0
    rng = np.random.default_rng(1000 + seed)
    g = gen_erdos_renyi(30, 0.2, seed) if seed % 2 else gen_watts_strogatz(30, 2, 0.2, seed)
    f = uniform_field(30, 15, 35, seed)
    delta = rng.uniform(0.2, 3.5) if seed == 17 else rng.uniform(2.0, 4.0)
    p = SpeciesParams(STANDARD, delta=delta, d=rng.uniform(0, 1.5), alpha=rng.uniform(0, 1.5))
    adv = build_advection_matrix(build_directed_flow(g, f, 25.0))
    lap = laplacian(g)
    lam, _ = principal_eigenvalue(linearized_matrix(f, p, lap, adv).m)
    assert lam < -1e-3
    free = steady_state(np.full(30, 0.1), f, p, lap, adv, clamp=False)
    assert np.max(np.abs(free.u)) < 1e-6
    clamped = steady_state(np.full(30, 0.1), f, p, lap, adv)
    assert clamped.clamp_events > 0 and np.max(clamped.u) > 1e-3
