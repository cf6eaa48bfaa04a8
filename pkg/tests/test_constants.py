import numpy as np
import pytest
import scipy.linalg as la
from hypothesis import given, strategies as st

from poincare_lab.constants import (
    ConstantReport,
    best_constant_p2,
    build_transition_kernel,
    choose_delta,
    constraint_basis,
    lower_bound_constant,
    pnorm_power_iteration,
    run_constructive_chain,
)
from poincare_lab.errors import InfeasibleError
from poincare_lab.functionals import poincare_sides
from poincare_lab.scenarios import complete_graph, disjoint_union, make_graph_scenario, path_graph
from poincare_lab.space import fit_growth_constant
from poincare_lab.weights import AdmissibilityCertificate, default_grids, search_admissibility


def quadratic_forms(space, weights):
    """Both sides as dense matrices assembled entry by entry."""
    n = space.n
    mu, W, Wp = space.measure, weights.W, weights.W_plus
    rel = space.relation.toarray()
    A = np.diag(Wp * mu)
    B = np.zeros((n, n))
    for x in range(n):
        bx = mu[rel[x]].sum()
        for y in np.flatnonzero(rel[x]):
            c = W[x] * mu[x] * mu[y] / bx
            e = np.zeros(n)
            e[x] += 1
            e[y] -= 1
            B += c * np.outer(e, e)
    return A, B


@pytest.mark.parametrize("n", [2, 3, 7, 30])
def test_complete_graph_half(n):
    sc = make_graph_scenario(complete_graph(n), x0=np.ones(n, bool))
    assert best_constant_p2(sc.space, sc.weights).value == pytest.approx(0.5, abs=1e-9)


def test_disjoint_triangles_unbounded():
    with pytest.warns(UserWarning):
        sc = make_graph_scenario(disjoint_union(complete_graph(3), complete_graph(3)))
    est = best_constant_p2(sc.space, sc.weights)
    assert not est.bounded
    lhs, rhs = poincare_sides(sc.space, sc.weights, est.witness)
    assert rhs <= 1e-9 * lhs


@given(st.integers(0, 10_000), st.integers(4, 9))
def test_exact_matches_dense_oracle(seed, n):
    rng = np.random.default_rng(seed)
    adj = path_graph(n) | (rng.random((n, n)) < 0.3)
    adj = (adj | adj.T) & ~np.eye(n, dtype=bool)
    sc = make_graph_scenario(adj, 0, rng.uniform(0, 1.5))
    A, B = quadratic_forms(sc.space, sc.weights)
    c = np.zeros(n)
    c[0] = 1.0
    Q = la.null_space(c[None, :])
    ev = la.eigh(Q.T @ B @ Q, Q.T @ A @ Q, eigvals_only=True)
    exact = best_constant_p2(sc.space, sc.weights)
    assert exact.value == pytest.approx(1 / ev[0], rel=1e-8)
    lo = lower_bound_constant(sc.space, sc.weights, 2, restarts=4, seed=seed)
    assert lo.value <= exact.value * (1 + 1e-9)
    assert lo.value >= exact.value * (1 - 1e-4)


def test_p1_three_path_scan():
    sc = make_graph_scenario(path_graph(3), x0=np.ones(3, bool))
    Q = constraint_basis(sc.space, sc.weights, "x0")
    th = np.linspace(0, np.pi, 200_001)
    F = np.outer(np.cos(th), Q[:, 0]) + np.outer(np.sin(th), Q[:, 1])
    ratios = [np.divide(*poincare_sides(sc.space, sc.weights, f, 1)) for f in F]
    scan = max(ratios)
    lo = lower_bound_constant(sc.space, sc.weights, 1, restarts=16, seed=1)
    assert lo.value == pytest.approx(scan, rel=1e-4)


def test_choose_delta_example():
    cert = AdmissibilityCertificate(4.0, 1.0, 0.5, 0.0, 1.5, [])
    assert choose_delta(cert, 2.0, 1.5) == pytest.approx(0.25)
    assert choose_delta(cert, 1.0, 1.5) == pytest.approx(0.25)
    with pytest.raises(InfeasibleError):
        choose_delta(cert, 2.0, 5.0)


@given(st.integers(0, 10_000), st.sampled_from([1.5, 2.0, 3.0]))
def test_pnorm_rank_one(seed, p):
    rng = np.random.default_rng(seed)
    u, v = rng.uniform(0.01, 1, 5), rng.uniform(0.01, 1, 3)
    q = p / (p - 1)
    r = pnorm_power_iteration(np.outer(u, v), p)
    assert r.upper == pytest.approx(np.linalg.norm(u, p) * np.linalg.norm(v, q), rel=1e-9)
    assert r.lower <= r.upper * (1 + 1e-12)


def test_pnorm_p1_and_weights():
    A = np.array([[1.0, 2.0], [3.0, 0.5]])
    assert pnorm_power_iteration(A, 1).upper == pytest.approx(4.0)
    mu, nu = np.array([2.0, 1.0]), np.array([1.0, 4.0])
    # weighted problem equals the plain one for diag(mu^1/p) A diag(nu^-1/p)
    Ah = np.sqrt(mu)[:, None] * A / np.sqrt(nu)[None, :]
    assert pnorm_power_iteration(A, 2, mu=mu, nu=nu).upper == pytest.approx(np.linalg.norm(Ah, 2), rel=1e-9)
    bounds = pnorm_power_iteration(np.random.default_rng(0).random((6, 6)), 3).bounds
    assert np.all(np.diff(bounds) <= 1e-12 * bounds[0])


@pytest.fixture(scope="module")
def path_chain():
    sc = make_graph_scenario(path_graph(21), 10, np.log(4))
    g = fit_growth_constant(sc.space)
    cert = search_admissibility(sc.space, sc.weights, *default_grids(g.lambda0), lambda0=g.lambda0).certificate
    return sc, g, cert


def test_kernel_laws_and_sn_recursion(path_chain):
    sc, g, cert = path_chain
    k = build_transition_kernel(sc.space, sc.weights, cert)
    rows = k.P @ sc.space.measure
    assert np.allclose(rows, ~sc.weights.X0, atol=1e-12)
    assert k.linfty_ratio <= 1 + 1e-12
    T, S1 = k.T.toarray(), k.S1.toarray()
    direct = sum(np.linalg.matrix_power(T, j) @ S1 for j in range(4))
    assert np.allclose(k.Sn_matrix(4), direct)
    nil = k.nilpotency_index()
    assert nil is not None and not np.any(np.linalg.matrix_power(T, nil))


def test_chain_bounds_exact(path_chain):
    sc, g, cert = path_chain
    chain = run_constructive_chain(sc.space, sc.weights, cert, 2, growth=g)
    exact = best_constant_p2(sc.space, sc.weights)
    lo = lower_bound_constant(sc.space, sc.weights, 2, restarts=8)
    rep = ConstantReport(2, exact, lo, chain)
    assert rep.consistent()
    assert chain.constructive_upper >= exact.value
    assert chain.lyapunov_bound >= chain.constructive_upper * (1 - 1e-12)
    p3 = run_constructive_chain(sc.space, sc.weights, cert, 3, growth=g)
    assert p3.validation_max_ratio <= p3.constructive_upper
