import numpy as np
import pytest
from hypothesis import given, strategies as st

from poincare_lab.errors import DomainError, ParameterError
from poincare_lab.scenarios import complete_graph, lattice_space, make_graph_scenario, path_graph
from poincare_lab.space import build_space
from poincare_lab.weights import (
    ball_averages,
    check_admissibility,
    check_admissibility_alt,
    check_comparability,
    check_differential_condition,
    check_mean_value_bound,
    default_grids,
    make_weights,
    search_admissibility,
)


def loop_oracle(rel, mu, W, Wp, X0, lam, eps, s):
    """Condition checked point by point with plain loops."""
    n = len(mu)
    ball = [sum(mu[y] for y in range(n) if rel[z, y]) for z in range(n)]
    for x in range(n):
        if X0[x]:
            continue
        supply = sum(W[z] ** s * mu[z] for z in range(n) if rel[z, x] and W[z] >= lam * Wp[x])
        for y in range(n):
            if rel[x, y] and Wp[x] ** s * eps * ball[y] > supply * (1 + 1e-12):
                return False
    return True


def test_make_weights_validation():
    with pytest.raises(DomainError):
        make_weights([1, 2], [1, 1])
    wp = make_weights([1, 2], [1, 1], ordered=False)
    assert not wp.ordered
    with pytest.raises(DomainError):
        make_weights([1, -1])
    with pytest.raises(DomainError):
        make_weights([1, 1], X0=[True])


def test_complete_graph_all_exceptional_passes():
    sc = make_graph_scenario(complete_graph(5), x0=np.ones(5, bool))
    cert = check_admissibility(sc.space, sc.weights, 2.0, 1.0, 0.0, lambda0=1.0)
    assert cert.passed
    assert cert.to_dict()["lambda"] == 2.0


def test_constant_path_without_exceptional_set_infeasible():
    sc = make_graph_scenario(path_graph(8), x0=np.zeros(8, bool))
    res = search_admissibility(sc.space, sc.weights, *default_grids(1.3), lambda0=1.3)
    assert res.certificate is None and not res.feasible
    assert {v.kind for *_, v in res.worst} == {"connect"}


def test_path_search_feasible_and_matches_loops():
    sc = make_graph_scenario(path_graph(21), 10, np.log(4))
    res = search_admissibility(sc.space, sc.weights, *default_grids(1.34), lambda0=1.34)
    c = res.certificate
    assert c.passed and c.lam > 1.34
    rel = sc.space.relation.toarray()
    w = sc.weights
    assert loop_oracle(rel, sc.space.measure, w.W, w.W_plus, w.X0, c.lam, c.epsilon, c.s)
    assert not loop_oracle(rel, sc.space.measure, w.W, w.W_plus, w.X0, c.lam, c.epsilon * 4.5, c.s)


@given(st.integers(0, 10_000), st.floats(1.1, 6.0), st.floats(0.01, 1.0), st.sampled_from([0.0, 0.3, 0.7]))
def test_check_matches_loop_oracle(seed, lam, eps, s):
    rng = np.random.default_rng(seed)
    n = 7
    adj = path_graph(n) | (rng.random((n, n)) < 0.2)
    adj = adj | adj.T | np.eye(n, dtype=bool)
    mu = rng.uniform(0.5, 2.0, n)
    W = np.exp(-rng.uniform(0, 4, n))
    Wp = W * rng.uniform(1.0, 1.5, n)
    X0 = np.zeros(n, bool)
    X0[0] = True
    space = build_space(mu, adj)
    weights = make_weights(W, Wp, X0=X0)
    cert = check_admissibility(space, weights, lam, eps, s, lambda0=1.0)
    connect_ok = not [v for v in cert.violations if v.kind == "connect"]
    assert connect_ok == loop_oracle(adj, mu, W, Wp, X0, lam, eps, s)


def test_parameter_errors():
    sc = make_graph_scenario(path_graph(4))
    with pytest.raises(ParameterError):
        check_admissibility(sc.space, sc.weights, 0.5, 1.0, 0.0)
    with pytest.raises(ParameterError):
        check_admissibility(sc.space, sc.weights, 2.0, 1.0, 1.0)
    with pytest.raises(ParameterError):
        check_admissibility_alt(sc.space, sc.weights, 2.0, 1.0, 0.0)


def test_growth_hypothesis_reported():
    sc = make_graph_scenario(path_graph(21), 10, np.log(4))
    cert = check_admissibility(sc.space, sc.weights, 1.2, 0.01, 0.0, lambda0=1.34)
    assert "growth" in {v.kind for v in cert.violations}


def test_alt_condition_implies_plain():
    sc = make_graph_scenario(path_graph(21), 10, np.log(16))
    cert = check_admissibility_alt(sc.space, sc.weights, 2.0, 0.05, 0.5, lambda0=1.34)
    assert cert.alt
    if cert.passed:
        assert check_admissibility(sc.space, sc.weights, 2.0, 0.05, 0.5, lambda0=1.34).passed


@pytest.mark.parametrize("rho", [0.5, 1.0, 2.0])
def test_cosh_ball_average_closed_form(rho):
    space = lattice_space(1, 4.0, 0.01)
    x = space.coords[:, 0]
    F = np.cosh(np.sqrt(rho) * x)
    t = 0.7
    avg, skipped = ball_averages(space, F, t)
    a = np.sqrt(rho) * t
    exact = np.sinh(a) / a * F
    ok = np.isfinite(avg)
    assert np.allclose(avg[ok], exact[ok], rtol=1e-9)
    assert skipped.size == np.sum(~ok)
    rep = check_mean_value_bound(space, F, rho, t)
    assert rep.all_passed


def test_mean_value_2d_quadratic():
    space = lattice_space(2, 3.0, 0.1)
    r2 = np.sum(space.coords ** 2, axis=1)
    F = 1 + r2
    # average of |x|^2 over a ball of radius t in 2-d is |x|^2 + t^2/2
    avg, _ = ball_averages(space, F, 0.5)
    ok = np.isfinite(avg)
    assert np.allclose(avg[ok], (F + 0.125)[ok], rtol=1e-6)


def test_differential_condition_quadratic():
    space = lattice_space(1, 8.0, 0.25)
    V = space.coords[:, 0] ** 2
    rep = check_differential_condition(space, V, 0.5, 1.0, 0.0)
    # s|V'|^2 - V'' = 2 x^2 - 2 >= 1 iff |x| >= sqrt(1.5)
    r = np.abs(space.coords[rep.violations, 0])
    assert r.size and r.max() < np.sqrt(1.5)
    assert rep.boundary.tolist() == [0, space.n - 1]


def test_comparability():
    sc = make_graph_scenario(complete_graph(4))
    assert check_comparability(sc.space, sc.weights) == pytest.approx(1.0)
    w = make_weights([1, 1, 1, 1], [1, 1, 1, 0], ordered=False)
    assert check_comparability(sc.space, w) == np.inf
