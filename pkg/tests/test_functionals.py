import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from poincare_lab.errors import DegenerateInputError, DomainError, ParameterError
from poincare_lab.functionals import (
    check_sobolev_weight_conditions,
    find_logsob_constant,
    make_psi_pair,
    orlicz_functional,
    poincare_sides,
    project_mean_zero,
    seminorm_psi,
    sequence_bound_check,
)
from poincare_lab.scenarios import complete_graph, make_graph_scenario, make_lattice_scenario
from poincare_lab.space import build_space
from poincare_lab.weights import make_weights


@given(st.floats(-100, 100))
def test_two_point_sides(t):
    space = build_space([1, 1], np.ones((2, 2), bool))
    w = make_weights([1, 1])
    lhs, rhs = poincare_sides(space, w, [t, -t])
    assert lhs == pytest.approx(2 * t * t, abs=1e-300)
    assert rhs == pytest.approx(4 * t * t, abs=1e-300)


def test_unnormalized_and_p_sides():
    space = build_space([1, 2, 1], np.ones((3, 3), bool))
    w = make_weights([1, 1, 1], [2, 2, 2])
    f = np.array([1.0, 0.0, -1.0])
    lhs, rhs = poincare_sides(space, w, f, 3, normalized=False)
    assert lhs == pytest.approx(4.0)
    # sum_x mu(x) sum_y |f(x) - f(y)|^3 mu(y): x=0: 2*1 + 8 = 10; x=1: 2 * 1 * 2 = 4; x=2: 10
    assert rhs == pytest.approx(24.0)
    with pytest.raises(ParameterError):
        poincare_sides(space, w, f, 0.5)


def test_projection_modes():
    sc = make_graph_scenario(complete_graph(4), x0=[0, 1])
    f = np.array([1.0, 3.0, 5.0, 7.0])
    g = project_mean_zero(f, sc.space, sc.weights, "x0").values
    assert g[:2].sum() == pytest.approx(0)
    g = project_mean_zero(f, sc.space, sc.weights, "wplus").values
    assert np.dot(g, sc.weights.W_plus) == pytest.approx(0)
    assert np.array_equal(project_mean_zero(f, sc.space, sc.weights, "raw").values, f)
    with pytest.raises(ParameterError):
        project_mean_zero(f, sc.space, sc.weights, "bogus")
    empty = make_graph_scenario(complete_graph(4), x0=np.zeros(4, bool))
    with pytest.raises(DomainError):
        project_mean_zero(f, empty.space, empty.weights, "x0")


def test_psi_pairs():
    lp = make_psi_pair("log-power", 0.5)
    assert float(lp.psi(0.0)) == pytest.approx(1.0)
    assert float(lp.psi(math.e ** 4 - math.e)) == pytest.approx(2.0)
    assert lp.unbounded_tilde
    el = make_psi_pair("exp-log-power", 0.5, 2.0)
    t = 10.0
    lg = math.log(math.e + t)
    assert float(el.psi(t)) == pytest.approx(math.exp(2 * lg ** 0.5))
    assert float(el.psi_tilde(t)) == pytest.approx(math.exp(2 * lg))
    for pair in (lp, el, make_psi_pair("constant", c=2.0)):
        assert np.isfinite(pair.slow_growth_constant) and pair.slow_growth_constant > 0
    with pytest.raises(ParameterError):
        make_psi_pair("exp-log-power", 1.0)
    with pytest.raises(ParameterError):
        make_psi_pair("bogus")


def test_constant_psi_reduces_to_scaled_energy():
    sc = make_lattice_scenario(1, 3.0, 0.5, 2.0, 0.0, n_scales=2)
    one = make_psi_pair("constant", c=1.0)
    two = make_psi_pair("constant", c=2.0)
    f = np.sin(sc.space.coords[:, 0])
    a = seminorm_psi(sc.space, sc.weights, one, f)
    b = seminorm_psi(sc.space, sc.weights, two, f)
    assert a > 0
    # K = psi / VOL* + 1/mu(U_0): doubling psi raises the seminorm but less than twofold
    assert a < b < 2 * a


def test_orlicz_homogeneity_and_degenerate():
    sc = make_lattice_scenario(1, 3.0, 0.5, 2.0, 0.0, n_scales=2)
    psi = make_psi_pair("log-power", 0.5)
    f = np.cos(sc.space.coords[:, 0])
    assert orlicz_functional(sc.space, sc.weights, psi, f, 2, 1.0) == pytest.approx(
        orlicz_functional(sc.space, sc.weights, psi, 7 * f, 2, 1.0))
    assert orlicz_functional(sc.space, sc.weights, psi, np.zeros(sc.space.n), 2, 1.0) == 0.0
    with pytest.raises(DegenerateInputError):
        orlicz_functional(sc.space, sc.weights, psi, np.ones(sc.space.n), 2, 1.0)
    with pytest.raises(DomainError):
        seminorm_psi(make_graph_scenario(complete_graph(3)).space, sc.weights, psi, f)


def test_logsob_constant_is_the_threshold():
    sc = make_lattice_scenario(1, 4.0, 0.25, 2.0, 0.5, n_scales=2)
    psi = make_psi_pair("log-power", 0.5)
    rng = np.random.default_rng(3)
    fam = rng.standard_normal((10, sc.space.n))
    res = find_logsob_constant(sc.space, sc.weights, psi, fam)
    assert 0.99 <= res.max_value <= 1.0
    worst_above = max(orlicz_functional(sc.space, sc.weights, psi, f, 2, res.c * 1.001) for f in fam)
    assert worst_above > 1
    with pytest.raises(DegenerateInputError):
        find_logsob_constant(sc.space, sc.weights, psi, [])
    cond = check_sobolev_weight_conditions(sc.space, sc.weights, psi)
    assert np.isfinite(cond.K1) and np.isfinite(cond.K2) and cond.K2 >= 1


def test_sequence_constant_sequence():
    psi = make_psi_pair("log-power", 0.5)
    b = sequence_bound_check([2.0] * 5, 2.0, psi, p=2)
    assert b.passed
    assert b.lhs == pytest.approx(float(psi.psi(2.0)) * 4)


@given(st.lists(st.floats(-50, 50), min_size=1, max_size=25), st.floats(-5, 5), st.sampled_from([1, 2]))
def test_sequence_bound_random(tail, L, p):
    psi = make_psi_pair("log-power", 0.5)
    a = L + np.array(tail) * 0.5 ** np.arange(len(tail))
    assert sequence_bound_check(a, L, psi, p=p).passed
    G = [(k, k - 1) for k in range(1, len(a) + 1)] + [(k, 0) for k in range(2, len(a) + 1)]
    assert sequence_bound_check(a, L, psi, G=G, p=p).passed


def test_sequence_bad_groups():
    psi = make_psi_pair("log-power", 0.5)
    with pytest.raises(ParameterError):
        sequence_bound_check([1.0, 2.0, 3.0], 0.0, psi, G=[(2, 1)])
    with pytest.raises(ParameterError):
        sequence_bound_check([1.0, 2.0], 0.0, psi, theta=1.0)
