import numpy as np
import pytest
from hypothesis import given, strategies as st

from poincare_lab.constants import best_constant_p2
from poincare_lab.errors import DomainError, ParameterError
from poincare_lab.scenarios import (
    boltzmann_distance,
    dumbbell_mask,
    make_boltzmann_scenario,
    make_domain_scenario,
    make_graph_scenario,
    make_lattice_scenario,
    path_graph,
    separated_squares_mask,
    square_mask,
)
from poincare_lab.space import fit_growth_constant
from poincare_lab.weights import default_grids, search_admissibility


def test_graph_scenario_weights():
    sc = make_graph_scenario(path_graph(5), 2, 1.0)
    assert np.allclose(sc.weights.W, np.exp(-np.array([2, 1, 0, 1, 2])))
    assert sc.weights.X0.tolist() == [False, False, True, False, False]
    assert sc.info["max_valence"] == 2
    with pytest.raises(DomainError):
        make_graph_scenario(np.triu(np.ones((3, 3), bool), 1))


def test_path_21_feasible():
    sc = make_graph_scenario(path_graph(21), 10, np.log(4))
    g = fit_growth_constant(sc.space)
    assert search_admissibility(sc.space, sc.weights, *default_grids(g.lambda0), lambda0=g.lambda0).feasible


def test_lattice_basics():
    sc = make_lattice_scenario(1, 8, 0.25, 2, 0.0, core_radius=None)
    assert sc.space.n == 65
    assert np.allclose(sc.weights.W, sc.weights.W_plus)
    assert np.allclose(sc.space.measure, 0.25)
    assert 0 < sc.info["clipped_fraction"] < 0.2
    g = make_lattice_scenario(1, 8, 0.25, 2, 0.5, core_radius=None)
    x = g.space.coords[:, 0]
    assert np.allclose(g.weights.W_plus, np.exp(np.abs(x) - x ** 2))
    with pytest.raises(ParameterError):
        make_lattice_scenario(3, 40, 0.25)
    with pytest.raises(ParameterError):
        make_lattice_scenario(1, 8, 0.25, 0.5)
    with pytest.raises(ParameterError):
        make_lattice_scenario(1, 8, 0.25, 2, 1.0)


def test_dirichlet_variant_pins_shell():
    sc = make_lattice_scenario(1, 6, 0.25, 2, 0.5, variant="dirichlet")
    x = sc.space.coords[:, 0]
    assert np.array_equal(sc.weights.pinned, np.abs(x) > 5)
    assert not sc.weights.X0.any()
    assert np.all(np.diff(sc.weights.W[x >= 0]) > 0)


def test_corrected_weights():
    sc = make_lattice_scenario(1, 8, 0.25, 2, mode="corrected")
    r = np.abs(sc.space.coords[:, 0])
    R = sc.info["R"]
    W = np.exp(-r ** 2)
    W /= np.sum(W * sc.space.measure)
    outer = r > R + 1 + 1e-9
    assert np.allclose(sc.weights.W[outer], W[outer])
    assert np.all(sc.weights.W <= sc.weights.W_plus * (1 + 1e-12))
    # at the seam the inner branch equals A; the jump to the outer branch is at most A/a
    # times one lattice step of the raw decay
    seam = np.argmin(np.abs(r - (R + 1)))
    nxt = np.argmin(np.abs(r - (R + 1.25)))
    A, a = sc.info["A"], sc.info["a"]
    assert sc.weights.W[seam] == pytest.approx(A)
    assert sc.weights.W[seam] / sc.weights.W[nxt] <= A / a * W[seam] / W[nxt] * (1 + 1e-12)


@given(st.lists(st.floats(-5, 5), min_size=2, max_size=2), st.lists(st.floats(-5, 5), min_size=2, max_size=2))
def test_boltzmann_distance_properties(v, w):
    assert boltzmann_distance(v, v) == 0
    assert boltzmann_distance(v, w) == pytest.approx(boltzmann_distance(w, v))


def test_boltzmann_scenario():
    assert boltzmann_distance([2.0, 0.0], [0.0, 0.0]) ** 2 == pytest.approx(8.0)
    sc = make_boltzmann_scenario(2, 4, 0.25)
    assert sc.space.is_symmetric
    assert not sc.weights.ordered
    assert sc.info["dropped_isolated"] == 4
    r2 = np.sum(sc.space.coords ** 2, axis=1)
    assert np.allclose(sc.weights.W / sc.weights.W_plus, np.sqrt(1 + r2))
    with pytest.raises(ParameterError):
        make_boltzmann_scenario(4)


def test_domain_square_covered():
    sc = make_domain_scenario(square_mask(2.0, 0.05), 0.05)
    assert sc.covered and 1 < sc.n_star < 10
    assert np.all(np.diff(sc.layers) >= 0)
    w = sc.weights.W
    assert np.isfinite(w).all() and w.min() >= np.exp(-sc.n_star)
    space, weights, n_star = sc
    assert n_star == sc.n_star


def test_domain_dumbbell_and_separated():
    db = make_domain_scenario(dumbbell_mask(0.05), 0.05)
    assert db.covered and db.space.n == 860
    assert best_constant_p2(db.space, db.weights).bounded
    with pytest.warns(UserWarning):
        sep = make_domain_scenario(separated_squares_mask(0.05), 0.05)
    assert not sep.covered
    assert not best_constant_p2(sep.space, sep.weights).bounded


def test_domain_threshold_checked():
    with pytest.raises(ParameterError):
        make_domain_scenario(square_mask(2.0, 0.05), 0.05, c_threshold=10.0)
    with pytest.raises(DomainError):
        make_domain_scenario(np.zeros((4, 4), bool), 0.05)
