"""Weight pairs and the admissibility machinery for two-weight Poincaré inequalities."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import DomainError, InconsistencyError, ParameterError
from .space import Space, fit_growth_constant

log = logging.getLogger(__name__)

# relative slack for floating-point ties in inequality checks
SLACK = 1e-12


@dataclass(frozen=True, eq=False)
class WeightPair:
    """``W`` (energy side), ``W_plus`` (norm side), exceptional set ``X0``.

    ``pinned`` marks points where test functions are forced to vanish
    (Dirichlet variants); they are skipped by the admissibility checks.
    ``ordered=False`` disables the ``W <= W_plus`` requirement for
    inequalities that are not of the two-weight form.
    """

    W: np.ndarray
    W_plus: np.ndarray
    X0: np.ndarray
    pinned: np.ndarray
    ordered: bool = True

    @property
    def n(self) -> int:
        return len(self.W)


def make_weights(W, W_plus=None, X0=None, pinned=None, *, ordered: bool = True) -> WeightPair:
    """Build a :class:`WeightPair`; ``X0`` and ``pinned`` accept masks or index lists."""
    W = np.array(W, dtype=float).ravel()
    Wp = W.copy() if W_plus is None else np.array(W_plus, dtype=float).ravel()
    n = len(W)
    if Wp.shape != W.shape:
        raise DomainError("W and W_plus must have the same length")
    if np.any(W < 0) or np.any(Wp < 0) or not (np.all(np.isfinite(W)) and np.all(np.isfinite(Wp))):
        raise DomainError("weights must be finite and nonnegative")
    if ordered and np.any(Wp < W * (1 - SLACK)):
        bad = np.flatnonzero(Wp < W * (1 - SLACK))
        raise DomainError(f"W_plus < W at points {bad[:10].tolist()}")
    return WeightPair(W, Wp, _mask(X0, n), _mask(pinned, n), ordered)


def _mask(sel, n: int) -> np.ndarray:
    m = np.zeros(n, dtype=bool)
    if sel is None:
        return m
    sel = np.asarray(sel)
    if sel.dtype == bool:
        if sel.shape != (n,):
            raise DomainError("mask length mismatch")
        return sel.copy()
    m[sel.astype(np.int64)] = True
    return m


class Violation(NamedTuple):
    point: int
    deficit: float
    kind: str  # connect | connect-alt | x0-diameter | x0-constant | growth


@dataclass
class AdmissibilityCertificate:
    lam: float
    epsilon: float
    s: float
    x0_constant: float
    lambda0: float
    violations: list[Violation] = field(default_factory=list)
    alt: bool = False

    @property
    def passed(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "epsilon": self.epsilon,
            "s": self.s,
            "x0_constant": self.x0_constant,
            "lambda0": self.lambda0,
            "passed": self.passed,
            "violations": [list(v) for v in self.violations],
        }


def _active(weights: WeightPair) -> np.ndarray:
    return ~(weights.X0 | weights.pinned)


def x0_conditions(space: Space, weights: WeightPair) -> tuple[float, list[Violation]]:
    """Minimal constant C with ``W_+(x) mu(B_y) <= C W(y) mu(X0)`` on X0, plus diameter failures."""
    idx = np.flatnonzero(weights.X0)
    if idx.size == 0:
        return 0.0, []
    viol = []
    sub = space.relation[idx][:, idx]
    if sub.nnz != idx.size ** 2:
        dense = sub.toarray()
        for i, x in enumerate(idx):
            missing = int((~dense[i]).sum())
            if missing:
                viol.append(Violation(int(x), float(missing), "x0-diameter"))
    mu_x0 = space.measure[idx].sum()
    wy = weights.W[idx]
    by = space.ball_measure[idx]
    if np.any(wy <= 0):
        for y in idx[wy <= 0]:
            viol.append(Violation(int(y), float("inf"), "x0-constant"))
        return float("inf"), viol
    c = float(weights.W_plus[idx].max() * np.max(by / wy) / mu_x0)
    return c, viol


def _connect_supply(space: Space, weights: WeightPair, lam: float, s: float) -> np.ndarray:
    """``sum_{z in B*_x, W(z) >= lam W_+(x)} W(z)^s mu(z)`` for every x."""
    z, x = space.pairs  # (z, x) in U  <=>  z in B*_x
    ok = weights.W[z] >= lam * weights.W_plus[x] * (1 - SLACK)
    contrib = np.where(ok, np.power(weights.W[z], s) * space.measure[z], 0.0)
    return np.bincount(x, weights=contrib, minlength=space.n)


def _resolve_lambda0(space: Space, lambda0: float | None) -> float:
    if lambda0 is None:
        return fit_growth_constant(space).lambda0
    return float(lambda0)


def _check_params(lam: float, epsilon: float, s: float) -> None:
    if not lam > 1:
        raise ParameterError("lambda must exceed 1")
    if not epsilon > 0:
        raise ParameterError("epsilon must be positive")
    if not 0 <= s < 1:
        raise ParameterError("s must lie in [0, 1)")


def check_admissibility(
    space: Space,
    weights: WeightPair,
    lam: float,
    epsilon: float,
    s: float,
    *,
    lambda0: float | None = None,
) -> AdmissibilityCertificate:
    """Verify the admissibility inequality at every ``(x, y) in U`` with x outside X0.

    For each x the binding y is the one maximising ``mu(B_y)``, so the deficit
    reported per point is ``W_+(x)^s eps max_y mu(B_y) - supply(x)``.
    The certificate also fails when ``lam <= lambda0``.
    """
    _check_params(lam, epsilon, s)
    lambda0 = _resolve_lambda0(space, lambda0)
    supply = _connect_supply(space, weights, lam, s)
    need = np.power(weights.W_plus, s) * epsilon * space.max_neighbor_ball_measure
    viol = []
    for x in np.flatnonzero(_active(weights) & (need > supply * (1 + SLACK))):
        viol.append(Violation(int(x), float(need[x] - supply[x]), "connect"))
    c, x0v = x0_conditions(space, weights)
    viol.extend(x0v)
    if lam <= lambda0:
        viol.append(Violation(-1, float(lambda0 - lam), "growth"))
    return AdmissibilityCertificate(lam, epsilon, s, c, lambda0, viol)


def check_admissibility_alt(
    space: Space,
    weights: WeightPair,
    lam: float,
    epsilon: float,
    s: float,
    *,
    lambda0: float | None = None,
) -> AdmissibilityCertificate:
    """The cleaner sufficient condition ``[lam W_+]^s (mu(B*_x) + eps mu(B_y)) <= int_{B*_x} W^s``.

    A pass is cross-checked against :func:`check_admissibility`; the
    implication failing raises :class:`InconsistencyError`.
    """
    if not 0 < s < 1:
        raise ParameterError("the alternative condition needs s in (0, 1)")
    _check_params(lam, epsilon, s)
    lambda0 = _resolve_lambda0(space, lambda0)
    z, x = space.pairs
    total = np.bincount(x, weights=np.power(weights.W[z], s) * space.measure[z], minlength=space.n)
    need = np.power(lam * weights.W_plus, s) * (
        space.dual_ball_measure + epsilon * space.max_neighbor_ball_measure
    )
    viol = [
        Violation(int(i), float(need[i] - total[i]), "connect-alt")
        for i in np.flatnonzero(_active(weights) & (need > total * (1 + SLACK)))
    ]
    c, x0v = x0_conditions(space, weights)
    viol.extend(x0v)
    if lam <= lambda0:
        viol.append(Violation(-1, float(lambda0 - lam), "growth"))
    cert = AdmissibilityCertificate(lam, epsilon, s, c, lambda0, viol, alt=True)
    if cert.passed:
        plain = check_admissibility(space, weights, lam, epsilon, s, lambda0=lambda0)
        if not plain.passed:
            raise InconsistencyError(
                f"alternative condition passed but admissibility failed: {plain.violations[:3]}"
            )
    return cert


def default_grids(lambda0: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``s`` in {0, .1, ..., .9}; ``lambda`` geometric in (lambda0, 64 lambda0]; eps geometric in [1e-6, 1]."""
    s_grid = np.round(np.arange(10) / 10, 12)
    lam_grid = np.geomspace(lambda0, 64 * lambda0, 41)[1:]
    lam_grid = lam_grid[lam_grid > 1]
    eps_grid = np.geomspace(1e-6, 1.0, 25)
    return s_grid, lam_grid, eps_grid


@dataclass
class SearchResult:
    certificate: AdmissibilityCertificate | None
    # worst violation per (s, lambda, eps) grid point when infeasible
    worst: list[tuple[float, float, float, Violation]] = field(default_factory=list)

    @property
    def feasible(self) -> bool:
        return self.certificate is not None


def search_admissibility(
    space: Space,
    weights: WeightPair,
    s_grid=None,
    lambda_grid=None,
    epsilon_grid=None,
    *,
    lambda0: float | None = None,
) -> SearchResult:
    """Grid search for the passing certificate with the largest lambda.

    Ties are broken by larger epsilon, then smaller s.  For fixed ``(s, lam)``
    the set of admissible epsilons is an interval ``(0, eps_max]`` so every
    epsilon is classified from one supply evaluation.
    """
    lambda0 = _resolve_lambda0(space, lambda0)
    ds, dl, de = default_grids(lambda0)
    s_grid = ds if s_grid is None else np.asarray(s_grid, dtype=float)
    lambda_grid = dl if lambda_grid is None else np.asarray(lambda_grid, dtype=float)
    epsilon_grid = de if epsilon_grid is None else np.asarray(epsilon_grid, dtype=float)
    if not (len(s_grid) and len(lambda_grid) and len(epsilon_grid)):
        raise ParameterError("search grids must be nonempty")
    c, x0v = x0_conditions(space, weights)
    active = _active(weights)
    base = space.max_neighbor_ball_measure
    best = None
    worst = []
    for s in sorted(s_grid):
        wps = np.power(weights.W_plus, s) * base
        for lam in lambda_grid:
            supply = _connect_supply(space, weights, lam, s)
            with np.errstate(divide="ignore", invalid="ignore"):
                # per-point largest admissible epsilon
                eps_pt = np.where(wps > 0, supply / wps, np.inf)
            eps_max = float(eps_pt[active].min()) if active.any() else np.inf
            ok_eps = [e for e in epsilon_grid if e <= eps_max * (1 + SLACK) and e > 0]
            hyp = lam > lambda0 and lam > 1
            if ok_eps and hyp and not x0v:
                key = (lam, max(ok_eps), -s)
                if best is None or key > best[0]:
                    best = (key, lam, max(ok_eps), s)
                continue
            for e in epsilon_grid:
                need = wps * e
                deficit = np.where(active, need - supply, -np.inf)
                i = int(np.argmax(deficit))
                if x0v:
                    v = x0v[0]
                elif not hyp:
                    v = Violation(-1, float(lambda0 - lam), "growth")
                else:
                    v = Violation(i, float(deficit[i]), "connect")
                worst.append((float(s), float(lam), float(e), v))
    if best is None:
        return SearchResult(None, worst)
    _, lam, eps, s = best
    cert = check_admissibility(space, weights, float(lam), float(eps), float(s), lambda0=lambda0)
    if not cert.passed:
        raise InconsistencyError("grid search selected a failing certificate")
    return SearchResult(cert)


@dataclass
class DifferentialReport:
    values: np.ndarray  # s|grad V|^2 - Lap V at interior points, nan elsewhere
    violations: np.ndarray
    boundary: np.ndarray


def _require_grid(space: Space) -> tuple[tuple, float]:
    if space.grid_shape is None or space.spacing is None or space.coords is None:
        raise DomainError("operation needs a regular lattice (grid_shape, spacing, coords)")
    return space.grid_shape, space.spacing


def _interior_mask(shape: tuple) -> np.ndarray:
    m = np.ones(shape, dtype=bool)
    for ax in range(len(shape)):
        idx = [slice(None)] * len(shape)
        idx[ax] = 0
        m[tuple(idx)] = False
        idx[ax] = -1
        m[tuple(idx)] = False
    return m.ravel()


def check_differential_condition(
    space: Space, V, s: float, rho: float, R: float
) -> DifferentialReport:
    """Central-difference evaluation of ``s |grad V|^2 - Lap V`` and its comparison with rho for |x| > R."""
    shape, h = _require_grid(space)
    v = np.asarray(V, dtype=float).reshape(shape)
    grad2 = np.zeros(shape)
    lap = np.zeros(shape)
    for ax in range(len(shape)):
        fwd = np.roll(v, -1, axis=ax)
        bwd = np.roll(v, 1, axis=ax)
        grad2 += ((fwd - bwd) / (2 * h)) ** 2
        lap += (fwd - 2 * v + bwd) / h ** 2
    interior = _interior_mask(shape)
    vals = np.where(interior, (s * grad2 - lap).ravel(), np.nan)
    radius = np.linalg.norm(space.coords, axis=1)
    viol = np.flatnonzero(interior & (radius > R) & (vals < rho))
    return DifferentialReport(vals, viol, np.flatnonzero(~interior))


def _ball_rule(d: int, t: float, n_r: int = 16, n_ang: int = 32) -> tuple[np.ndarray, np.ndarray]:
    """Quadrature nodes (offsets) and weights for the Euclidean ball of radius t in d = 2, 3."""
    xr, wr = np.polynomial.legendre.leggauss(n_r)
    r = 0.5 * t * (xr + 1)
    wr = 0.5 * t * wr * r ** (d - 1)
    phi = 2 * np.pi * np.arange(n_ang) / n_ang
    if d == 2:
        nodes = (r[:, None, None] * np.stack([np.cos(phi), np.sin(phi)], -1)[None]).reshape(-1, 2)
        w = np.repeat(wr, n_ang)
    elif d == 3:
        ct, wt = np.polynomial.legendre.leggauss(n_r)
        st = np.sqrt(1 - ct ** 2)
        dirs = np.stack(
            [st[:, None] * np.cos(phi)[None], st[:, None] * np.sin(phi)[None], np.repeat(ct[:, None], n_ang, 1)],
            -1,
        ).reshape(-1, 3)
        nodes = (r[:, None, None] * dirs[None]).reshape(-1, 3)
        w = (wr[:, None] * np.repeat(wt, n_ang)[None]).ravel()
    else:
        raise DomainError("ball quadrature supports d in {1, 2, 3}")
    return nodes, w / w.sum()


@dataclass
class MeanValueReport:
    margin: np.ndarray  # ball average / F(x) - (1 + rho t^2 / (2(d+2))), nan where skipped or F(x) = 0
    skipped: np.ndarray
    tol: float = 1e-10

    @property
    def passed(self) -> np.ndarray:
        return np.where(np.isnan(self.margin), True, self.margin >= -self.tol)

    @property
    def all_passed(self) -> bool:
        return bool(self.passed.all())


def ball_averages(space: Space, F, t: float) -> tuple[np.ndarray, np.ndarray]:
    """Lebesgue ball averages of the grid function ``F`` over radius-t balls; nan where the ball leaves the grid."""
    shape, h = _require_grid(space)
    d = len(shape)
    F = np.asarray(F, dtype=float)
    lo = space.coords.min(axis=0)
    hi = space.coords.max(axis=0)
    inside = np.all((space.coords - t >= lo - 1e-12) & (space.coords + t <= hi + 1e-12), axis=1)
    avg = np.full(space.n, np.nan)
    if d == 1:
        from scipy.interpolate import CubicSpline

        xs = space.coords[:, 0]
        anti = CubicSpline(xs, F).antiderivative()
        xi = xs[inside]
        avg[inside] = (anti(xi + t) - anti(xi - t)) / (2 * t)
    else:
        from scipy.interpolate import RegularGridInterpolator
        from scipy.sparse.linalg import spsolve

        # tensor not-a-knot cubic spline: exact on cubics, so no boundary bias
        axes = [lo[k] + h * np.arange(shape[k]) for k in range(d)]
        interp = RegularGridInterpolator(axes, F.reshape(shape), method="cubic", solver=spsolve)
        nodes, w = _ball_rule(d, t)
        pts = space.coords[inside]
        where = np.flatnonzero(inside)
        for k in range(0, len(pts), 2048):
            chunk = pts[k:k + 2048]
            q = np.clip((chunk[:, None, :] + nodes[None]).reshape(-1, d), lo, hi)
            avg[where[k:k + 2048]] = interp(q).reshape(len(chunk), -1) @ w
    return avg, np.flatnonzero(~inside)


def check_mean_value_bound(space: Space, F, rho: float, t: float, *, tol: float = 1e-10) -> MeanValueReport:
    """Compare the ball average of F with ``(1 + rho t^2 / (2(d+2))) F(x)`` at every grid point."""
    if not t > 0:
        raise ParameterError("t must be positive")
    F = np.asarray(F, dtype=float)
    if np.any(F < 0):
        raise DomainError("F must be nonnegative")
    d = len(_require_grid(space)[0])
    avg, skipped = ball_averages(space, F, t)
    factor = 1 + rho * t ** 2 / (2 * (d + 2))
    with np.errstate(divide="ignore", invalid="ignore"):
        margin = np.where(F > 0, avg / F - factor, np.nan)
    return MeanValueReport(margin, skipped, tol)


def check_comparability(space: Space, weights: WeightPair) -> float:
    """``sup_y (sum_{x in B*_y} W(x) mu(x) / mu(B_x)) / W_+(y)``; inf when W_+ vanishes under mass."""
    x, y = space.pairs  # y in B_x  <=>  x in B*_y
    num = np.bincount(
        y, weights=weights.W[x] * space.measure[x] / space.ball_measure[x], minlength=space.n
    )
    wp = weights.W_plus
    if np.any((wp == 0) & (num > 0)):
        return float("inf")
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(wp > 0, num / wp, 0.0)
    return float(ratio.max())
