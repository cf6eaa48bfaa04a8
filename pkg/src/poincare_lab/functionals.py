"""Poincaré sides, psi-weighted seminorms, the Orlicz log-Sobolev functional and the convergent-sequence bound."""
from __future__ import annotations

import math
from collections.abc import Callable, Iterable
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateInputError, DomainError, InfeasibleError, ParameterError
from .space import Space, vol_star_matrix
from .weights import WeightPair

MODES = ("raw", "x0", "wplus")
_LOG_CLAMP = 1e300


@dataclass(frozen=True, eq=False)
class FunctionOnSpace:
    values: np.ndarray
    mode: str = "raw"


def _vals(f) -> np.ndarray:
    if isinstance(f, FunctionOnSpace):
        return f.values
    return np.asarray(f, dtype=float)


def project_mean_zero(f, space: Space, weights: WeightPair, mode: str = "x0") -> FunctionOnSpace:
    """Subtract the mu-average over X0 (``x0``) or the ``W_+ mu``-average (``wplus``); ``raw`` copies.

    Pinned points are not zeroed here; use :func:`constraint_basis` for that.
    """
    v = _vals(f).astype(float).copy()
    if mode == "raw":
        return FunctionOnSpace(v, mode)
    if mode == "x0":
        w = np.where(weights.X0, space.measure, 0.0)
    elif mode == "wplus":
        w = weights.W_plus * space.measure
    else:
        raise ParameterError(f"unknown centering mode {mode!r}")
    mass = w.sum()
    if not mass > 0:
        raise DomainError(f"centering set for mode {mode!r} has zero mass")
    v -= np.dot(w, v) / mass
    return FunctionOnSpace(v, mode)


def poincare_sides(
    space: Space, weights: WeightPair, f, p: float = 2.0, *, normalized: bool = True
) -> tuple[float, float]:
    """``(sum |f|^p W_+ mu,  sum_x [mu(B_x)^{-1} sum_{y in B_x} |f(x)-f(y)|^p mu(y)] W(x) mu(x))``.

    With ``normalized=False`` the ball average is replaced by the plain ball
    integral (no ``1/mu(B_x)`` factor).
    """
    if p < 1:
        raise ParameterError("p must be >= 1")
    v = _vals(f)
    mu = space.measure
    lhs = float(np.sum(np.abs(v) ** p * weights.W_plus * mu))
    x, y = space.pairs
    coef = weights.W[x] * mu[x] * mu[y]
    if normalized:
        coef = coef / space.ball_measure[x]
    rhs = float(np.sum(np.abs(v[x] - v[y]) ** p * coef))
    return lhs, rhs


@dataclass(frozen=True)
class PsiPair:
    kind: str
    alpha: float
    c: float
    slow_growth_constant: float = float("nan")

    def psi(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "constant":
            return np.full_like(t, self.c)
        lg = np.log(np.minimum(math.e + t, _LOG_CLAMP))
        if self.kind == "log-power":
            return lg ** self.alpha
        return np.exp(self.c * lg ** self.alpha)

    def psi_tilde(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind in ("constant", "log-power"):
            return self.psi(t)
        lg = np.log(np.minimum(math.e + t, _LOG_CLAMP))
        return np.exp(self.c * lg ** (self.alpha / (1 - self.alpha)))

    @property
    def unbounded_tilde(self) -> bool:
        if self.kind == "constant":
            return False
        if self.kind == "log-power":
            return self.alpha > 0
        return self.c > 0 and self.alpha > 0


def _slow_growth_grid(n: int = 121) -> np.ndarray:
    return np.concatenate([[0.0], np.logspace(-8, 8, n)])


def slow_growth_constant(pair: PsiPair, grid: np.ndarray | None = None) -> float:
    """Sampled ``max psi(xy) / (psi(x) + psi~(y))`` over a log-spaced grid in ``[0, 1e8]^2``."""
    g = _slow_growth_grid() if grid is None else np.asarray(grid, dtype=float)
    x, y = np.meshgrid(g, g, indexing="ij")
    return float(np.max(pair.psi(x * y) / (pair.psi(x) + pair.psi_tilde(y))))


def make_psi_pair(kind: str, alpha: float = 0.0, c: float = 1.0) -> PsiPair:
    """``log-power``: psi = log^a(e+t) = psi~.  ``exp-log-power``: psi = exp(c log^a(e+t)),
    psi~ = exp(c log^{a/(1-a)}(e+t)).  ``constant``: psi = psi~ = c."""
    if kind not in ("log-power", "exp-log-power", "constant"):
        raise ParameterError(f"unknown psi kind {kind!r}")
    if alpha < 0 or c < 0:
        raise ParameterError("alpha and c must be nonnegative")
    if kind == "exp-log-power" and alpha >= 1:
        raise ParameterError("exp-log-power needs alpha in [0, 1)")
    if kind == "constant" and c <= 0:
        raise ParameterError("constant psi must be positive")
    bare = PsiPair(kind, float(alpha), float(c))
    return PsiPair(kind, float(alpha), float(c), slow_growth_constant(bare))


def psi_kernel(space: Space, psi: PsiPair, p: float):
    """Sparse ``K_{p,psi}`` on the pattern of ``U_0``."""
    vs = vol_star_matrix(space).tocoo()
    u0_measure = space.scales[0].astype(float) @ space.measure
    vals = psi.psi(vs.data ** (-1.0 / p)) / vs.data + 1.0 / u0_measure[vs.row]
    return vs.row.astype(np.int64), vs.col.astype(np.int64), vals


def seminorm_psi(space: Space, weights: WeightPair, psi: PsiPair, f, p: float = 2.0) -> float:
    """``||f||_{p,psi}^p`` (the p-th power, not the norm)."""
    if p < 1:
        raise ParameterError("p must be >= 1")
    if not space.scales:
        raise DomainError("seminorm needs a scale family")
    v = _vals(f)
    x, y, k = psi_kernel(space, psi, p)
    mu = space.measure
    return float(np.sum(np.abs(v[x] - v[y]) ** p * k * mu[y] * weights.W[x] * mu[x]))


def orlicz_functional(
    space: Space, weights: WeightPair, psi: PsiPair, f, p: float, c: float, *, seminorm: float | None = None
) -> float:
    """``sum_y psi(c|f|/||f||) (c|f|/||f||)^p W mu`` with ``||f|| = seminorm_psi^{1/p}``."""
    v = _vals(f)
    sn = seminorm_psi(space, weights, psi, v, p) if seminorm is None else seminorm
    if not sn > 0:
        if np.any(v != 0):
            raise DegenerateInputError("zero seminorm with nonzero f")
        return 0.0
    g = c * np.abs(v) / sn ** (1.0 / p)
    return float(np.sum(psi.psi(g) * g ** p * weights.W * space.measure))


@dataclass
class LogSobResult:
    c: float
    max_value: float
    values: np.ndarray = field(repr=False)


def find_logsob_constant(
    space: Space,
    weights: WeightPair,
    psi: PsiPair,
    family: Iterable,
    p: float = 2.0,
    *,
    rtol: float = 1e-6,
) -> LogSobResult:
    """Largest c with the Orlicz functional at most 1 for every family member (bisection)."""
    fam = [_vals(f) for f in family]
    if not fam:
        raise DegenerateInputError("family is empty")
    sns = []
    for v in fam:
        if np.ptp(v) == 0:
            raise DegenerateInputError("family members must be nonconstant")
        sns.append(seminorm_psi(space, weights, psi, v, p))

    def worst(c: float) -> tuple[float, np.ndarray]:
        vals = np.array([orlicz_functional(space, weights, psi, v, p, c, seminorm=s) for v, s in zip(fam, sns)])
        return float(vals.max()), vals

    lo = 1e-12
    if worst(lo)[0] > 1:
        raise InfeasibleError("no feasible c above 1e-12; log-Sobolev hypotheses look violated")
    hi = 1.0
    while worst(hi)[0] <= 1:
        lo = hi
        hi *= 2
        if hi > 1e150:
            raise InfeasibleError("functional stays below 1 for all c; family is degenerate")
    while hi - lo > rtol * lo:
        mid = 0.5 * (lo + hi)
        if worst(mid)[0] <= 1:
            lo = mid
        else:
            hi = mid
    m, vals = worst(lo)
    return LogSobResult(lo, m, vals)


@dataclass
class SobolevConditions:
    K1: float
    K2: float
    flagged: np.ndarray


def check_sobolev_weight_conditions(
    space: Space, weights: WeightPair, psi: PsiPair, p: float = 2.0
) -> SobolevConditions:
    """Smallest constants in ``W_+ >= K1^{-1} W [psi(mu(U_0^*)^{-1/p}) + psi~(W^{-1/p})]`` and
    ``W(x) <= K2 * (average of W over U_j^*(x))`` for every scale j."""
    if not space.scales:
        raise DomainError("needs a scale family")
    W, Wp = weights.W, weights.W_plus
    mu = space.measure
    flagged = np.flatnonzero((W == 0) & psi.unbounded_tilde)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        dual0 = space.scale_dual_measure(0)
        need = W * (psi.psi(dual0 ** (-1.0 / p)) + psi.psi_tilde(np.where(W > 0, W, 1.0) ** (-1.0 / p)))
        need = np.where(W > 0, need, 0.0)
        ratio1 = np.where(Wp > 0, need / Wp, np.where(need > 0, np.inf, 0.0))
    K1 = float(ratio1.max())
    K2 = 0.0
    for m in space.scales:
        mt = m.T.tocsr().astype(float)
        avg = (mt @ (W * mu)) / (mt @ mu)
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.where(avg > 0, W / avg, np.where(W > 0, np.inf, 0.0))
        K2 = max(K2, float(r.max()))
    return SobolevConditions(K1, K2, flagged)


@dataclass
class SequenceBound:
    lhs: float
    rhs: float

    @property
    def passed(self) -> bool:
        return self.lhs <= self.rhs * (1 + 1e-12) + 1e-300


def sequence_bound_check(
    a,
    L: complex,
    psi: PsiPair | Callable,
    u: Callable | None = None,
    theta: float = 0.5,
    G: Iterable[tuple[int, int]] | None = None,
    *,
    p: float = 2.0,
) -> SequenceBound:
    """Both sides of the convergent-sequence bound for ``a`` extended by the constant tail ``L``.

    Without ``G`` the right side is
    ``psi(|a0|/(1-t)) u(|L|) + sup_{k>=1} psi(|a_k|/(1-t)) u(|a_{k-1}-L|/t)``.
    With ``G`` (pairs ``(k, j)``, ``k > j``) the k-th term averages
    ``u(|a_j - L|/t)`` over ``G_k``; ``(k, k-1)`` must be present.
    """
    if not 0 < theta < 1:
        raise ParameterError("theta must lie in (0, 1)")
    ps = psi.psi if isinstance(psi, PsiPair) else psi
    u = (lambda t: t ** p) if u is None else u
    seq = np.append(np.asarray(a, dtype=complex), complex(L))
    n = len(seq)
    absL = abs(L)
    lhs = float(ps(absL) * u(absL))
    first = float(ps(abs(seq[0]) / (1 - theta)) * u(absL))
    psi_k = np.asarray(ps(np.abs(seq[1:]) / (1 - theta)), dtype=float)
    dev = np.abs(seq - L) / theta
    if G is None:
        terms = psi_k * np.asarray([u(d) for d in dev[:-1]], dtype=float)
    else:
        groups: dict[int, set[int]] = {k: {k - 1} for k in range(1, n)}
        seen = set()
        for k, j in G:
            if not (k > j >= 0):
                raise ParameterError(f"pair {(k, j)} not of the form k > j >= 0")
            if k < n:
                groups[k].add(j)
            seen.add((k, j))
        missing = [k for k in range(1, n - 1) if (k, k - 1) not in seen]
        if missing:
            raise ParameterError(f"G lacks (k, k-1) for k in {missing[:5]}")
        terms = np.array(
            [psi_k[k - 1] * np.mean([u(dev[j]) for j in sorted(groups[k])]) for k in range(1, n)]
        )
    # tail beyond the appended limit contributes psi(|L|/(1-t)) u(0)
    tail = float(ps(absL / (1 - theta)) * u(0.0))
    rhs = first + max(float(terms.max()) if terms.size else 0.0, tail)
    return SequenceBound(lhs, rhs)
