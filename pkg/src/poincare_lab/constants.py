"""Poincaré constant estimation and the constructive operator chain.

Three numbers bracket the optimal constant ``C(f) = lhs(f) / rhs(f)``:

* ``best_constant_p2``: the exact supremum at p = 2 (generalized eigenproblem);
* ``lower_bound_constant``: projected ascent for any p >= 1;
* ``run_constructive_chain``: an explicit upper bound from the transition
  kernel ``P``, the operators ``T, S_1, S_n`` and the nonlinear power
  iteration for p-norms of nonnegative maps.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
from scipy.optimize import minimize

from .errors import DegenerateInputError, DomainError, InconsistencyError, InfeasibleError, ParameterError
from .functionals import poincare_sides
from .space import GrowthFit, Space
from .weights import SLACK, AdmissibilityCertificate, WeightPair

log = logging.getLogger(__name__)

__all__ = [
    "ConstantEstimate",
    "ConstantReport",
    "TransitionKernel",
    "PNormResult",
    "ChainResult",
    "constraint_basis",
    "rhs_matrix",
    "best_constant_p2",
    "lower_bound_constant",
    "build_transition_kernel",
    "choose_delta",
    "pnorm_power_iteration",
    "run_constructive_chain",
    "random_admissible_functions",
]


@dataclass
class ConstantEstimate:
    value: float  # inf when unbounded
    witness: np.ndarray | None = field(default=None, repr=False)

    @property
    def bounded(self) -> bool:
        return bool(np.isfinite(self.value))


def _constraint_vector(space: Space, weights: WeightPair, mode: str) -> np.ndarray | None:
    if mode in ("none", "raw"):
        return None
    if mode == "x0":
        if not weights.X0.any():
            return None
        return np.where(weights.X0, space.measure, 0.0)
    if mode == "wplus":
        return weights.W_plus * space.measure
    raise ParameterError(f"unknown constraint mode {mode!r}")


def constraint_basis(space: Space, weights: WeightPair, mode: str = "x0") -> np.ndarray:
    """Orthonormal basis (columns, in full coordinates) of admissible test functions.

    Admissible means zero on pinned points and orthogonal to the centering
    vector of ``mode`` (``x0``: ``mu 1_X0``; ``wplus``: ``W_+ mu``; ``none``).
    """
    free = np.flatnonzero(~weights.pinned)
    c = _constraint_vector(space, weights, mode)
    if c is None or not np.any(c[free]):
        q = np.eye(len(free))
    else:
        q = la.null_space(c[free][None, :])
    basis = np.zeros((space.n, q.shape[1]))
    basis[free] = q
    return basis


def _pair_coef(space: Space, weights: WeightPair, normalized: bool) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    x, y = space.pairs
    coef = weights.W[x] * space.measure[x] * space.measure[y]
    if normalized:
        coef = coef / space.ball_measure[x]
    keep = (x != y) & (coef > 0)
    return x[keep], y[keep], coef[keep]


def rhs_matrix(space: Space, weights: WeightPair, *, normalized: bool = True) -> np.ndarray:
    """Dense symmetric matrix ``B`` with ``f^T B f`` equal to the p = 2 energy."""
    x, y, c = _pair_coef(space, weights, normalized)
    n = space.n
    off = sp.coo_matrix((c, (x, y)), shape=(n, n)).tocsr()
    off = off + off.T
    deg = np.asarray(off.sum(axis=1)).ravel()
    return (sp.diags(deg) - off).toarray()


def best_constant_p2(
    space: Space,
    weights: WeightPair,
    mode: str = "x0",
    *,
    normalized: bool = True,
    singular_rtol: float = 1e-10,
) -> ConstantEstimate:
    """Exact ``sup lhs/rhs`` at p = 2 over the constrained subspace.

    Works in the variables ``g = sqrt(W_+ mu) f`` so both forms stay well
    scaled when the weights span many orders of magnitude.  A numerically
    singular energy on the subspace (a nonconstant null function) yields an
    unbounded estimate with the null function as witness.
    """
    free = np.flatnonzero(~weights.pinned)
    a = (weights.W_plus * space.measure)[free]
    if np.any(a <= 0):
        raise DomainError("best_constant_p2 needs W_plus > 0 on unpinned points")
    B = rhs_matrix(space, weights, normalized=normalized)[np.ix_(free, free)]
    s = 1.0 / np.sqrt(a)
    M = B * s[:, None] * s[None, :]
    c = _constraint_vector(space, weights, mode)
    if c is None or not np.any(c[free]):
        Q = np.eye(len(free))
    else:
        Q = la.null_space((c[free] * s)[None, :])
    if Q.shape[1] == 0:
        raise DegenerateInputError("constrained subspace is trivial")
    Mq = Q.T @ M @ Q
    Mq = 0.5 * (Mq + Mq.T)
    evals, evecs = la.eigh(Mq)
    scale = max(abs(evals[-1]), np.finfo(float).tiny)
    g = Q @ evecs[:, 0]
    f = np.zeros(space.n)
    f[free] = s * g
    if evals[0] <= singular_rtol * scale:
        return ConstantEstimate(float("inf"), f)
    return ConstantEstimate(float(1.0 / evals[0]), f)


def _ratio_and_grad(f, a, x, y, coef, p):
    lhs = float(np.sum(a * np.abs(f) ** p))
    d = f[x] - f[y]
    ad = np.abs(d)
    rhs = float(np.sum(coef * ad ** p))
    gl = p * a * np.abs(f) ** (p - 1) * np.sign(f)
    t = p * coef * ad ** (p - 1) * np.sign(d)
    gr = np.bincount(x, weights=t, minlength=len(f)) - np.bincount(y, weights=t, minlength=len(f))
    return lhs, rhs, gl, gr


def lower_bound_constant(
    space: Space,
    weights: WeightPair,
    p: float = 2.0,
    restarts: int = 32,
    seed: int = 0,
    *,
    mode: str = "x0",
    normalized: bool = True,
    iters: int = 400,
) -> ConstantEstimate:
    """Best ``lhs/rhs`` found by projected normalized-gradient ascent from random starts.

    Each start ascends ``log(lhs/rhs)`` inside the admissible subspace with
    backtracking; for p > 1 the best few iterates are polished with L-BFGS.
    Every returned value is attained by its witness, so it is a valid lower
    bound for the optimal constant.
    """
    if p < 1:
        raise ParameterError("p must be >= 1")
    Q = constraint_basis(space, weights, mode)
    if Q.shape[1] == 0:
        raise DegenerateInputError("constrained subspace is trivial")
    a = weights.W_plus * space.measure
    x, y, coef = _pair_coef(space, weights, normalized)
    rng = np.random.default_rng(seed)

    def objective(g):
        f = Q @ g
        lhs, rhs, gl, gr = _ratio_and_grad(f, a, x, y, coef, p)
        if lhs <= 0:
            return np.inf, np.zeros_like(g)
        if rhs <= 0:
            return -np.inf, np.zeros_like(g)
        return -(np.log(lhs) - np.log(rhs)), -(Q.T @ (gl / lhs - gr / rhs))

    finals = []
    for _ in range(restarts):
        g = rng.standard_normal(Q.shape[1])
        g /= np.linalg.norm(g)
        val, grad = objective(g)
        if val == -np.inf:
            return ConstantEstimate(float("inf"), Q @ g)
        if not np.isfinite(val):
            continue
        step = 0.1
        for _ in range(iters):
            gn = np.linalg.norm(grad)
            if gn < 1e-14:
                break
            direction = -grad / gn
            while step > 1e-12:
                cand = g + step * direction
                cand /= np.linalg.norm(cand)
                cval, cgrad = objective(cand)
                if cval == -np.inf:
                    return ConstantEstimate(float("inf"), Q @ cand)
                if cval < val:
                    break
                step *= 0.5
            else:
                break
            g, val, grad = cand, cval, cgrad
            step = min(step * 2.0, 1.0)
        finals.append((val, g))
    if not finals:
        raise DegenerateInputError("all starts were degenerate (lhs = 0)")
    finals.sort(key=lambda t: t[0])
    best_val, best_g = -finals[0][0], finals[0][1]
    if p > 1:
        for val, g in finals[:4]:
            res = minimize(objective, g, jac=True, method="L-BFGS-B",
                           options={"maxiter": 2000, "gtol": 1e-13, "ftol": 1e-16})
            if np.isfinite(res.fun) and -res.fun > best_val:
                best_val, best_g = -res.fun, res.x
    f = Q @ best_g
    lhs, rhs = poincare_sides(space, weights, f, p, normalized=normalized)
    return ConstantEstimate(float(lhs / rhs), f)


@dataclass(eq=False)
class TransitionKernel:
    """Weight-thresholded kernel ``P`` and the operators built from it.

    Functions on ``X x X`` are stored as vectors over the support pairs
    ``(pair_x[k], pair_y[k])``: the pairs of ``E`` followed by ``X0 x X0``.
    """

    space: Space
    weights: WeightPair
    certificate: AdmissibilityCertificate
    P: sp.csr_matrix
    E: sp.csr_matrix
    pair_x: np.ndarray
    pair_y: np.ndarray
    row_sum_deviation: float
    linfty_ratio: float

    @property
    def T(self) -> sp.csr_matrix:
        """``T f(x) = sum_y P(x, y) f(y) mu(y)`` as a matrix."""
        return (self.P @ sp.diags(self.space.measure)).tocsr()

    @property
    def S1(self) -> sp.csr_matrix:
        """``S_1`` as a matrix from pair vectors to point vectors."""
        mu = self.space.measure
        x, y = self.pair_x, self.pair_y
        in_x0 = self.weights.X0[x]
        vals = np.where(
            in_x0,
            mu[y] / mu[self.weights.X0].sum() if self.weights.X0.any() else 0.0,
            np.asarray(self.P[x, y]).ravel() * mu[y],
        )
        return sp.csr_matrix((vals, (x, np.arange(len(x)))), shape=(self.space.n, len(x)))

    @property
    def pair_measure(self) -> np.ndarray:
        """Energy measure ``W(y) mu(x) mu(y) / mu(B_y)`` of each support pair."""
        mu = self.space.measure
        x, y = self.pair_x, self.pair_y
        return self.weights.W[y] * mu[x] * mu[y] / self.space.ball_measure[y]

    def pair_values(self, g) -> np.ndarray:
        """Restrict a dense ``(N, N)`` function or a callable ``g(x, y)`` to the support pairs."""
        if callable(g):
            return np.asarray(g(self.pair_x, self.pair_y), dtype=float)
        return np.asarray(g)[self.pair_x, self.pair_y]

    def apply_T(self, f) -> np.ndarray:
        return self.T @ np.asarray(f, dtype=float)

    def apply_S1(self, g) -> np.ndarray:
        return self.S1 @ g

    def apply_Sn(self, g, n: int) -> np.ndarray:
        """``S_n g = S_1 g + T S_{n-1} g``."""
        T, s1g = self.T, self.apply_S1(g)
        out = s1g.copy()
        for _ in range(n - 1):
            out = s1g + T @ out
        return out

    def Sn_matrix(self, n: int) -> np.ndarray:
        T, S1 = self.T, self.S1.toarray()
        out = S1.copy()
        for _ in range(n - 1):
            out = S1 + T @ out
        return out

    def nilpotency_index(self, cap: int = 10_000) -> int | None:
        """Smallest n with ``T^n = 0`` (``T`` is nonnegative, so test ``T^n 1``)."""
        T = self.T
        v = np.ones(self.space.n)
        for n in range(1, cap + 1):
            v = T @ v
            if not np.any(v > 0):
                return n
        return None


def build_transition_kernel(space: Space, weights: WeightPair, certificate: AdmissibilityCertificate) -> TransitionKernel:
    """Construct ``P`` on ``E = {(x, y): x active, y in B*_x, W(y) >= lam W_+(x)}`` and verify its laws."""
    if not certificate.passed:
        raise InfeasibleError("transition kernel needs a passing admissibility certificate")
    lam, s, eps = certificate.lam, certificate.s, certificate.epsilon
    mu = space.measure
    active = ~(weights.X0 | weights.pinned)
    z, x = space.pairs  # z in B*_x
    keep = active[x] & (weights.W[z] >= lam * weights.W_plus[x] * (1 - SLACK))
    ex, ey = x[keep], z[keep]
    ws = np.power(weights.W[ey], s)
    denom = np.bincount(ex, weights=ws * mu[ey], minlength=space.n)
    empty = np.flatnonzero(active & (denom <= 0))
    if empty.size:
        raise InconsistencyError(f"empty kernel rows at points {empty[:10].tolist()} despite passing certificate")
    pv = ws / denom[ex]
    P = sp.csr_matrix((pv, (ex, ey)), shape=(space.n, space.n))
    E = sp.csr_matrix((np.ones(len(ex), dtype=bool), (ex, ey)), shape=(space.n, space.n))
    rows = P @ mu
    dev = float(np.max(np.abs(rows - active.astype(float))))
    if dev >= 1e-12:
        raise InconsistencyError(f"kernel row sums deviate by {dev:.3e}")
    with np.errstate(divide="ignore"):
        bound = (1.0 / eps) / space.ball_measure[ey] * np.power(weights.W[ey] / weights.W_plus[ex], s)
    linfty = float(np.max(pv / bound)) if len(pv) else 0.0
    x0 = np.flatnonzero(weights.X0)
    px = np.concatenate([ex, np.repeat(x0, len(x0))])
    py = np.concatenate([ey, np.tile(x0, len(x0))])
    return TransitionKernel(space, weights, certificate, P, E, px, py, dev, linfty)


def choose_delta(certificate: AdmissibilityCertificate, p: float, growth: GrowthFit | float) -> float:
    """Midpoint of the feasible δ interval: ``1 - δ(p-1) >= s`` and ``lam^{1-δ(p-1)} > lambda0``."""
    lam0 = growth.lambda0 if isinstance(growth, GrowthFit) else float(growth)
    lam, s = certificate.lam, certificate.s
    if not lam > lam0:
        raise InfeasibleError(f"lambda = {lam} does not exceed lambda0 = {lam0}")
    if p < 1:
        raise ParameterError("p must be >= 1")
    if p == 1:
        return 0.5 * (1 - s)
    upper = min((1 - s) / (p - 1), (1 - np.log(lam0) / np.log(lam)) / (p - 1))
    return 0.5 * upper


@dataclass
class PNormResult:
    upper: float
    lower: float
    bounds: np.ndarray = field(repr=False)
    vector: np.ndarray | None = field(default=None, repr=False)
    converged: bool = False

    @property
    def bounded(self) -> bool:
        return bool(np.isfinite(self.upper))


def pnorm_power_iteration(
    T,
    p: float,
    iters: int = 1000,
    *,
    mu=None,
    nu=None,
    start=None,
    tol: float = 1e-13,
) -> PNormResult:
    """Bounds on ``||T||`` from ``L^p(nu)`` to ``L^p(mu)`` for an entrywise nonnegative ``T``.

    Iterates ``v -> (T^* (T v)^{p-1})^{1/(p-1)}``.  For any positive ``v`` the
    value ``max_i ((S v)_i / v_i)^{(p-1)/p}`` bounds the norm from above
    (``v`` is then a Lyapunov function); ``||T v|| / ||v||`` bounds it from
    below.  ``bounds`` holds the upper bound after each step.  At p = 1 the
    norm is the exact weighted maximal column sum.
    """
    T = T.toarray() if sp.issparse(T) else np.asarray(T, dtype=float)
    if np.any(T < 0):
        raise DomainError("T must be entrywise nonnegative")
    m, n = T.shape
    mu = np.ones(m) if mu is None else np.asarray(mu, dtype=float)
    nu = np.ones(n) if nu is None else np.asarray(nu, dtype=float)
    live = T.any(axis=0)
    if np.any(live & (nu <= 0)):
        return PNormResult(float("inf"), float("inf"), np.array([np.inf]))
    T, nu = T[:, live], nu[live]
    if T.size == 0 or not T.any():
        return PNormResult(0.0, 0.0, np.array([0.0]), converged=True)
    if p == 1:
        col = (mu @ T) / nu
        return PNormResult(float(col.max()), float(col.max()), np.array([col.max()]), converged=True)
    if p < 1:
        raise ParameterError("p must be >= 1")
    That = (mu ** (1 / p))[:, None] * T * (nu ** (-1 / p))[None, :]
    if start is None:
        v = np.ones(That.shape[1])
    else:
        # start is given in the weighted coordinates
        v = np.asarray(start, dtype=float)[live] * nu ** (1 / p)
        if np.any(v <= 0):
            raise DomainError("start vector must be positive on the support")
    q = 1.0 / (p - 1)
    bounds = []
    lower = 0.0
    converged = False
    for _ in range(iters):
        v = v / v.max()
        w = That @ v
        lower = max(lower, float(np.linalg.norm(w, p) / np.linalg.norm(v, p)))
        sv = (That.T @ w ** (p - 1)) ** q
        if not np.all(np.isfinite(sv)) or sv.max() > 1e300:
            return PNormResult(float("inf"), lower, np.array(bounds + [np.inf]))
        up = float(np.max(sv / v) ** (1 / (q * p)))
        bounds.append(up)
        if min(bounds) - lower <= tol * min(bounds):
            converged = True
            break
        v = sv
    bounds = np.array(bounds)
    vec = np.zeros(len(live))
    vec[live] = v * nu ** (-1 / p)
    return PNormResult(float(bounds.min()), lower, bounds, vec, converged)


@dataclass
class ChainResult:
    constructive_upper: float
    delta: float
    s_prime: float
    n_used: int
    nilpotency: int | None
    lyapunov_bound: float
    norm: PNormResult = field(repr=False)
    identity_error: float = 0.0
    lyapunov_max_excess: float = 0.0
    f_lower_ok: bool = True
    delta_chain_min_margin: float = 0.0
    validation_max_ratio: float = 0.0
    geometric_ratio: float = 0.0

    def to_dict(self) -> dict:
        return {
            "constructive_upper": self.constructive_upper,
            "delta": self.delta,
            "s_prime": self.s_prime,
            "n_used": self.n_used,
            "nilpotency": self.nilpotency,
            "lyapunov_bound": self.lyapunov_bound,
            "identity_error": self.identity_error,
            "lyapunov_max_excess": self.lyapunov_max_excess,
            "delta_chain_min_margin": self.delta_chain_min_margin,
            "validation_max_ratio": self.validation_max_ratio,
            "geometric_ratio": self.geometric_ratio,
        }


def random_admissible_functions(
    space: Space, weights: WeightPair, count: int, seed: int = 0, mode: str = "x0"
) -> np.ndarray:
    """``count`` random test functions (rows) in the admissible subspace of ``mode``."""
    rng = np.random.default_rng(seed)
    Q = constraint_basis(space, weights, mode)
    return (Q @ rng.standard_normal((Q.shape[1], count))).T


def run_constructive_chain(
    space: Space,
    weights: WeightPair,
    certificate: AdmissibilityCertificate,
    p: float = 2.0,
    n_max: int = 50,
    *,
    growth: GrowthFit | float | None = None,
    kernel: TransitionKernel | None = None,
    seed: int = 0,
    n_validation: int = 64,
    iters: int = 2000,
) -> ChainResult:
    """Verify the Lyapunov identities and return an explicit constant ``C_upper``.

    ``C_upper = ||S_n||^p`` from the energy measure on pairs to ``L^p(W_+ mu)``,
    with n the nilpotency index of ``T`` (``T^n = 0``), where
    ``S_n Delta_f >= |f - T^n f| = |f|`` gives ``lhs(f) <= C_upper rhs(f)``
    for every f with zero mean on X0 and zero on pinned points.
    """
    kernel = kernel or build_transition_kernel(space, weights, certificate)
    lam0 = certificate.lambda0 if growth is None else (growth.lambda0 if isinstance(growth, GrowthFit) else float(growth))
    delta = choose_delta(certificate, p, lam0)
    s_prime = 1 - delta * (p - 1)
    Wp = weights.W_plus
    if np.any(Wp[~weights.pinned] <= 0):
        raise DomainError("constructive chain needs W_plus > 0")
    with np.errstate(divide="ignore"):
        wpd = np.where(Wp > 0, Wp, 1.0) ** (-delta)
    px, py = kernel.pair_x, kernel.pair_y
    in_x0 = weights.X0[px]
    F = np.where(in_x0, wpd[px], wpd[px] - wpd[py])
    e_part = ~in_x0
    lam = certificate.lam
    f_ok = bool(
        np.all(F[e_part] <= wpd[px[e_part]] * (1 + 1e-12))
        and np.all(F[e_part] >= (1 - lam ** (-delta)) * wpd[px[e_part]] * (1 - 1e-12))
    )
    if not f_ok:
        raise InconsistencyError("Lyapunov function leaves its two-sided bounds on E")

    T, S1 = kernel.T, kernel.S1
    keep = ~weights.pinned
    s1F = S1 @ F
    snF = s1F.copy()
    tn = T @ wpd
    id_err = 0.0
    excess = -np.inf
    rng = np.random.default_rng(seed)
    fs = random_admissible_functions(space, weights, 8, seed=int(rng.integers(2**31)))
    dchain_min = np.inf
    s1d = [S1 @ np.abs(f[px] - f[py]) for f in fs]
    snd = [v.copy() for v in s1d]
    tnf = [T @ f for f in fs]
    nil = kernel.nilpotency_index()
    n_top = max(n_max, nil or 0)
    for n in range(1, n_top + 1):
        if n > 1:
            snF = s1F + T @ snF
            tn = T @ tn
            snd = [a + T @ b for a, b in zip(s1d, snd)]
            tnf = [T @ v for v in tnf]
        scale = np.maximum(wpd, 1.0)
        id_err = max(id_err, float(np.max(np.abs(snF - (wpd - tn))[keep] / scale[keep])))
        excess = max(excess, float(np.max((snF - wpd) / scale)))
        for f, a, b in zip(fs, snd, tnf):
            margin = a - np.abs(f - b)
            dchain_min = min(dchain_min, float(np.min(margin / np.maximum(np.abs(f).max(), 1e-300))))
        if n >= n_max and max(np.abs(v).max() for v in tnf) < 1e-14:
            break
    if id_err > 1e-12:
        raise InconsistencyError(f"S_n F identity off by {id_err:.3e}")
    if excess > 1e-12:
        raise InconsistencyError(f"S_n F exceeds W_+^-delta by {excess:.3e}")
    if dchain_min < -1e-12:
        raise InconsistencyError(f"S_n Delta_f < |f - T^n f| by {-dchain_min:.3e}")

    if nil is None:
        raise InfeasibleError("T is not nilpotent; constructive bound unavailable")
    n_used = max(nil, 1)
    Sn = kernel.Sn_matrix(n_used)
    nu = kernel.pair_measure
    out_measure = Wp * space.measure
    lyap = pnorm_power_iteration(Sn, p, iters=1, mu=out_measure, nu=nu, start=F) if p > 1 else None
    norm = pnorm_power_iteration(Sn, p, iters=iters, mu=out_measure, nu=nu, start=F if p > 1 else None)
    c_upper = norm.upper ** p
    lyap_bound = (lyap.upper if lyap is not None else norm.upper) ** p

    vals = random_admissible_functions(space, weights, n_validation, seed=seed + 1)
    worst = 0.0
    for f in vals:
        lhs, rhs = poincare_sides(space, weights, f, p)
        if rhs > 0:
            worst = max(worst, lhs / rhs)
    if worst > c_upper * (1 + 1e-9):
        raise InconsistencyError(f"validation ratio {worst} exceeds C_upper {c_upper}")
    r = lam0 / lam ** s_prime
    return ChainResult(
        constructive_upper=float(c_upper),
        delta=float(delta),
        s_prime=float(s_prime),
        n_used=n_used,
        nilpotency=nil,
        lyapunov_bound=float(lyap_bound),
        norm=norm,
        identity_error=id_err,
        lyapunov_max_excess=excess,
        f_lower_ok=f_ok,
        delta_chain_min_margin=dchain_min,
        validation_max_ratio=worst,
        geometric_ratio=float(r),
    )


@dataclass
class ConstantReport:
    p: float
    exact_p2: ConstantEstimate | None
    lower_bound: ConstantEstimate | None
    chain: ChainResult | None

    @property
    def constructive_upper(self) -> float | None:
        return None if self.chain is None else self.chain.constructive_upper

    def consistent(self, rtol: float = 1e-6) -> bool:
        lo = None if self.lower_bound is None else self.lower_bound.value
        ex = None if self.exact_p2 is None else self.exact_p2.value
        up = self.constructive_upper
        chain = [v for v in (lo, ex, up) if v is not None]
        return all(a <= b * (1 + rtol) for a, b in zip(chain, chain[1:]))
