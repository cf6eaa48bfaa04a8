"""Finite measure spaces with a unit-ball relation and optional nested scales.

A space is a point set ``0..N-1`` carrying a positive measure ``mu`` and a
reflexive relation ``U``.  ``B_x`` is row ``x`` of ``U`` and ``B*_y`` is
column ``y``.  All integrals are measure-weighted sums over points.
"""
from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import DomainError, NestingError, ReflexivityError, UndefinedPairError

__all__ = [
    "Space",
    "GrowthFit",
    "build_space",
    "as_relation",
    "iterated_ball",
    "growth_ratios",
    "fit_growth_constant",
    "growth_violations",
    "vol_star",
    "vol_star_matrix",
    "space_to_dict",
    "space_from_dict",
]


def as_relation(rel, n: int) -> sp.csr_matrix:
    """Coerce a dense mask, sparse matrix or ``(x, y)`` pair list to boolean CSR."""
    if sp.issparse(rel):
        m = sp.csr_matrix(rel, dtype=bool)
    else:
        arr = np.asarray(rel)
        if arr.ndim == 2 and arr.shape == (n, n) and arr.dtype == bool:
            m = sp.csr_matrix(arr)
        else:
            pairs = np.asarray(rel, dtype=np.int64).reshape(-1, 2)
            if pairs.size and (pairs.min() < 0 or pairs.max() >= n):
                raise DomainError("relation pair index out of range")
            m = sp.csr_matrix(
                (np.ones(len(pairs), dtype=bool), (pairs[:, 0], pairs[:, 1])), shape=(n, n)
            )
    if m.shape != (n, n):
        raise DomainError(f"relation shape {m.shape} does not match {n} points")
    m.sum_duplicates()
    m.eliminate_zeros()
    m.sort_indices()
    return m


def _is_subset(a: sp.csr_matrix, b: sp.csr_matrix) -> bool:
    return (a > b).nnz == 0


@dataclass(frozen=True, eq=False)
class Space:
    """Immutable finite space.  Build with :func:`build_space`."""

    measure: np.ndarray
    relation: sp.csr_matrix
    scales: tuple = ()
    coords: np.ndarray | None = None
    grid_shape: tuple | None = None
    spacing: float | None = None
    _balls: dict = field(default_factory=dict, repr=False)

    @property
    def n(self) -> int:
        return len(self.measure)

    @property
    def dim(self) -> int | None:
        return None if self.coords is None else self.coords.shape[1]

    def ball(self, x: int) -> np.ndarray:
        """Indices of ``B_x``."""
        r = self.relation
        return r.indices[r.indptr[x]:r.indptr[x + 1]]

    def dual_ball(self, y: int) -> np.ndarray:
        """Indices of ``B*_y``."""
        r = self.relation_t
        return r.indices[r.indptr[y]:r.indptr[y + 1]]

    @cached_property
    def relation_t(self) -> sp.csr_matrix:
        t = self.relation.T.tocsr()
        t.sort_indices()
        return t

    @cached_property
    def pairs(self) -> tuple[np.ndarray, np.ndarray]:
        """Row and column index arrays of every ``(x, y)`` in ``U``."""
        coo = self.relation.tocoo()
        order = np.lexsort((coo.col, coo.row))
        return coo.row[order].astype(np.int64), coo.col[order].astype(np.int64)

    @cached_property
    def ball_measure(self) -> np.ndarray:
        """``mu(B_x)`` for every x."""
        return self.relation.astype(float) @ self.measure

    @cached_property
    def dual_ball_measure(self) -> np.ndarray:
        """``mu(B*_y)`` for every y."""
        return self.relation_t.astype(float) @ self.measure

    @cached_property
    def max_neighbor_ball_measure(self) -> np.ndarray:
        """``max_{y in B_x} mu(B_y)``: the worst ball size entering admissibility."""
        rows, cols = self.pairs
        out = np.zeros(self.n)
        np.maximum.at(out, rows, self.ball_measure[cols])
        return out

    @property
    def is_symmetric(self) -> bool:
        return (self.relation != self.relation_t).nnz == 0

    def scale_ball(self, j: int, x: int) -> np.ndarray:
        """Indices of ``U_j(x)``."""
        r = self.scales[j]
        return r.indices[r.indptr[x]:r.indptr[x + 1]]

    def scale_dual_measure(self, j: int) -> np.ndarray:
        """``mu(U_j^*(y))`` for every y; ``j = len(scales)`` is the diagonal."""
        if j >= len(self.scales):
            return self.measure.copy()
        return self.scales[j].T.astype(float) @ self.measure


def build_space(
    measure,
    unit_relation,
    scales: Sequence | None = None,
    *,
    coords=None,
    grid_shape=None,
    spacing=None,
) -> Space:
    """Validate inputs and return a :class:`Space`.

    ``unit_relation`` and each scale may be a dense boolean ``(N, N)`` mask, a
    scipy sparse matrix, or a list of ``(x, y)`` pairs.
    """
    mu = np.array(measure, dtype=float).ravel()
    n = len(mu)
    if n == 0:
        raise DomainError("space must have at least one point")
    if not np.all(np.isfinite(mu)) or np.any(mu <= 0):
        raise DomainError("measure must be finite and strictly positive")
    rel = as_relation(unit_relation, n)
    diag = rel.diagonal()
    if not diag.all():
        missing = np.flatnonzero(~diag)
        raise ReflexivityError(f"unit relation misses diagonal pairs at points {missing[:10].tolist()}")
    sc = []
    for j, s in enumerate(scales or ()):
        m = as_relation(s, n)
        if not m.diagonal().all():
            raise ReflexivityError(f"scale U_{j} is not reflexive")
        if sc and not _is_subset(m, sc[-1]):
            raise NestingError(f"scale U_{j} is not contained in U_{j - 1}")
        sc.append(m)
    if coords is not None:
        coords = np.asarray(coords, dtype=float)
        if coords.ndim == 1:
            coords = coords[:, None]
        if coords.shape[0] != n:
            raise DomainError("coords must have one row per point")
    if grid_shape is not None:
        grid_shape = tuple(int(k) for k in grid_shape)
        if int(np.prod(grid_shape)) != n:
            raise DomainError("grid_shape does not match point count")
    return Space(
        measure=mu,
        relation=rel,
        scales=tuple(sc),
        coords=coords,
        grid_shape=grid_shape,
        spacing=None if spacing is None else float(spacing),
    )


def iterated_ball(space: Space, x: int, n: int) -> np.ndarray:
    """Sorted indices of ``B^n_x`` (``n - 1`` compositions of ``U`` after ``B_x``)."""
    if n < 1:
        raise DomainError("n must be a positive integer")
    key = (int(x), int(n))
    cached = space._balls.get(key)
    if cached is not None:
        return cached
    rel = space.relation
    reached = np.zeros(space.n, dtype=bool)
    frontier = space.ball(x)
    reached[frontier] = True
    for _ in range(n - 1):
        if frontier.size == 0:
            break
        nxt = np.unique(rel[frontier].indices)
        nxt = nxt[~reached[nxt]]
        reached[nxt] = True
        frontier = nxt
    out = np.flatnonzero(reached)
    space._balls[key] = out
    return out


@dataclass(frozen=True)
class GrowthFit:
    C: float
    lambda0: float
    max_n_tested: int


def growth_ratios(space: Space, max_n: int) -> np.ndarray:
    """Array ``r[n-1, x] = mu(B^n_x) / mu(B_x)`` for ``n = 1..max_n``, computed exhaustively."""
    if max_n < 1:
        raise DomainError("max_n must be >= 1")
    u_t = space.relation_t.astype(np.float32)
    reach = space.relation.toarray()
    out = np.empty((max_n, space.n))
    out[0] = 1.0
    for k in range(1, max_n):
        nxt = (u_t @ reach.T.astype(np.float32)).T > 0
        if np.array_equal(nxt, reach):
            out[k:] = out[k - 1]
            break
        reach = nxt
        out[k] = (reach @ space.measure) / space.ball_measure
    return out


def fit_growth_constant(space: Space, max_n: int = 16, grid_size: int = 200) -> GrowthFit:
    """Smallest grid value ``lambda0`` with ``mu(B^n_x) <= lambda0^n mu(B_x)`` for n <= max_n.

    The grid is geometric from 1 to ``N`` (extended if needed).  ``C`` is the
    tight companion ``max_{x,n} ratio / lambda0^n``, which never exceeds 1.
    """
    ratios = growth_ratios(space, max_n).max(axis=1)
    ns = np.arange(1, max_n + 1)
    needed = float(np.max(ratios ** (1.0 / ns)))
    top = max(float(space.n), needed, 1.0 + 1e-9)
    grid = np.geomspace(1.0, top, grid_size)
    for lam in grid:
        c = float(np.max(ratios / lam ** ns))
        if c <= 1.0 + 1e-12:
            return GrowthFit(C=c, lambda0=float(lam), max_n_tested=max_n)
    c = float(np.max(ratios / needed ** ns))
    return GrowthFit(C=c, lambda0=needed, max_n_tested=max_n)


def growth_violations(space: Space, fit: GrowthFit) -> list[tuple[int, int, float]]:
    """``(x, n, excess)`` for every tested pair breaking ``mu(B^n_x) <= C lambda0^n mu(B_x)``."""
    r = growth_ratios(space, fit.max_n_tested)
    bound = fit.C * fit.lambda0 ** np.arange(1, fit.max_n_tested + 1)
    excess = r - bound[:, None] * (1 + 1e-12)
    bad = np.argwhere(excess > 0)
    return [(int(x), int(k + 1), float(excess[k, x])) for k, x in bad]


def _scale_depth(space: Space) -> sp.csr_matrix:
    """Sparse matrix on the pattern of U_0 holding ``1 + j*`` where j* is the deepest scale with the pair."""
    depth = space.scales[0].astype(np.int64)
    for m in space.scales[1:]:
        depth = depth + m.astype(np.int64)
    return depth.tocsr()


def vol_star(space: Space, x: int, y: int) -> float:
    """VOL*(x, y) = min over j with x in U_j^*(y) of mu(U_{j+1}^*(y)), with U_{J+1} the diagonal."""
    if not space.scales:
        raise DomainError("space has no scale family")
    if not space.scales[0][x, y]:
        raise UndefinedPairError(f"VOL*({x}, {y}) undefined: {y} not in U_0({x})")
    jstar = max(j for j, m in enumerate(space.scales) if m[x, y])
    return float(space.scale_dual_measure(jstar + 1)[y])


def vol_star_matrix(space: Space) -> sp.csr_matrix:
    """VOL* on every pair of ``U_0``, as a sparse matrix with the pattern of ``U_0``."""
    if not space.scales:
        raise DomainError("space has no scale family")
    depth = _scale_depth(space).tocoo()
    duals = np.stack([space.scale_dual_measure(j) for j in range(len(space.scales) + 1)])
    vals = duals[depth.data, depth.col]
    return sp.csr_matrix((vals, (depth.row, depth.col)), shape=depth.shape)


def _pairs_of(m: sp.csr_matrix) -> list[list[int]]:
    coo = m.tocoo()
    order = np.lexsort((coo.col, coo.row))
    return np.stack([coo.row[order], coo.col[order]], axis=1).tolist()


def space_to_dict(space: Space) -> dict:
    """JSON-ready document: ``points``, ``measure``, ``relation``, ``scales`` (+ geometry if present)."""
    doc = {
        "points": space.n,
        "measure": space.measure.tolist(),
        "relation": _pairs_of(space.relation),
        "scales": [_pairs_of(m) for m in space.scales],
    }
    if space.coords is not None:
        doc["coords"] = space.coords.tolist()
    if space.grid_shape is not None:
        doc["grid_shape"] = list(space.grid_shape)
    if space.spacing is not None:
        doc["spacing"] = space.spacing
    return doc


def space_from_dict(doc: dict) -> Space:
    allowed = {"points", "measure", "relation", "scales", "coords", "grid_shape", "spacing"}
    extra = set(doc) - allowed
    if extra:
        raise DomainError(f"unknown space fields: {sorted(extra)}")
    n = int(doc["points"])
    if len(doc["measure"]) != n:
        raise DomainError("measure length does not match points")
    return build_space(
        doc["measure"],
        np.asarray(doc["relation"], dtype=np.int64).reshape(-1, 2),
        [np.asarray(s, dtype=np.int64).reshape(-1, 2) for s in doc.get("scales", [])],
        coords=doc.get("coords"),
        grid_shape=doc.get("grid_shape"),
        spacing=doc.get("spacing"),
    )
