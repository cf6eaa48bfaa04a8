"""Ready-to-run spaces and weight pairs: graphs, weighted lattices, pixel domains, Boltzmann velocities."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components, shortest_path
from scipy.spatial import cKDTree

from .errors import DomainError, ParameterError
from .space import Space, build_space, fit_growth_constant
from .weights import WeightPair, check_differential_condition, make_weights

log = logging.getLogger(__name__)

MAX_POINTS = 100_000


@dataclass
class Scenario:
    space: Space
    weights: WeightPair
    info: dict = field(default_factory=dict)

    def __iter__(self):
        yield self.space
        yield self.weights


@dataclass
class DomainScenario(Scenario):
    n_star: int = 0
    covered: bool = True
    levels: np.ndarray | None = None
    layers: list = field(default_factory=list)

    def __iter__(self):
        yield self.space
        yield self.weights
        yield self.n_star


# -- graphs -----------------------------------------------------------------


def complete_graph(n: int) -> np.ndarray:
    return ~np.eye(n, dtype=bool)


def path_graph(n: int) -> np.ndarray:
    a = np.zeros((n, n), dtype=bool)
    i = np.arange(n - 1)
    a[i, i + 1] = a[i + 1, i] = True
    return a


def binary_tree(depth: int) -> np.ndarray:
    """Complete binary tree with levels ``0..depth`` (``2^(depth+1) - 1`` vertices)."""
    n = 2 ** (depth + 1) - 1
    a = np.zeros((n, n), dtype=bool)
    for child in range(1, n):
        parent = (child - 1) // 2
        a[parent, child] = a[child, parent] = True
    return a


def disjoint_union(*adjs) -> np.ndarray:
    return sp.block_diag([sp.csr_matrix(np.asarray(a, dtype=bool)) for a in adjs]).toarray().astype(bool)


def make_graph_scenario(adjacency, root: int = 0, decay_rate: float = 0.0, p: float = 2.0, *, x0=None) -> Scenario:
    """Counting measure, ``U`` = edges plus diagonal, ``W = W_+ = exp(-decay * dist(., root))``.

    ``X0`` defaults to ``{root}``.  Vertices unreachable from the root get
    distance ``max finite distance + 1`` and a warning is emitted.
    """
    adj = sp.csr_matrix(adjacency, dtype=bool)
    n = adj.shape[0]
    if adj.shape != (n, n) or (adj != adj.T).nnz:
        raise DomainError("adjacency must be a symmetric square matrix")
    rel = (adj + sp.identity(n, dtype=bool, format="csr")).astype(bool)
    space = build_space(np.ones(n), rel)
    dist = shortest_path(adj.astype(float), unweighted=True, indices=root)
    reachable = np.isfinite(dist)
    if not reachable.all():
        warnings.warn("graph is disconnected; the Poincaré constant is expected to be unbounded", stacklevel=2)
        dist[~reachable] = dist[reachable].max() + 1
    w = np.exp(-decay_rate * dist)
    weights = make_weights(w, w, X0=[root] if x0 is None else x0)
    valence = np.asarray(adj.sum(axis=1)).ravel()
    info = {"kind": "graph", "root": root, "decay_rate": decay_rate, "p": p,
            "max_valence": int(valence.max()) if n else 0, "connected": bool(reachable.all())}
    return Scenario(space, weights, info)


# -- lattices ---------------------------------------------------------------


def _grid(d: int, L: float, h: float) -> tuple[np.ndarray, tuple]:
    if not (h > 0 and L > 0):
        raise ParameterError("need h > 0 and L > 0")
    k = 2 * L / h
    m = int(round(k))
    if abs(k - m) > 1e-9:
        raise ParameterError("2L/h must be an integer")
    shape = (m + 1,) * d
    if (m + 1) ** d > MAX_POINTS:
        raise ParameterError(f"lattice has {(m + 1) ** d} points, above the cap {MAX_POINTS}")
    axis = -L + h * np.arange(m + 1)
    mesh = np.meshgrid(*([axis] * d), indexing="ij")
    return np.stack([g.ravel() for g in mesh], axis=1), shape


def _radius_relation(coords: np.ndarray, r: float, strict: bool = False) -> sp.csr_matrix:
    n = len(coords)
    tree = cKDTree(coords)
    rr = r * (1 - 1e-9) if strict else r * (1 + 1e-9)
    pairs = tree.query_pairs(rr, output_type="ndarray")
    i = np.concatenate([pairs[:, 0], pairs[:, 1], np.arange(n)])
    j = np.concatenate([pairs[:, 1], pairs[:, 0], np.arange(n)])
    return sp.csr_matrix((np.ones(len(i), dtype=bool), (i, j)), shape=(n, n))


def dyadic_scales(coords: np.ndarray, n_scales: int) -> list[sp.csr_matrix]:
    """``U_j = {|x - y| <= 2^-j}`` for ``j = 0..n_scales-1``."""
    return [_radius_relation(coords, 2.0 ** -j) for j in range(n_scales)]


def lattice_space(d: int, L: float, h: float, n_scales: int = 0) -> Space:
    """Grid on ``[-L, L]^d`` with cell measure ``h^d`` and Euclidean unit balls."""
    coords, shape = _grid(d, L, h)
    rel = _radius_relation(coords, 1.0)
    scales = dyadic_scales(coords, n_scales) if n_scales else None
    return build_space(np.full(len(coords), h ** d), rel, scales, coords=coords, grid_shape=shape, spacing=h)


def make_lattice_scenario(
    d: int = 1,
    L: float = 8.0,
    h: float = 0.25,
    s_exp: float = 2.0,
    eps: float = 0.0,
    variant: str = "neumann",
    mode: str = "gain",
    *,
    n_scales: int = 0,
    core_radius: float | None = 2.0,
    core_rate: float = 3.0,
    s_diff: float = 0.5,
    rho: float = 1.0,
    R: float | None = None,
    eta: float | None = None,
    lam: float | None = None,
) -> Scenario:
    """Weighted lattice scenarios.

    ``mode="gain"``: ``W = exp(-|x|^s)`` and ``W_+ = exp(eps s |x|^{s-1}) W``
    (``exp(+|x|^s)`` for ``variant="dirichlet"``).  For the Neumann variant,
    ``X0 = {|x| <= 1/2}`` and, unless ``core_radius`` is None, both weights
    are replaced on ``|x| <= core_radius`` by
    ``W_+(core_radius) exp(core_rate (core_radius - |x|))`` (a bounded change
    on a compact set that makes the small exceptional set workable).  The
    Dirichlet variant pins the outer shell ``max_k |x_k| > L - 1``.

    ``mode="corrected"``: the modified pair built from ``V = |x|^s`` with the
    differential condition parameters ``(s_diff, rho, R)``, ``eta`` and ``lam``.
    """
    if s_exp < 1:
        raise ParameterError("s_exp must be >= 1")
    if not 0 <= eps < 1:
        raise ParameterError("eps must lie in [0, 1)")
    if variant not in ("neumann", "dirichlet"):
        raise ParameterError(f"unknown variant {variant!r}")
    space = lattice_space(d, L, h, n_scales)
    r = np.linalg.norm(space.coords, axis=1)
    x0 = r <= 0.5 + 1e-12
    info = {"kind": "lattice", "d": d, "L": L, "h": h, "s_exp": s_exp, "eps": eps,
            "variant": variant, "mode": mode, "n_scales": n_scales}
    full = space.ball_measure.max()
    info["clipped_fraction"] = float(np.mean(space.ball_measure < full * (1 - 1e-12)))
    if mode == "corrected":
        if variant != "neumann":
            raise ParameterError("corrected mode is a Neumann construction")
        return _corrected(space, r, x0, s_exp, s_diff, rho, R, eta, lam, info)
    if mode != "gain":
        raise ParameterError(f"unknown mode {mode!r}")
    gain = np.exp(eps * s_exp * r ** (s_exp - 1))
    if variant == "dirichlet":
        W = np.exp(r ** s_exp)
        pinned = np.max(np.abs(space.coords), axis=1) > L - 1 + 1e-12
        return Scenario(space, make_weights(W, gain * W, pinned=pinned), info)
    W = np.exp(-(r ** s_exp))
    Wp = gain * W
    if core_radius is not None:
        rc = float(core_radius)
        wp_edge = np.exp(eps * s_exp * rc ** (s_exp - 1) - rc ** s_exp)
        inner = r <= rc + 1e-12
        prof = wp_edge * np.exp(core_rate * (rc - r))
        W = np.where(inner, prof, W)
        Wp = np.where(inner, prof, Wp)
        info.update(core_radius=rc, core_rate=core_rate)
    return Scenario(space, make_weights(W, Wp, X0=x0), info)


def _corrected(space, r, x0, s_exp, s_diff, rho, R, eta, lam, info) -> Scenario:
    d = space.dim
    V = r ** s_exp
    W = np.exp(-V)
    W /= np.sum(W * space.measure)
    if R is None:
        rep = check_differential_condition(space, V, s_diff, rho, 0.0)
        R = float(r[rep.violations].max()) if rep.violations.size else 0.0
    eta = rho / 2 if eta is None else eta
    if not 0 < eta < rho:
        raise ParameterError("need 0 < eta < rho")
    if lam is None:
        lam = fit_growth_constant(space).lambda0 * 1.01
    inner = r <= R + 1 + 1e-12
    A = float(W[inner].max())
    a = float(W[inner].min())
    core = A * np.exp(-3 * lam * (r - R - 1))
    Wt = np.where(inner, core, W)
    factor = (2 * (d + 2) + eta) / (2 * (d + 2) + rho)
    avg = (space.relation.astype(float) @ (W ** s_diff * space.measure)) / space.ball_measure
    Wtp = np.where(inner, core, (factor * avg) ** (1 / s_diff))
    info.update(s_diff=s_diff, rho=rho, R=R, eta=eta, lam=lam, A=A, a=a)
    return Scenario(space, make_weights(Wt, Wtp, X0=x0), info)


# -- pixel domains ----------------------------------------------------------


def square_mask(side: float, pixel: float) -> np.ndarray:
    k = int(round(side / pixel))
    return np.ones((k, k), dtype=bool)


def dumbbell_mask(pixel: float, side: float = 1.0, corridor_width: float = 0.3, corridor_length: float = 0.5) -> np.ndarray:
    """Two ``side x side`` squares joined by a centered corridor."""
    s = int(round(side / pixel))
    c = int(round(corridor_length / pixel))
    w = int(round(corridor_width / pixel))
    m = np.zeros((2 * s + c, s), dtype=bool)
    m[:s] = True
    m[s + c:] = True
    lo = (s - w) // 2
    m[s:s + c, lo:lo + w] = True
    return m


def separated_squares_mask(pixel: float, side: float = 1.0, gap: float = 1.2) -> np.ndarray:
    s = int(round(side / pixel))
    g = int(round(gap / pixel))
    m = np.zeros((2 * s + g, s), dtype=bool)
    m[:s] = True
    m[s + g:] = True
    return m


def make_domain_scenario(pixel_mask, pixel_size: float, c_threshold: float | None = None, *, max_levels: int = 100_000) -> DomainScenario:
    """Layer a pixel domain by ``O_n = {y : m(B_y cap O_{n-1} cap Omega) > c/n}``.

    ``O_1`` is the largest pixel-inscribed disk of radius at most 1/2 (lowest
    index on ties).  ``V`` is the first layer containing a pixel and the
    weights are ``(e^-V, e^-V)`` with ``X0 = O_1``.  When the recursion stalls
    before covering the domain, uncovered pixels get ``V = n_last + 1`` and
    ``covered`` is False.  ``c_threshold`` defaults to the smallest
    ``m(B_y cap O_1)`` over ``y in O_1``.
    """
    from scipy.ndimage import distance_transform_edt

    mask = np.asarray(pixel_mask, dtype=bool)
    if not mask.any():
        raise DomainError("pixel mask is empty")
    if mask.ndim != 2:
        raise DomainError("pixel mask must be 2-d")
    ii, jj = np.nonzero(mask)
    coords = np.stack([(ii + 0.5) * pixel_size, (jj + 0.5) * pixel_size], axis=1)
    n = len(coords)
    if n > MAX_POINTS:
        raise ParameterError("too many pixels")
    area = pixel_size ** 2
    rel = _radius_relation(coords, 1.0, strict=True)
    space = build_space(np.full(n, area), rel, coords=coords)

    padded = np.pad(mask, 1)
    edt = distance_transform_edt(padded)[1:-1, 1:-1]
    depth = (edt[ii, jj] - 0.5) * pixel_size  # distance from pixel center to the domain boundary
    k = int(np.argmax(depth))
    radius = min(0.5, float(depth[k]))
    o1 = np.linalg.norm(coords - coords[k], axis=1) < radius - 1e-12
    o1[k] = True
    relf = rel.astype(float)
    overlap1 = (relf @ o1.astype(float)) * area
    if c_threshold is None:
        c_threshold = float(overlap1[o1].min())
    if not np.all(overlap1[o1] > c_threshold / 2):
        raise ParameterError("c_threshold too large: O_1 is not contained in O_2")

    level = np.where(o1, 1, 0)
    current = o1.copy()
    layers = [int(o1.sum())]
    covered = bool(current.all())
    nlev = 1
    while not covered and nlev < max_levels:
        nlev += 1
        ov = (relf @ current.astype(float)) * area
        if not np.any(ov[~current] > 0):
            break
        nxt = current | (ov > c_threshold / nlev)
        level[nxt & ~current] = nlev
        current = nxt
        layers.append(int(current.sum()))
        covered = bool(current.all())
    n_star = int(level.max())
    if not covered:
        warnings.warn("layer recursion stalled before covering the domain", stacklevel=2)
        level = np.where(current, level, n_star + 1)
    w = np.exp(-level.astype(float))
    weights = make_weights(w, w, X0=o1)
    info = {"kind": "domain", "pixel_size": pixel_size, "c_threshold": c_threshold, "o1_radius": radius,
            "n_star": n_star, "covered": covered}
    return DomainScenario(space, weights, info, n_star=n_star, covered=covered, levels=level, layers=layers)


# -- Boltzmann velocity space -----------------------------------------------


def boltzmann_distance(v, w) -> np.ndarray:
    """``sqrt(|v - w|^2 + (|v|^2 - |w|^2)^2 / 4)`` along the last axis."""
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    nv = np.sum(v * v, axis=-1)
    nw = np.sum(w * w, axis=-1)
    return np.sqrt(np.sum((v - w) ** 2, axis=-1) + 0.25 * (nv - nw) ** 2)


def make_boltzmann_scenario(d: int = 2, L: float = 4.0, h: float = 0.25, alpha: float = 0.0) -> Scenario:
    """Velocity grid with ``U = {d(v, v') <= 1}``.

    ``W = <v>^{alpha+1} e^{-|v|^2}`` sits on the energy side and
    ``W_+ = <v>^alpha e^{-|v|^2}`` on the norm side, so ``W_+ <= W`` here and
    the pair is built with ``ordered=False``.
    """
    if d not in (1, 2, 3):
        raise ParameterError("d must be 1, 2 or 3")
    coords, shape = _grid(d, L, h)
    n = len(coords)
    tree = cKDTree(coords)
    pairs = tree.query_pairs(1.0 + 1e-9, output_type="ndarray")
    dist = boltzmann_distance(coords[pairs[:, 0]], coords[pairs[:, 1]])
    pairs = pairs[dist <= 1.0 + 1e-12]
    i = np.concatenate([pairs[:, 0], pairs[:, 1], np.arange(n)])
    j = np.concatenate([pairs[:, 1], pairs[:, 0], np.arange(n)])
    rel = sp.csr_matrix((np.ones(len(i), dtype=bool), (i, j)), shape=(n, n))
    # truncating velocity space to a cube strands a few corner points; keep the
    # component of the origin so the window does not fake a disconnection
    _, label = connected_components(rel, directed=False)
    keep = label == label[np.argmin(np.sum(coords ** 2, axis=1))]
    dropped = int(n - keep.sum())
    if dropped:
        idx = np.flatnonzero(keep)
        rel = rel[idx][:, idx].tocsr()
        coords = coords[idx]
        n = len(idx)
        shape = None
    space = build_space(np.full(n, h ** d), rel, coords=coords, grid_shape=shape, spacing=h)
    r2 = np.sum(coords ** 2, axis=1)
    bracket = np.sqrt(1 + r2)
    gauss = np.exp(-r2)
    weights = make_weights(bracket ** (alpha + 1) * gauss, bracket ** alpha * gauss, ordered=False)
    info = {"kind": "boltzmann", "d": d, "L": L, "h": h, "alpha": alpha, "dropped_isolated": dropped}
    return Scenario(space, weights, info)
