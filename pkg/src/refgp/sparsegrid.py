"""Adaptive sparse-grid interpolation on nested Chebyshev-Gauss-Lobatto nodes.

Level ``i`` holds ``X^0 = {0.5}`` and ``X^i = {(1 - cos(pi j / 2^i)) / 2}``
for ``j = 0..2^i`` when ``i >= 1``, so ``X^i`` is contained in ``X^(i+1)``.
A node is stored by its level and its position ``j`` in the sorted ``X^i``.

The grid is grown greedily: the fringe subgrid holding the node with the
largest error is accepted, and its forward neighbours are expanded once all
of their backward neighbours have been accepted.  Within an expanded
subgrid only *active* nodes are evaluated, i.e. nodes adjacent to a parent
whose error exceeds the cutoff ``tau``.
"""
from __future__ import annotations

import itertools
import json
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import ConfigError

__all__ = [
    "level_size",
    "cgl_nodes",
    "delta_positions",
    "basis_matrix",
    "basis_eval",
    "Subgrid",
    "SparseGrid",
    "WeightFunction",
    "approximate",
    "is_active",
    "is_point_neighbor",
    "evaluate",
    "dim_weights",
    "quadrature_weights",
]

logger = logging.getLogger(__name__)

MAX_LEVEL = 24


def level_size(i):
    """Number of nodes in ``X^i``."""
    if i < 0:
        raise ConfigError("level must be nonnegative")
    return 1 if i == 0 else 2**i + 1


@lru_cache(maxsize=None)
def _nodes(i):
    if i == 0:
        x = np.array([0.5])
    else:
        j = np.arange(level_size(i))
        x = 0.5 * (1.0 - np.cos(np.pi * j / 2**i))
        # exact endpoints and midpoint, and exact symmetry about 1/2
        half = 2 ** (i - 1)
        x[0], x[half] = 0.0, 0.5
        x[half + 1:] = 1.0 - x[:half][::-1]
    x.setflags(write=False)
    return x


def cgl_nodes(i):
    """Sorted nodes of level ``i`` on ``[0, 1]``."""
    level_size(i)
    return _nodes(i).copy()


@lru_cache(maxsize=None)
def _delta_positions(i):
    if i == 0:
        pos = np.array([0])
    elif i == 1:
        pos = np.array([0, 2])
    else:
        pos = np.arange(1, level_size(i), 2)
    pos.setflags(write=False)
    return pos


def delta_positions(i):
    """Positions in ``X^i`` of the nodes new at level ``i``."""
    return _delta_positions(i).copy()


@lru_cache(maxsize=None)
def _bary_weights(i):
    m = level_size(i)
    if m == 1:
        w = np.ones(1)
    else:
        w = (-1.0) ** np.arange(m)
        w[0] *= 0.5
        w[-1] *= 0.5
    w.setflags(write=False)
    return w


_BLOCK_ELEMENTS = 1 << 22


def _bary_denominator(i, x):
    """Barycentric denominators at ``x`` and the node each ``x`` hits exactly (or -1)."""
    nodes, w = _nodes(i), _bary_weights(i)
    denom = np.empty(x.size)
    hit = np.full(x.size, -1)
    step = max(1, _BLOCK_ELEMENTS // nodes.size)
    for a in range(0, x.size, step):
        diff = x[a:a + step, None] - nodes[None, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            denom[a:a + step] = (w / diff).sum(axis=1)
        rows, cols = np.nonzero(diff == 0.0)
        hit[a + rows] = cols
    return denom, hit


def basis_columns(i, x, cols, pre=None):
    """Cardinal polynomials ``psi_j^i`` for ``j`` in ``cols`` at points ``x``.

    ``pre`` is the result of ``_bary_denominator(i, x)`` when already known.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    cols = np.asarray(cols, dtype=int)
    if level_size(i) == 1:
        return np.ones((x.size, cols.size))
    denom, hit = pre if pre is not None else _bary_denominator(i, x)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (_bary_weights(i)[cols] / (x[:, None] - _nodes(i)[cols][None, :])) / denom[:, None]
    rows = hit >= 0
    if rows.any():
        out[rows] = (hit[rows, None] == cols[None, :]).astype(float)
    return out


def basis_matrix(i, x):
    """Values of all cardinal polynomials of level ``i`` at points ``x``.

    Returns an array of shape ``(len(x), level_size(i))`` computed with the
    barycentric formula; rows at nodes are exact unit vectors.
    """
    return basis_columns(i, x, np.arange(level_size(i)))


def basis_eval(i, j, x):
    """Cardinal polynomial ``psi_j^i`` evaluated at ``x``."""
    if not 0 <= j < level_size(i):
        raise ConfigError(f"no node {j} at level {i}")
    out = basis_matrix(i, x)[:, j]
    return out if np.ndim(x) else float(out[0])


@dataclass
class Subgrid:
    """Evaluated refinement nodes of one multi-index.

    ``positions`` has one row per evaluated node, giving its position in
    the full level of each dimension.
    """

    index: tuple
    positions: np.ndarray
    points: np.ndarray
    values: np.ndarray
    surpluses: np.ndarray
    errors: np.ndarray

    @property
    def size(self):
        return len(self.values)


@dataclass
class SparseGrid:
    dim: int
    tol: float
    tau: float
    subgrids: list = field(default_factory=list)
    fringe: dict = field(default_factory=dict)
    evaluations: int = 0
    budget_exceeded: bool = False

    @property
    def accepted(self):
        return {sg.index: sg for sg in self.subgrids}

    @property
    def nodes(self):
        """Accepted nodes in acceptance order."""
        if not self.subgrids:
            return np.empty((0, self.dim))
        return np.vstack([sg.points for sg in self.subgrids])

    @property
    def values(self):
        return np.concatenate([sg.values for sg in self.subgrids]) if self.subgrids else np.empty(0)

    @property
    def surpluses(self):
        return np.concatenate([sg.surpluses for sg in self.subgrids]) if self.subgrids else np.empty(0)

    @property
    def errors(self):
        return np.concatenate([sg.errors for sg in self.subgrids]) if self.subgrids else np.empty(0)

    @property
    def n_nodes(self):
        return sum(sg.size for sg in self.subgrids)

    def __call__(self, x):
        return evaluate(self, x)

    def to_records(self):
        """Flat list of accepted nodes: multi-index, coordinates, surplus, error."""
        out = []
        for sg in self.subgrids:
            for pos, pt, z, e, y in zip(sg.positions, sg.points, sg.surpluses, sg.errors, sg.values):
                out.append({
                    "index": [int(v) for v in sg.index],
                    "position": [int(v) for v in pos],
                    "node": [float(v) for v in pt],
                    "value": float(y),
                    "surplus": float(z),
                    "error": float(e),
                })
        return out

    def to_json(self, **kwargs):
        doc = {
            "dim": self.dim,
            "tol": self.tol,
            "tau": self.tau,
            "n_nodes": self.n_nodes,
            "budget_exceeded": self.budget_exceeded,
            "records": self.to_records(),
        }
        return json.dumps(doc, **kwargs)


def _denominators(k, lev, x, cache):
    key = (k, lev)
    if cache is None:
        return _bary_denominator(lev, x) if level_size(lev) > 1 else None
    if key not in cache:
        cache[key] = _bary_denominator(lev, x) if level_size(lev) > 1 else None
    return cache[key]


def _tensor_basis(index, positions, x, cache=None):
    """Matrix ``psi_j^i(x)`` for rows ``x`` and columns given by ``positions``."""
    out = np.ones((x.shape[0], positions.shape[0]))
    for k, lev in enumerate(index):
        out *= basis_columns(lev, x[:, k], positions[:, k], _denominators(k, lev, x[:, k], cache))
    return out


_EVAL_CHUNK = 2048


def evaluate(grid, x):
    """Sparse-grid interpolant at ``x`` (a point or an ``(m, d)`` array)."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = np.atleast_2d(x)
    if pts.shape[1] != grid.dim:
        raise ConfigError(f"expected points of dimension {grid.dim}")
    # chunked so the basis blocks stay bounded on fine grids
    res = np.concatenate([_evaluate_block(grid, pts[i:i + _EVAL_CHUNK])
                          for i in range(0, pts.shape[0], _EVAL_CHUNK)] or [np.zeros(0)])
    return float(res[0]) if single else res


def _evaluate_block(grid, pts):
    res = np.zeros(pts.shape[0])
    cache = {}
    for sg in grid.subgrids:
        if not sg.size:
            continue
        if grid.dim == 2 and pts.shape[0] >= 64:
            # dense coefficient block: sum_ab C_ab psi_a(x1) psi_b(x2) via one matrix product
            B, inv = [], []
            for k, lev in enumerate(sg.index):
                cols, where = np.unique(sg.positions[:, k], return_inverse=True)
                pre = _denominators(k, lev, pts[:, k], cache)
                B.append(basis_columns(lev, pts[:, k], cols, pre))
                inv.append(where.ravel())
            C = np.zeros((B[0].shape[1], B[1].shape[1]))
            C[inv[0], inv[1]] = sg.surpluses
            res += np.einsum("ij,ij->i", B[0] @ C, B[1])
        else:
            res += _tensor_basis(sg.index, sg.positions, pts, cache) @ sg.surpluses
    return res


def is_point_neighbor(i, j, j_new, k):
    """Whether refinement ``j_new`` of level ``i + e_k`` neighbours node ``j`` of ``i``.

    ``j`` and ``j_new`` are position tuples within the full levels; the
    other coordinates must coincide, and along ``k`` the refinement must
    fall in an interval of ``X^(i_k)`` adjacent to the parent node.
    """
    for kk in range(len(i)):
        if kk != k and j[kk] != j_new[kk]:
            return False
    if i[k] <= 1:
        return True
    xs = _nodes(i[k])
    x_new = _nodes(i[k] + 1)[j_new[k]]
    jk = j[k]
    left = jk > 0 and xs[jk - 1] < x_new < xs[jk]
    right = jk + 1 < xs.size and xs[jk] < x_new < xs[jk + 1]
    return bool(left or right)


def is_active(grid, i, j):
    """Whether refinement node ``j`` of subgrid ``i`` has a parent with error above ``tau``."""
    accepted = grid.accepted
    for k in range(len(i)):
        if i[k] == 0:
            continue
        ib = tuple(i[kk] - (kk == k) for kk in range(len(i)))
        parent = accepted.get(ib)
        if parent is None:
            continue
        for jb, e in zip(parent.positions, parent.errors):
            if e > grid.tau and is_point_neighbor(ib, tuple(jb), j, k):
                return True
    return False


def _children(ib, jb, k, index):
    """Refinement positions of ``index = ib + e_k`` that neighbour parent node ``jb``.

    Equivalent to filtering with :func:`is_point_neighbor`: below level 2 every
    refinement along ``k`` qualifies; above it the new node at odd position
    ``2m +- 1`` of ``X^(i+1)`` lies next to parent position ``m``.
    """
    if ib[k] <= 1:
        along = _delta_positions(index[k])
    else:
        m = int(jb[k])
        along = [q for q in (2 * m - 1, 2 * m + 1) if 0 < q < level_size(index[k])]
    base = [int(v) for v in jb]
    out = []
    for q in along:
        base[k] = int(q)
        out.append(tuple(base))
    return out


def _expand(grid, f, ferr, index, accepted):
    """Evaluate active refinement nodes of ``index`` against the accepted grid."""
    root = all(v == 0 for v in index)
    candidates = itertools.product(*[_delta_positions(lev) for lev in index])
    if root:
        keep = [tuple(int(v) for v in j) for j in candidates]
    else:
        # children of parents whose error exceeds tau
        active = set()
        for k in range(grid.dim):
            if index[k] == 0:
                continue
            ib = tuple(index[kk] - (kk == k) for kk in range(grid.dim))
            parent = accepted[ib]
            for jb in parent.positions[parent.errors > grid.tau]:
                active.update(_children(ib, jb, k, index))
        keep = [j for j in (tuple(int(v) for v in c) for c in candidates) if j in active]
    positions = np.array(keep, dtype=int).reshape(-1, grid.dim)
    points = np.column_stack([_nodes(lev)[positions[:, k]] for k, lev in enumerate(index)]) \
        if len(keep) else np.empty((0, grid.dim))
    values = np.array([f(p) for p in points], dtype=float)
    if np.any(~np.isfinite(values)):
        raise ConfigError("target function returned a non-finite value on the grid")
    approx = evaluate(grid, points) if len(keep) else np.empty(0)
    surpluses = values - approx
    errors = np.array([ferr(y, yt, p) for y, yt, p in zip(values, approx, points)], dtype=float)
    grid.evaluations += len(keep)
    return Subgrid(tuple(index), positions, points, values, surpluses, errors)


def approximate(f, ferr=None, tol=1e-4, tau=None, dim=2, max_nodes=20000):
    """Greedy dimension- and locality-adaptive interpolation of ``f`` on ``[0, 1]^dim``.

    Parameters
    ----------
    f : callable
        Target, called with a single point of shape ``(dim,)``.
    ferr : callable, optional
        ``ferr(y, y_approx, x)`` giving the error attached to a node.
        Defaults to ``|y - y_approx|``.
    tol : float
        Stop once every fringe node error is below ``tol``.
    tau : float, optional
        Cutoff marking a node's neighbours active; defaults to ``tol``.
    max_nodes : int
        Evaluation budget; when reached the accepted grid is returned with
        ``budget_exceeded`` set.
    """
    if not tol > 0:
        raise ConfigError("tol must be positive")
    if ferr is None:
        def ferr(y, yt, x):
            return abs(y - yt)
    tau = tol if tau is None else tau
    grid = SparseGrid(dim=dim, tol=tol, tau=tau)
    root = (0,) * dim
    grid.fringe[root] = _expand(grid, f, ferr, root, {})
    while True:
        best, best_key = None, None
        for idx, sg in grid.fringe.items():
            for e, pos in zip(sg.errors, sg.positions):
                key = (-e, sum(idx), idx, tuple(int(v) for v in pos))
                if best_key is None or key < best_key:
                    best_key, best = key, idx
        # the root is always accepted so the interpolant is never empty
        if best is None or (-best_key[0] < tol and grid.subgrids):
            return grid
        sg = grid.fringe.pop(best)
        grid.subgrids.append(sg)
        accepted = grid.accepted
        for k in range(dim):
            fwd = tuple(best[kk] + (kk == k) for kk in range(dim))
            if fwd in accepted or fwd in grid.fringe:
                continue
            if max(fwd) > MAX_LEVEL:
                continue
            back = [tuple(fwd[kk] - (kk == k2) for kk in range(dim)) for k2 in range(dim) if fwd[k2] > 0]
            if all(b in accepted for b in back):
                if grid.evaluations >= max_nodes:
                    grid.budget_exceeded = True
                    logger.warning("sparse grid: node budget of %d reached", max_nodes)
                    return grid
                grid.fringe[fwd] = _expand(grid, f, ferr, fwd, accepted)


@dataclass(frozen=True)
class WeightFunction:
    """Piecewise polynomial weight ``omega`` on ``[0, 1]``.

    ``fn`` must be a polynomial of degree at most ``degree`` between
    consecutive ``breaks``; Gauss-Legendre rules are then exact.
    """

    fn: object
    degree: int = 0
    breaks: tuple = (0.0, 1.0)

    @staticmethod
    def one():
        return WeightFunction(lambda x: np.ones_like(np.asarray(x, dtype=float)), 0)


def _basis_integrals(level, omega):
    """``int_0^1 psi_j^level(x) omega(x) dx`` for every position ``j``."""
    deg_psi = level_size(level) - 1
    npts = math.ceil((deg_psi + omega.degree + 1) / 2)
    t, wt = np.polynomial.legendre.leggauss(max(npts, 1))
    total = np.zeros(level_size(level))
    for lo, hi in zip(omega.breaks[:-1], omega.breaks[1:]):
        x = 0.5 * (hi - lo) * t + 0.5 * (hi + lo)
        wx = 0.5 * (hi - lo) * wt * np.asarray(omega.fn(x), dtype=float)
        step = max(1, _BLOCK_ELEMENTS // level_size(level))
        for a in range(0, x.size, step):
            total += wx[a:a + step] @ basis_matrix(level, x[a:a + step])
    return total


def _check_omegas(grid, omegas):
    if omegas is None:
        omegas = [WeightFunction.one()] * grid.dim
    if len(omegas) != grid.dim:
        raise ConfigError("need one weight function per dimension")
    return omegas


def dim_weights(grid, omegas=None):
    """Integrals of the tensor basis functions of accepted nodes.

    Entry ``a`` is ``prod_k int_0^1 psi_{j_k}^{i_k}(x) omega_k(x) dx`` for the
    ``a``-th accepted node, so ``sum_a surplus_a * B_a`` integrates the
    interpolant against ``omega_1 ... omega_d``.
    """
    omegas = _check_omegas(grid, omegas)
    cache = {}
    parts = []
    for sg in grid.subgrids:
        b = np.ones(sg.size)
        for k, lev in enumerate(sg.index):
            if (k, lev) not in cache:
                cache[(k, lev)] = _basis_integrals(lev, omegas[k])
            b *= cache[(k, lev)][sg.positions[:, k]]
        parts.append(b)
    return np.concatenate(parts) if parts else np.empty(0)


def quadrature_weights(grid, omegas=None):
    """Nodal weights ``W`` with ``sum_a W_a f(x_a) = int interp(f) omega``.

    The accepted nodes, taken in acceptance order, give a unit lower
    triangular evaluation matrix ``M[a, b] = psi_b(x_a)``; ``W`` solves
    ``M' W = B`` by block back substitution over subgrids.
    """
    B = dim_weights(grid, omegas)
    sizes = [sg.size for sg in grid.subgrids]
    starts = np.concatenate([[0], np.cumsum(sizes)]).astype(int)
    W = B.copy()
    for a in range(len(grid.subgrids) - 1, -1, -1):
        sa = grid.subgrids[a]
        if not sa.size:
            continue
        acc = np.zeros(sa.size)
        for c in range(a + 1, len(grid.subgrids)):
            sc = grid.subgrids[c]
            if not sc.size or any(ia > ic for ia, ic in zip(sa.index, sc.index)):
                continue
            Mca = _tensor_basis(sa.index, sa.positions, sc.points)
            acc += Mca.T @ W[starts[c]:starts[c + 1]]
        W[starts[a]:starts[a + 1]] -= acc
    return W
