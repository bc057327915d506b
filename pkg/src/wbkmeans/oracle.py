"""Brute-force references for tiny instances.

Nothing here shares code with the simplex: vertices are found by trying
every candidate basis of the standard-form system, integral clusterings by
trying every label vector.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .core import Assignment, ClusterBounds, SiteSet, WeightedDataset, point_energy

MAX_VARIABLES = 12
MAX_INTEGRAL = 60000
TOL = 1e-9


class OracleInfeasible(ValueError):
    pass


@dataclass(frozen=True)
class TinyInstance:
    data: WeightedDataset
    bounds: ClusterBounds
    sites: SiteSet

    def __post_init__(self):
        if not isinstance(self.sites, SiteSet):
            object.__setattr__(self, "sites", SiteSet(self.sites))
        if self.sites.k != self.bounds.k:
            raise ValueError("site count and bound count differ")
        if self.sites.n_groups * self.data.n > MAX_VARIABLES:
            raise ValueError(
                f"k*n = {self.sites.n_groups * self.data.n} exceeds the oracle cap of {MAX_VARIABLES}"
            )

    @property
    def group_bounds(self) -> ClusterBounds:
        return self.bounds.merged(self.sites.groups)

    def distance_costs(self) -> np.ndarray:
        """``w_j |x_j - s_i|^2`` per group and point."""
        reps = self.sites.representatives
        diff = self.data.points[None, :, :] - reps[:, None, :]
        return self.data.weights[None, :] * (diff ** 2).sum(axis=-1)


@dataclass
class VertexEnumeration:
    squared_error: float
    theta: float
    optimal: list
    n_vertices: int


def _check(inst: TinyInstance):
    total = inst.data.total_weight
    gb = inst.group_bounds
    if gb.lower.sum() > total + TOL or total > gb.upper.sum() + TOL:
        raise OracleInfeasible(
            f"Σκ⁻ ≤ Σω ≤ Σκ⁺ fails: {gb.lower.sum():g} ≤ {total:g} ≤ {gb.upper.sum():g}"
        )


def enumerate_vertices(inst: TinyInstance) -> list[np.ndarray]:
    """All vertices of the partition polytope as ``(k, n)`` matrices."""
    _check(inst)
    data, gb = inst.data, inst.group_bounds
    k, n = gb.k, data.n
    nv, m = k * n, k + n
    A = np.zeros((m, nv + k))
    for i in range(k):
        for j in range(n):
            A[i, i * n + j] = data.weights[j]
            A[k + j, i * n + j] = 1.0
        A[i, nv + i] = -1.0
    b = np.concatenate([gb.lower, np.ones(n)])
    room = gb.upper - gb.lower
    combos = np.array(list(itertools.combinations(range(nv + k), m)))
    mats = A[:, combos].transpose(1, 0, 2)
    dets = np.linalg.det(mats)
    keep = np.abs(dets) > 1e-12
    combos, mats = combos[keep], mats[keep]
    inverses = np.linalg.inv(mats)
    patterns = np.array(list(itertools.product((0.0, 1.0), repeat=k))) * room[None, :]
    patterns = np.unique(patterns, axis=0)
    x_n = np.zeros((patterns.shape[0], nv + k))
    x_n[:, nv:] = patterns
    rhs = b[None, :] - x_n @ A.T
    xb = np.einsum("bij,pj->bpi", inverses, rhs)
    in_basis = np.zeros((combos.shape[0], nv + k), dtype=bool)
    np.put_along_axis(in_basis, combos, True, axis=1)
    # an upper-bound pattern only makes sense on nonbasic slacks
    clash = (in_basis[:, None, nv:] & (patterns[None, :, :] > 0)).any(axis=2)
    x = np.broadcast_to(x_n, (combos.shape[0],) + x_n.shape).copy()
    rows = np.arange(combos.shape[0])[:, None, None]
    x[rows, np.arange(patterns.shape[0])[None, :, None], combos[:, None, :]] = xb
    ok = ~clash & np.all(x >= -TOL, axis=2) & np.all(x[:, :, nv:] <= room + TOL, axis=2)
    ys = np.clip(x[ok][:, :nv], 0.0, 1.0)
    # vertices closer than 1e-9 are one vertex; snap to a grid before hashing
    _, first = np.unique(np.round(ys / TOL).astype(np.int64), axis=0, return_index=True)
    unique = [ys[i].reshape(k, n) for i in sorted(first)]
    return unique


def enumerate_optimal_vertices(inst: TinyInstance) -> VertexEnumeration:
    """Optimal LP value and every optimal vertex, by exhaustive basis enumeration."""
    vertices = enumerate_vertices(inst)
    if not vertices:
        raise OracleInfeasible("no vertex found")
    cost = inst.distance_costs()
    values = np.array([(cost * y).sum() for y in vertices])
    best = float(values.min())
    optimal = [Assignment(y) for y, v in zip(vertices, values) if v <= best + TOL]
    return VertexEnumeration(best, best - point_energy(inst.data), optimal, len(vertices))


@dataclass
class IntegralOptimum:
    assignment: Assignment
    squared_error: float


def brute_force_integral(inst: TinyInstance) -> IntegralOptimum | None:
    """Best balanced 0/1 clustering, or None when no integral one is balanced."""
    gb = inst.group_bounds
    k, n = gb.k, inst.data.n
    if k ** n > MAX_INTEGRAL:
        raise ValueError(f"{k}^{n} integral assignments exceed the cap of {MAX_INTEGRAL}")
    labels = np.array(list(itertools.product(range(k), repeat=n)))
    w = inst.data.weights
    loads = np.stack([(labels == i) @ w for i in range(k)], axis=1)
    ok = np.all((loads >= gb.lower - TOL) & (loads <= gb.upper + TOL), axis=1)
    if not ok.any():
        return None
    cost = inst.distance_costs()
    values = cost[labels, np.arange(n)].sum(axis=1)
    values[~ok] = np.inf
    best = int(np.argmin(values))
    return IntegralOptimum(Assignment.from_labels(labels[best], k), float(values[best]))


def polynomial_feature_map(points, degree: int, offset: float) -> np.ndarray:
    """Explicit map with ``phi(u)'phi(v) = (u'v + offset)^degree`` for degree 1 or 2."""
    X = np.asarray(points, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    d = X.shape[1]
    if degree == 1:
        return np.hstack([X, np.full((X.shape[0], 1), np.sqrt(offset))])
    if degree != 2:
        raise ValueError("explicit map implemented for degree 1 and 2 only")
    cols = []
    for a in range(d):
        for b in range(a, d):
            f = 1.0 if a == b else np.sqrt(2.0)
            cols.append(f * X[:, a] * X[:, b])
    cols.extend(np.sqrt(2.0 * offset) * X[:, a] for a in range(d))
    cols.append(np.full(X.shape[0], float(offset)))
    return np.column_stack(cols)
