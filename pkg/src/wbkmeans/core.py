"""Data model for weighted partial-membership clusterings.

A clustering of ``n`` weighted points into ``k`` clusters is stored as a
``k x n`` matrix ``y`` whose entry ``y[i, j]`` is the fraction of point
``j``'s weight that belongs to cluster ``i``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ._unionfind import UnionFind

TAU_ZERO = 1e-9
TAU_SITE = 1e-9
SUM_TOL = 1e-9


class InfeasibleBoundsError(ValueError):
    """Cluster size bounds admit no weight-balanced clustering."""


class EmptyClusterError(ValueError):
    """A cluster with zero total weight has no center of gravity."""


def _frozen(a, dtype=float):
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class WeightedDataset:
    """Distinct points with strictly positive weights.

    ``points`` is an ``(n, d)`` array; 1-D input is read as ``n`` points on a line.
    """

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] == 0 or pts.shape[1] == 0:
            raise ValueError(f"points must be a non-empty (n, d) array, got shape {pts.shape}")
        w = np.asarray(self.weights, dtype=float).ravel()
        if w.shape[0] != pts.shape[0]:
            raise ValueError(f"{pts.shape[0]} points but {w.shape[0]} weights")
        if not np.all(np.isfinite(pts)) or not np.all(np.isfinite(w)):
            raise ValueError("points and weights must be finite")
        bad = np.flatnonzero(w <= 0)
        if bad.size:
            raise ValueError(f"weight of point {bad[0]} is {w[bad[0]]}; weights must be positive")
        dup = duplicate_pair(pts)
        if dup is not None:
            raise ValueError(
                f"points {dup[0]} and {dup[1]} coincide; merge them into one point "
                "carrying the summed weight"
            )
        object.__setattr__(self, "points", _frozen(pts))
        object.__setattr__(self, "weights", _frozen(w))

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    @property
    def total_weight(self) -> float:
        return float(self.weights.sum())

    @classmethod
    def unweighted(cls, points) -> "WeightedDataset":
        pts = np.asarray(points, dtype=float)
        return cls(pts, np.ones(pts.shape[0]))


def duplicate_pair(points: np.ndarray):
    """First pair of exactly equal rows as ``(j, l)`` with ``j < l``, else None."""
    _, first, inverse = np.unique(points, axis=0, return_index=True, return_inverse=True)
    inverse = np.asarray(inverse).ravel()
    for l, u in enumerate(inverse):
        if first[u] != l:
            return int(first[u]), l
    return None


@dataclass(frozen=True)
class ClusterBounds:
    """Per-cluster lower and upper bounds on the cluster weight."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float).ravel()
        hi = np.asarray(self.upper, dtype=float).ravel()
        if lo.shape != hi.shape or lo.size == 0:
            raise ValueError("lower and upper bounds must be non-empty and equally long")
        if np.any(lo <= 0):
            raise ValueError("lower bounds must be positive")
        if np.any(lo > hi):
            i = int(np.flatnonzero(lo > hi)[0])
            raise ValueError(f"cluster {i}: lower bound {lo[i]} exceeds upper bound {hi[i]}")
        object.__setattr__(self, "lower", _frozen(lo))
        object.__setattr__(self, "upper", _frozen(hi))

    @property
    def k(self) -> int:
        return self.lower.size

    @classmethod
    def balanced(cls, total_weight: float, k: int, slack: float = 0.0) -> "ClusterBounds":
        """Bounds ``(1 -/+ slack) * total_weight / k`` for every cluster."""
        if not 0.0 <= slack < 1.0:
            raise ValueError("slack must lie in [0, 1)")
        mean = total_weight / k
        return cls(np.full(k, (1.0 - slack) * mean), np.full(k, (1.0 + slack) * mean))

    def check_feasible(self, total_weight: float) -> None:
        lo, hi = float(self.lower.sum()), float(self.upper.sum())
        scale = max(1.0, abs(total_weight))
        if lo > total_weight + SUM_TOL * scale or total_weight > hi + SUM_TOL * scale:
            raise InfeasibleBoundsError(
                f"bounds violate Σκ⁻ ≤ Σω ≤ Σκ⁺: {lo:.12g} ≤ {total_weight:.12g} ≤ {hi:.12g} fails"
            )

    def merged(self, groups: Sequence[Sequence[int]]) -> "ClusterBounds":
        """Bounds of site groups: member bounds are summed."""
        return ClusterBounds(
            [self.lower[list(g)].sum() for g in groups],
            [self.upper[list(g)].sum() for g in groups],
        )


@dataclass(frozen=True)
class Assignment:
    """Partial-membership matrix ``y`` of shape ``(k, n)`` with unit column sums."""

    y: np.ndarray

    def __post_init__(self):
        y = np.array(self.y, dtype=float)
        if y.ndim != 2:
            raise ValueError("assignment matrix must be 2-D (clusters x points)")
        if np.any(y < -SUM_TOL) or np.any(y > 1 + SUM_TOL):
            raise ValueError("assignment entries must lie in [0, 1]")
        cols = y.sum(axis=0)
        bad = np.flatnonzero(np.abs(cols - 1.0) > SUM_TOL)
        if bad.size:
            raise ValueError(f"point {bad[0]} is assigned a total fraction of {cols[bad[0]]!r}")
        np.clip(y, 0.0, 1.0, out=y)
        object.__setattr__(self, "y", _frozen(y))

    @property
    def k(self) -> int:
        return self.y.shape[0]

    @property
    def n(self) -> int:
        return self.y.shape[1]

    @classmethod
    def from_labels(cls, labels, k: int) -> "Assignment":
        labels = np.asarray(labels, dtype=int)
        y = np.zeros((k, labels.size))
        y[labels, np.arange(labels.size)] = 1.0
        return cls(y)

    def supports(self, tau: float = TAU_ZERO) -> list[np.ndarray]:
        return [np.flatnonzero(row > tau) for row in self.y]

    def fractional_entries(self, tau: float = TAU_ZERO) -> list[tuple[int, int]]:
        i, j = np.nonzero((self.y > tau) & (self.y < 1.0 - tau))
        return list(zip(i.tolist(), j.tolist()))

    def n_fractional(self, tau: float = TAU_ZERO) -> int:
        return int(np.count_nonzero((self.y > tau) & (self.y < 1.0 - tau)))

    def labels(self) -> np.ndarray:
        """Cluster holding the largest fraction of each point."""
        return np.argmax(self.y, axis=0)


@dataclass(frozen=True)
class SiteSet:
    """Sites with coincident ones collected into groups.

    Groups are the transitive closure of pairwise coincidence within
    ``tau``; each group is served by a single merged cluster whose site is
    the group's first member.
    """

    sites: np.ndarray
    groups: tuple = field(default=None)
    tau: float = TAU_SITE

    def __post_init__(self):
        s = np.asarray(self.sites, dtype=float)
        if s.ndim == 1:
            s = s[:, None]
        object.__setattr__(self, "sites", _frozen(s))
        groups = self.groups
        if groups is None:
            groups = group_coincident(s, self.tau)
        groups = tuple(tuple(int(i) for i in g) for g in groups)
        flat = sorted(i for g in groups for i in g)
        if flat != list(range(s.shape[0])):
            raise ValueError("site groups must partition the site indices")
        object.__setattr__(self, "groups", groups)

    @property
    def k(self) -> int:
        return self.sites.shape[0]

    @property
    def n_groups(self) -> int:
        return len(self.groups)

    @property
    def merged(self) -> bool:
        return any(len(g) > 1 for g in self.groups)

    @property
    def representatives(self) -> np.ndarray:
        return self.sites[[g[0] for g in self.groups]]

    def expand(self, group_values: np.ndarray) -> np.ndarray:
        """Broadcast one row per group back to one row per site."""
        out = np.empty((self.k,) + np.shape(group_values)[1:])
        for gi, g in enumerate(self.groups):
            out[list(g)] = group_values[gi]
        return out


def group_coincident(sites: np.ndarray, tau: float = TAU_SITE) -> list[tuple[int, ...]]:
    """Transitive closure of ``||s_i - s_l|| <= tau``."""
    k = sites.shape[0]
    uf = UnionFind(k)
    diff = sites[:, None, :] - sites[None, :, :]
    close = np.sqrt((diff ** 2).sum(axis=-1)) <= tau
    for i, l in zip(*np.nonzero(np.triu(close, 1))):
        uf.union(int(i), int(l))
    return uf.groups()


def _check_dims(assignment: Assignment, data: WeightedDataset):
    if assignment.n != data.n:
        raise ValueError(f"assignment covers {assignment.n} points, dataset has {data.n}")


def _site_array(sites, k: int, d: int) -> np.ndarray:
    if isinstance(sites, SiteSet):
        s = sites.representatives if sites.n_groups == k else sites.sites
    else:
        s = np.asarray(sites, dtype=float)
        if s.ndim == 1:
            s = s[:, None]
    if s.shape != (k, d):
        raise ValueError(f"expected {k} sites of dimension {d}, got shape {s.shape}")
    return s


def shape(assignment: Assignment, data: WeightedDataset) -> np.ndarray:
    """Cluster sizes ``|C_i| = sum_j y_ij w_j``."""
    _check_dims(assignment, data)
    return assignment.y @ data.weights


def centroid(assignment: Assignment, data: WeightedDataset, cluster: int) -> np.ndarray:
    _check_dims(assignment, data)
    mass = assignment.y[cluster] * data.weights
    total = mass.sum()
    if total <= 0:
        raise EmptyClusterError(f"cluster {cluster} has zero weight")
    return mass @ data.points / total


def centroids(assignment: Assignment, data: WeightedDataset) -> np.ndarray:
    """Centers of gravity of all clusters, shape ``(k, d)``."""
    _check_dims(assignment, data)
    mass = assignment.y * data.weights
    total = mass.sum(axis=1)
    if np.any(total <= 0):
        raise EmptyClusterError(f"cluster {int(np.argmin(total))} has zero weight")
    return (mass @ data.points) / total[:, None]


def theta_costs(data: WeightedDataset, sites: np.ndarray) -> np.ndarray:
    """Per-entry costs ``w_j (s_i's_i - 2 x_j's_i)`` as a ``(k, n)`` matrix."""
    sq = (sites ** 2).sum(axis=1)
    return data.weights[None, :] * (sq[:, None] - 2.0 * sites @ data.points.T)


def objective_theta(assignment: Assignment, data: WeightedDataset, sites) -> float:
    """Least-squares value with the site-independent term dropped.

    Adding :func:`point_energy` recovers :func:`squared_error`.
    """
    _check_dims(assignment, data)
    s = _site_array(sites, assignment.k, data.d)
    return float((assignment.y * theta_costs(data, s)).sum())


def squared_error(assignment: Assignment, data: WeightedDataset, sites) -> float:
    _check_dims(assignment, data)
    s = _site_array(sites, assignment.k, data.d)
    dist = ((data.points[None, :, :] - s[:, None, :]) ** 2).sum(axis=-1)
    return float((assignment.y * data.weights[None, :] * dist).sum())


def point_energy(data: WeightedDataset) -> float:
    """``sum_j w_j x_j'x_j``, the gap between squared error and theta."""
    return float(data.weights @ (data.points ** 2).sum(axis=1))
