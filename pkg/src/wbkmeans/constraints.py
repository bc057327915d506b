"""Must-link constraints by merging linked points into weighted averages.

Linked points must receive identical assignment fractions.  Each group of
linked points is replaced by its weighted mean carrying the summed weight;
a clustering of the reduced data expands back by copying the group's
column to every member.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._unionfind import UnionFind
from .core import Assignment, WeightedDataset


@dataclass(frozen=True)
class MustLinkGroups:
    """Disjoint groups of at least two point indices each."""

    groups: tuple
    n: int

    def __post_init__(self):
        groups = tuple(tuple(sorted(int(i) for i in g)) for g in self.groups)
        seen = set()
        for g in groups:
            if len(g) < 2:
                raise ValueError(f"must-link group {g} has fewer than two points")
            if len(set(g)) != len(g):
                raise ValueError(f"must-link group {g} repeats a point")
            for i in g:
                if not 0 <= i < self.n:
                    raise ValueError(f"point index {i} out of range for {self.n} points")
                if i in seen:
                    raise ValueError(f"point {i} appears in two must-link groups")
                seen.add(i)
        object.__setattr__(self, "groups", tuple(sorted(groups)))

    @classmethod
    def from_pairs(cls, pairs, n: int) -> "MustLinkGroups":
        """Transitive closure of pairwise must-link declarations."""
        uf = UnionFind(n)
        for a, b in pairs:
            a, b = int(a), int(b)
            if not (0 <= a < n and 0 <= b < n):
                raise ValueError(f"must-link pair ({a}, {b}) out of range for {n} points")
            if a == b:
                raise ValueError(f"must-link pair ({a}, {b}) links a point to itself")
            uf.union(a, b)
        return cls(tuple(g for g in uf.groups() if len(g) > 1), n)

    def pairs(self):
        for g in self.groups:
            for a in g:
                for b in g:
                    if a < b:
                        yield a, b


def merge_must_link(data: WeightedDataset, groups: MustLinkGroups):
    """Reduced dataset and the map ``original index -> reduced index``.

    A merged point that lands exactly on another point absorbs it as well.
    """
    if groups.n != data.n:
        raise ValueError(f"groups refer to {groups.n} points, dataset has {data.n}")
    owner = np.arange(data.n)
    for g in groups.groups:
        owner[list(g)] = g[0]
    blocks = {}
    for j in range(data.n):
        blocks.setdefault(int(owner[j]), []).append(j)
    coords, weights, members = {}, {}, {}
    order = []
    for first in sorted(blocks):
        idx = blocks[first]
        w = data.weights[idx]
        total = float(w.sum())
        x = data.points[idx].T @ w / total if len(idx) > 1 else data.points[idx[0]]
        key = tuple(np.asarray(x, dtype=float).tolist())
        if key not in coords:
            coords[key] = np.asarray(x, dtype=float)
            weights[key] = 0.0
            members[key] = []
            order.append(key)
        weights[key] += total
        members[key].extend(idx)
    mapping = np.empty(data.n, dtype=int)
    for r, key in enumerate(order):
        mapping[members[key]] = r
    reduced = WeightedDataset(np.array([coords[k] for k in order]), np.array([weights[k] for k in order]))
    return reduced, mapping


def expand_assignment(reduced_assignment: Assignment, mapping) -> Assignment:
    mapping = np.asarray(mapping, dtype=int)
    if mapping.size and (mapping.min() < 0 or mapping.max() >= reduced_assignment.n):
        raise ValueError("mapping refers to points outside the reduced assignment")
    return Assignment(reduced_assignment.y[:, mapping])


def within_group_dispersion(data: WeightedDataset, reduced: WeightedDataset, mapping) -> float:
    """``sum_j w_j |x_j - x_I(j)|^2``: the clustering-independent squared-error offset."""
    diff = data.points - reduced.points[np.asarray(mapping)]
    return float(data.weights @ (diff ** 2).sum(axis=1))
