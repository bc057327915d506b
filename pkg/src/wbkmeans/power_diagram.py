"""Power diagrams from assignment-LP duals and their feasibility certificates.

Cell ``i`` of a power diagram with sites ``s`` and parameters ``sigma`` is
``{x : |x - s_i|^2 - sigma_i <= |x - s_l|^2 - sigma_l for all l}``.  The
checks here work on a matrix of power distances (groups x points) so the
kernel variant can certify clusterings in feature space with the same code.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from ._unionfind import UnionFind
from .core import TAU_ZERO, Assignment, SiteSet, WeightedDataset

BOUNDARY_TOL = 1e-7
MEMBERSHIP_TOL = 1e-9

FEASIBLE = "feasible"
STRONGLY_FEASIBLE = "strongly_feasible"
INFEASIBLE = "infeasible"


class DiagramError(RuntimeError):
    """Duals did not yield a feasible diagram; ``witness`` is ``(j, i, l)``."""

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


@dataclass(frozen=True)
class PowerDiagram:
    sites: SiteSet
    params: np.ndarray

    def __post_init__(self):
        sigma = np.array(self.params, dtype=float).ravel()
        if sigma.size != self.sites.n_groups:
            raise ValueError(f"{sigma.size} parameters for {self.sites.n_groups} site groups")
        sigma = sigma - sigma[-1]
        sigma.setflags(write=False)
        object.__setattr__(self, "params", sigma)

    def power(self, points) -> np.ndarray:
        """Power distances, shape ``(groups, m)``."""
        pts = np.asarray(points, dtype=float).reshape(-1, self.sites.sites.shape[1])
        reps = self.sites.representatives
        sq = ((pts[None, :, :] - reps[:, None, :]) ** 2).sum(axis=-1)
        return sq - self.params[:, None]


@dataclass(frozen=True)
class FeasibilityCertificate:
    """Verdict on a (diagram, clustering) pair.

    ``witness`` is ``(j, i, l)``: for infeasible, point ``j`` is in the
    support of cluster ``i`` but strictly closer in power distance to site
    ``l``; for a failed strong check it names the offending point and two
    clusters.  ``forest`` lists ``(j, clusters)`` for every point shared by
    two or more clusters when the label-forest condition holds.
    """

    verdict: str
    witness: tuple | None = None
    reason: str = ""
    forest: tuple = field(default=())

    @property
    def feasible(self) -> bool:
        return self.verdict in (FEASIBLE, STRONGLY_FEASIBLE)

    @property
    def strongly_feasible(self) -> bool:
        return self.verdict == STRONGLY_FEASIBLE

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "witness": None if self.witness is None else list(self.witness),
            "reason": self.reason,
            "forest": [{"point": j, "clusters": list(t)} for j, t in self.forest],
        }


def _tolerance(power: np.ndarray, tol: float) -> float:
    return tol * max(1.0, float(np.abs(power).max(initial=0.0)))


def feasibility_from_power(power: np.ndarray, y: np.ndarray, tol: float = BOUNDARY_TOL,
                           tau: float = TAU_ZERO) -> FeasibilityCertificate:
    """Support of every cluster inside its cell, given power distances."""
    slack = _tolerance(power, tol)
    best = power.min(axis=0)
    excess = np.where(y > tau, power - best[None, :], -np.inf)
    i, j = np.unravel_index(np.argmax(excess), excess.shape)
    if excess[i, j] > slack:
        l = int(np.argmin(power[:, j]))
        return FeasibilityCertificate(
            INFEASIBLE, (int(j), int(i), l),
            f"point {j} is assigned to cluster {i} but lies outside its cell (closer to {l})",
        )
    return FeasibilityCertificate(FEASIBLE)


def strong_feasibility_from_power(power: np.ndarray, y: np.ndarray, tol: float = BOUNDARY_TOL,
                                  tau: float = TAU_ZERO) -> FeasibilityCertificate:
    base = feasibility_from_power(power, y, tol, tau)
    if not base.feasible:
        return base
    slack = _tolerance(power, tol)
    g, n = y.shape
    if g > 1:
        # a point strictly inside cell i but absent from cluster i breaks supp(C_i) = P_i ∩ X
        order = np.sort(power, axis=0)
        for j in range(n):
            i = int(np.argmin(power[:, j]))
            if y[i, j] <= tau and power[i, j] < order[1, j] - slack:
                return FeasibilityCertificate(
                    FEASIBLE, (j, i, int(np.argmax(y[:, j]))),
                    f"point {j} lies strictly inside cell {i} but is not in cluster {i}",
                )
    uf = UnionFind(g)
    forest = []
    for j in range(n):
        members = np.flatnonzero(y[:, j] > tau)
        if members.size < 2:
            continue
        for a_pos, a in enumerate(members):
            for b in members[a_pos + 1:]:
                if uf.connected(int(a), int(b)):
                    return FeasibilityCertificate(
                        FEASIBLE, (j, int(a), int(b)),
                        f"point {j} closes a cycle with two or more labels between clusters {a} and {b}",
                    )
        for b in members[1:]:
            uf.union(int(members[0]), int(b))
        forest.append((j, tuple(int(m) for m in members)))
    return FeasibilityCertificate(STRONGLY_FEASIBLE, forest=tuple(forest))


def _power_matrix(diagram: PowerDiagram, assignment: Assignment, data: WeightedDataset):
    if assignment.k != diagram.sites.n_groups:
        raise ValueError(f"assignment has {assignment.k} clusters, diagram {diagram.sites.n_groups} cells")
    if assignment.n != data.n:
        raise ValueError("assignment and dataset sizes differ")
    return diagram.power(data.points)


def verify_feasible(diagram: PowerDiagram, assignment: Assignment, data: WeightedDataset,
                    tol: float = BOUNDARY_TOL) -> FeasibilityCertificate:
    return feasibility_from_power(_power_matrix(diagram, assignment, data), assignment.y, tol)


def verify_strongly_feasible(diagram: PowerDiagram, assignment: Assignment, data: WeightedDataset,
                             tol: float = BOUNDARY_TOL) -> FeasibilityCertificate:
    """Feasibility plus support equality and the label-forest condition.

    Points shared by several clusters are swept in order; each one joins
    its clusters in a union-find structure, and a point whose clusters are
    already connected closes a cycle carrying two different labels.
    Boundary points with zero assignment do not count against support
    equality; only strictly interior ones do.
    """
    return strong_feasibility_from_power(_power_matrix(diagram, assignment, data), assignment.y, tol)


def witness_holds(cert: FeasibilityCertificate, diagram: PowerDiagram, assignment: Assignment,
                  data: WeightedDataset, tol: float = BOUNDARY_TOL) -> bool:
    """Re-check an infeasibility witness against the raw inequality."""
    if cert.verdict != INFEASIBLE or cert.witness is None:
        return False
    j, i, l = cert.witness
    p = diagram.power(data.points[j:j + 1])[:, 0]
    return bool(assignment.y[i, j] > TAU_ZERO and p[i] - p[l] > _tolerance(p, tol))


def sigma_from_duals(solution, data: WeightedDataset, sites) -> PowerDiagram:
    """Diagram whose parameters are the cluster-row duals of an optimal vertex.

    The result is verified before it is returned.
    """
    if not isinstance(sites, SiteSet):
        sites = SiteSet(sites)
    if solution.groups is not None and tuple(solution.groups) != sites.groups:
        sites = SiteSet(sites.sites, solution.groups, sites.tau)
    diagram = PowerDiagram(sites, solution.cluster_duals)
    cert = verify_feasible(diagram, solution.assignment, data)
    if not cert.feasible:
        raise DiagramError(f"duals give an infeasible diagram: {cert.reason}", cert.witness)
    return diagram


def sigma_feasibility_from_power(dist: np.ndarray, y: np.ndarray, slack: float = BOUNDARY_TOL,
                                 tau: float = TAU_ZERO):
    """Parameters making ``y`` feasible for squared distances ``dist``, or None.

    Maximizes a margin ``t <= 0`` subject to
    ``sigma_l - sigma_i + t <= dist[l, j] - dist[i, j]`` for ``j`` in the
    support of cluster ``i``, with ``sigma`` of the last group fixed to 0.
    The system is feasible when the best margin is within ``slack``.
    """
    g = dist.shape[0]
    if g == 1:
        return np.zeros(1)
    tol = _tolerance(dist, slack)
    rows, rhs = [], []
    for i in range(g):
        supp = np.flatnonzero(y[i] > tau)
        if supp.size == 0:
            continue
        for l in range(g):
            if l == i:
                continue
            row = np.zeros(g + 1)
            row[l], row[i], row[g] = 1.0, -1.0, 1.0
            rows.append(row)
            rhs.append(float((dist[l, supp] - dist[i, supp]).min()))
    if not rows:
        return np.zeros(g)
    bounds = [(None, None)] * (g - 1) + [(0.0, 0.0), (None, 0.0)]
    cost = np.zeros(g + 1)
    cost[g] = -1.0
    res = linprog(cost, A_ub=np.array(rows), b_ub=np.array(rhs), bounds=bounds, method="highs",
                  options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10})
    if res.status != 0:
        raise RuntimeError(f"feasibility LP failed: {res.message}")
    if res.x[g] < -tol:
        return None
    return res.x[:g]


def sigma_feasibility_lp(assignment: Assignment, data: WeightedDataset, sites):
    """Independent search for a feasible diagram; None when none exists."""
    if not isinstance(sites, SiteSet):
        sites = SiteSet(sites)
    if assignment.k != sites.n_groups:
        raise ValueError("assignment rows must match site groups")
    reps = sites.representatives
    dist = ((data.points[None, :, :] - reps[:, None, :]) ** 2).sum(axis=-1)
    sigma = sigma_feasibility_from_power(dist, assignment.y)
    return None if sigma is None else PowerDiagram(sites, sigma)


def cell_membership(diagram: PowerDiagram, point, tol: float = MEMBERSHIP_TOL) -> set[int]:
    """Groups whose cells contain ``point``."""
    p = diagram.power(np.asarray(point, dtype=float).reshape(1, -1))[:, 0]
    return set(np.flatnonzero(p <= p.min() + tol).tolist())
