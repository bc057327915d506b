"""Weight-balanced k-means: LP assignment steps alternating with centroid updates."""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .core import (
    TAU_SITE,
    Assignment,
    ClusterBounds,
    SiteSet,
    WeightedDataset,
    centroids,
    objective_theta,
    point_energy,
    squared_error,
    theta_costs,
)
from .lp_assign import LPSolution, PartitionLP, solve_vertex
from .power_diagram import (
    FeasibilityCertificate,
    PowerDiagram,
    verify_strongly_feasible,
)

log = logging.getLogger(__name__)

INIT_STRATEGIES = ("uniform", "weighted-d2", "given")
CONVERGED = "converged"
ITERATION_CAP = "iteration_cap"


class DescentViolation(RuntimeError):
    """The objective rose between steps of one iteration (debug checks only)."""


@dataclass(frozen=True)
class RunConfig:
    max_iterations: int = 10000
    eps_obj: float = 1e-9
    tau_site: float = TAU_SITE
    seed: int | None = 0
    init: str = "uniform"
    warm_start: bool = True
    check_descent: bool = False
    record_assignments: bool = False

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.eps_obj <= 0 or self.tau_site <= 0:
            raise ValueError("tolerances must be positive")
        if self.init not in INIT_STRATEGIES:
            raise ValueError(f"unknown init strategy {self.init!r}; choose from {INIT_STRATEGIES}")


@dataclass
class IterationRecord:
    iteration: int
    theta: float
    squared_error: float
    n_fractional: int
    sites: np.ndarray
    groups: tuple
    pivots: int
    start: str
    assignment: np.ndarray | None = None

    def to_dict(self, with_assignment: bool = False) -> dict:
        out = {
            "iteration": self.iteration,
            "theta": self.theta,
            "squared_error": self.squared_error,
            "n_fractional": self.n_fractional,
            "sites": None if self.sites is None else self.sites.tolist(),
            "groups": [list(g) for g in self.groups],
            "pivots": self.pivots,
            "lp_start": self.start,
        }
        if with_assignment and self.assignment is not None:
            out["assignment"] = self.assignment.tolist()
        return out


@dataclass
class RunTrace:
    records: list = field(default_factory=list)
    verdict: str = ITERATION_CAP

    @property
    def thetas(self) -> np.ndarray:
        return np.array([r.theta for r in self.records])

    @property
    def iterations(self) -> int:
        return len(self.records)

    def to_dict(self, with_assignments: bool = False) -> dict:
        return {
            "verdict": self.verdict,
            "iterations": self.iterations,
            "records": [r.to_dict(with_assignments) for r in self.records],
        }


@dataclass
class RunResult:
    assignment: Assignment
    centroids: np.ndarray
    sites: SiteSet
    diagram: PowerDiagram
    certificate: FeasibilityCertificate
    trace: RunTrace
    solution: LPSolution
    theta: float
    squared_error: float
    seed: int | None = None

    @property
    def converged(self) -> bool:
        return self.trace.verdict == CONVERGED

    @property
    def merged(self) -> bool:
        return self.sites.merged


# -- the alternation shared by the plain and kernel variants ----------------

class EuclideanGeometry:
    """Sites as explicit points of the data space."""

    def __init__(self, data: WeightedDataset, tau: float):
        self.data = data
        self.tau = tau
        self.energy = point_energy(data)

    def group(self, sites) -> SiteSet:
        return SiteSet(sites, tau=self.tau)

    def costs(self, siteset: SiteSet) -> np.ndarray:
        return theta_costs(self.data, siteset.representatives)

    def update(self, assignment: Assignment, siteset: SiteSet):
        """New per-site positions and the value of the old clustering at them."""
        c = centroids(assignment, self.data)
        return siteset.expand(c), objective_theta(assignment, self.data, c)

    def snapshot(self, siteset: SiteSet):
        return np.array(siteset.sites)


@dataclass
class LoopOutcome:
    solution: LPSolution
    assignment: Assignment
    siteset: SiteSet
    trace: RunTrace


def _regroup(y: np.ndarray, old: tuple, new: tuple) -> np.ndarray:
    out = np.zeros((len(new), y.shape[1]))
    where = {m: gi for gi, g in enumerate(new) for m in g}
    for oi, g in enumerate(old):
        out[where[g[0]]] += y[oi]
    return out


def alternate(geometry, data: WeightedDataset, bounds: ClusterBounds, sites, config: RunConfig) -> LoopOutcome:
    """Run LP assignment and site update until the objective stops falling."""
    bounds.check_feasible(data.total_weight)
    trace = RunTrace()
    prev_sol = None
    prev_theta = np.inf
    mid_theta = None
    for it in range(1, config.max_iterations + 1):
        siteset = geometry.group(sites)
        gb = bounds.merged(siteset.groups)
        lp = PartitionLP(geometry.costs(siteset), data.weights, gb.lower, gb.upper, siteset.groups)
        warm = prev_sol if config.warm_start and prev_sol is not None and prev_sol.groups == siteset.groups else None
        sol = solve_vertex(lp, warm)
        if config.check_descent and mid_theta is not None:
            slack = 1e-9 * max(1.0, abs(prev_theta))
            if mid_theta > prev_theta + slack or sol.theta > mid_theta + slack:
                raise DescentViolation(
                    f"iteration {it}: {prev_theta!r} >= {mid_theta!r} >= {sol.theta!r} fails"
                )
        trace.records.append(IterationRecord(
            iteration=it,
            theta=sol.theta,
            squared_error=sol.theta + geometry.energy,
            n_fractional=sol.n_fractional,
            sites=geometry.snapshot(siteset),
            groups=siteset.groups,
            pivots=sol.pivots,
            start=sol.start,
            assignment=np.array(sol.assignment.y) if config.record_assignments else None,
        ))
        if sol.theta > prev_theta - config.eps_obj:
            trace.verdict = CONVERGED
            final = sol.assignment
            prev_y = _regroup(prev_sol.assignment.y, prev_sol.groups, siteset.groups)
            if np.abs(prev_y - final.y).max() > 1e-9:
                # equal value, different vertex: keep the one whose centroids are these sites
                final = Assignment(prev_y)
            log.debug("converged after %d iterations, theta=%r", it, sol.theta)
            return LoopOutcome(sol, final, siteset, trace)
        prev_sol, prev_theta = sol, sol.theta
        sites, mid_theta = geometry.update(sol.assignment, siteset)
    log.warning("iteration cap %d reached", config.max_iterations)
    return LoopOutcome(sol, sol.assignment, siteset, trace)


# -- public entry points ------------------------------------------------------

def init_sites(data: WeightedDataset, k: int, strategy: str = "uniform", seed=None, sites=None) -> SiteSet:
    """Initial sites.

    ``uniform`` draws ``k`` distinct data points, ``weighted-d2`` samples
    each next site with probability proportional to weight times squared
    distance to the nearest site chosen so far, and ``given`` passes
    ``sites`` through.
    """
    if strategy == "given":
        if sites is None:
            raise ValueError("strategy 'given' needs explicit sites")
        ss = SiteSet(sites)
        if ss.k != k or ss.sites.shape[1] != data.d:
            raise ValueError(f"expected {k} sites of dimension {data.d}")
        return ss
    if k > data.n:
        raise ValueError(f"cannot choose {k} distinct sites from {data.n} points")
    rng = np.random.default_rng(seed)
    if strategy == "uniform":
        idx = rng.choice(data.n, size=k, replace=False)
        return SiteSet(data.points[np.sort(idx)])
    if strategy == "weighted-d2":
        w = data.weights
        chosen = [int(rng.choice(data.n, p=w / w.sum()))]
        d2 = ((data.points - data.points[chosen[0]]) ** 2).sum(axis=1)
        for _ in range(1, k):
            p = w * d2
            if p.sum() <= 0:
                raise ValueError(f"fewer than {k} distinct points")
            j = int(rng.choice(data.n, p=p / p.sum()))
            chosen.append(j)
            d2 = np.minimum(d2, ((data.points - data.points[j]) ** 2).sum(axis=1))
        return SiteSet(data.points[chosen])
    raise ValueError(f"unknown init strategy {strategy!r}")


def run(data: WeightedDataset, bounds: ClusterBounds, sites=None, config: RunConfig | None = None) -> RunResult:
    """Weight-balanced k-means from ``sites`` (or from ``config.init`` when None).

    Returns the last assignment, its centroids as sites, the power diagram
    built from the last LP's duals, its certificate and the full trace.
    Reaching ``config.max_iterations`` is reported in ``trace.verdict``.
    """
    config = config or RunConfig()
    if sites is None:
        sites = init_sites(data, bounds.k, config.init, config.seed)
    ss = sites if isinstance(sites, SiteSet) else SiteSet(sites, tau=config.tau_site)
    if ss.k != bounds.k:
        raise ValueError(f"{ss.k} sites but {bounds.k} cluster bounds")
    geometry = EuclideanGeometry(data, config.tau_site)
    out = alternate(geometry, data, bounds, ss.sites, config)
    c = centroids(out.assignment, data)
    final_sites = SiteSet(out.siteset.expand(c), out.siteset.groups, config.tau_site)
    diagram = PowerDiagram(final_sites, out.solution.cluster_duals)
    cert = verify_strongly_feasible(diagram, out.assignment, data)
    return RunResult(
        assignment=out.assignment,
        centroids=c,
        sites=final_sites,
        diagram=diagram,
        certificate=cert,
        trace=out.trace,
        solution=out.solution,
        theta=objective_theta(out.assignment, data, c),
        squared_error=squared_error(out.assignment, data, c),
        seed=config.seed,
    )


def _run_seed(args):
    data, bounds, config = args
    return run(data, bounds, None, config)


@dataclass
class MultiStartResult:
    best: RunResult
    runs: list

    @property
    def best_index(self) -> int:
        return next(r for r, res in enumerate(self.runs) if res is self.best)


def multi_start(data: WeightedDataset, bounds: ClusterBounds, seeds, config: RunConfig | None = None,
                workers: int = 1) -> MultiStartResult:
    """Independent runs over ``seeds``; the lowest final objective wins, ties to the earlier seed."""
    config = config or RunConfig()
    jobs = [(data, bounds, replace(config, seed=int(s))) for s in seeds]
    if not jobs:
        raise ValueError("multi_start needs at least one seed")
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(_run_seed, jobs))
    else:
        runs = [_run_seed(j) for j in jobs]
    best = min(runs, key=lambda r: r.theta)
    return MultiStartResult(best, runs)


@dataclass
class ClassicalResult:
    assignment: Assignment
    centers: np.ndarray
    history: list
    iterations: int


def classical_kmeans(data: WeightedDataset, sites, seed=None, max_iterations: int = 10000) -> ClassicalResult:
    """Lloyd's algorithm on the unweighted points.

    An empty cluster gets a random data point that is not currently a site.
    ``history`` holds the label vector of every assignment step.
    """
    rng = np.random.default_rng(seed)
    X = data.points
    s = np.array(sites.sites if isinstance(sites, SiteSet) else sites, dtype=float).reshape(-1, data.d)
    k = s.shape[0]
    history = []
    for it in range(1, max_iterations + 1):
        dist = ((X[None, :, :] - s[:, None, :]) ** 2).sum(axis=-1)
        labels = np.argmin(dist, axis=0)
        history.append(labels)
        new = np.empty_like(s)
        for i in range(k):
            members = labels == i
            if members.any():
                new[i] = X[members].mean(axis=0)
            else:
                taken = (X[:, None, :] == np.concatenate([s, new[:i]])[None, :, :]).all(axis=-1).any(axis=1)
                pool = np.flatnonzero(~taken)
                new[i] = X[rng.choice(pool)]
        if np.array_equal(new, s):
            break
        s = new
    return ClassicalResult(Assignment.from_labels(history[-1], k), s, history, len(history))
