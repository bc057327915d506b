"""Weight-balanced least-squares assignment as a linear program.

The assignment LP

    min  sum_ij c_ij y_ij
    s.t. lower_i <= sum_j w_j y_ij <= upper_i      (clusters / site groups)
         sum_i y_ij = 1                            (points)
         y_ij >= 0

is solved by a bounded-variable revised simplex that always stops at a
vertex and reports a basis and duals.  Internally the solver works with
``z_ij = w_j y_ij``: the constraint matrix then has entries in ``{0, 1, -1}``
and every basis is a spanning tree of the bipartite cluster/point graph
plus at least one range slack, which keeps the basis inverse integral.

Each cluster row is a single range row ``sum_j z_ij - t_i = lower_i`` with
slack ``0 <= t_i <= upper_i - lower_i``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .core import (
    TAU_SITE,
    TAU_ZERO,
    Assignment,
    ClusterBounds,
    SiteSet,
    WeightedDataset,
    theta_costs,
)

log = logging.getLogger(__name__)

PIVOT_TOL = 1e-10
FEAS_TOL = 1e-9
OPT_TOL = 1e-9
BLAND_AFTER = 50
REFACTOR_EVERY = 64


class LPNumericalError(RuntimeError):
    """The simplex lost feasibility or failed to converge.

    ``basis`` holds the last basis (variable indices) for diagnosis.
    """

    def __init__(self, message, basis=None):
        super().__init__(message)
        self.basis = None if basis is None else tuple(int(b) for b in basis)


class TieError(ValueError):
    """A point is equidistant to two nearest sites."""


@dataclass(frozen=True)
class PartitionLP:
    """Assignment LP over the weight-balanced partition polytope.

    ``costs`` is the ``(g, n)`` matrix of coefficients of ``y_ij``, one row
    per site group; ``lower``/``upper`` are the group bounds.
    """

    costs: np.ndarray
    weights: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    groups: tuple = None

    def __post_init__(self):
        c = np.array(self.costs, dtype=float)
        w = np.array(self.weights, dtype=float)
        lo = np.array(self.lower, dtype=float)
        hi = np.array(self.upper, dtype=float)
        if c.shape != (lo.size, w.size) or lo.shape != hi.shape:
            raise ValueError("inconsistent LP dimensions")
        if np.any(w <= 0):
            raise ValueError("weights must be positive")
        for a in (c, w, lo, hi):
            a.setflags(write=False)
        object.__setattr__(self, "costs", c)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        if self.groups is None:
            object.__setattr__(self, "groups", tuple((i,) for i in range(lo.size)))

    @property
    def k(self) -> int:
        return self.costs.shape[0]

    @property
    def n(self) -> int:
        return self.costs.shape[1]

    @property
    def n_variables(self) -> int:
        return self.k * self.n

    def describe_variable(self, index: int):
        """``("y", i, j)`` for assignment variables, ``("slack", i)`` for range slacks."""
        if index < self.k * self.n:
            return ("y", index // self.n, index % self.n)
        return ("slack", index - self.k * self.n)

    def reduced_costs(self, cluster_duals, point_duals) -> np.ndarray:
        """Reduced costs of the ``y_ij`` under the given duals."""
        return self.costs - self.weights[None, :] * cluster_duals[:, None] - point_duals[None, :]


@dataclass(frozen=True)
class LPSolution:
    """Optimal vertex of a :class:`PartitionLP`.

    ``cluster_duals`` are the multipliers of the range rows: positive when
    the lower bound binds, negative when the upper bound binds.
    ``point_duals`` belong to the ``sum_i y_ij = 1`` rows.
    """

    assignment: Assignment
    basis: tuple
    at_upper: frozenset
    cluster_duals: np.ndarray
    point_duals: np.ndarray
    theta: float
    pivots: int
    start: str
    groups: tuple = None

    @property
    def n_fractional(self) -> int:
        return self.assignment.n_fractional()


def build_lp(data: WeightedDataset, sites, bounds: ClusterBounds, tau_site: float = TAU_SITE) -> PartitionLP:
    """Assignment LP for ``sites`` with coincident sites merged into groups."""
    if not isinstance(sites, SiteSet):
        sites = SiteSet(sites, tau=tau_site)
    if sites.k != bounds.k:
        raise ValueError(f"{sites.k} sites but {bounds.k} cluster bounds")
    if sites.sites.shape[1] != data.d:
        raise ValueError("site dimension differs from data dimension")
    bounds.check_feasible(data.total_weight)
    gb = bounds.merged(sites.groups)
    costs = theta_costs(data, sites.representatives)
    return PartitionLP(costs, data.weights, gb.lower, gb.upper, sites.groups)


class _Simplex:
    """Dense bounded-variable revised simplex on the scaled LP."""

    def __init__(self, lp: PartitionLP):
        g, n = lp.k, lp.n
        self.g, self.n, self.m = g, n, g + n
        self.nz = g * n
        nvar = self.nz + g
        A = np.zeros((self.m, nvar))
        idx = np.arange(self.nz)
        A[idx // n, idx] = 1.0
        A[g + idx % n, idx] = 1.0
        A[np.arange(g), self.nz + np.arange(g)] = -1.0
        self.A = A
        self.b = np.concatenate([lp.lower, lp.weights])
        self.lb = np.zeros(nvar)
        self.ub = np.concatenate([np.full(self.nz, np.inf), lp.upper - lp.lower])
        self.ub[self.ub < 0] = 0.0
        self.cost = np.concatenate([(lp.costs / lp.weights[None, :]).ravel(), np.zeros(g)])
        self.scale = max(1.0, float(np.abs(self.cost).max(initial=0.0)), float(np.abs(self.b).max()))
        self.x = np.zeros(nvar)
        self.basis = None
        self.binv = None
        self.pivots = 0

    # -- basis bookkeeping ------------------------------------------------
    def add_columns(self, cols):
        """Append artificial columns; returns their indices."""
        start = self.A.shape[1]
        self.A = np.hstack([self.A, cols])
        k = cols.shape[1]
        self.lb = np.concatenate([self.lb, np.zeros(k)])
        self.ub = np.concatenate([self.ub, np.full(k, np.inf)])
        self.cost = np.concatenate([self.cost, np.zeros(k)])
        self.x = np.concatenate([self.x, np.zeros(k)])
        return np.arange(start, start + k)

    def set_basis(self, basis, nonbasic_values):
        """Install a basis; nonbasic variables take ``nonbasic_values``."""
        self.basis = np.asarray(basis, dtype=int)
        self.x = np.array(nonbasic_values, dtype=float)
        self.refactor()

    def refactor(self):
        B = self.A[:, self.basis]
        try:
            self.binv = np.linalg.inv(B)
        except np.linalg.LinAlgError as exc:
            raise LPNumericalError("singular basis", self.basis) from exc
        self.is_basic = np.zeros(self.A.shape[1], dtype=bool)
        self.is_basic[self.basis] = True
        nb = ~self.is_basic
        self.x[self.basis] = 0.0
        rhs = self.b - self.A[:, nb] @ self.x[nb]
        self.x[self.basis] = self.binv @ rhs

    def drive_out(self, pos, forbidden):
        """Degenerate pivot replacing the basic variable at ``pos``."""
        row = self.binv[pos] @ self.A
        row[self.is_basic] = 0.0
        row[forbidden] = 0.0
        q = int(np.argmax(np.abs(row)))
        if abs(row[q]) <= PIVOT_TOL:
            raise LPNumericalError("cannot remove artificial column from the basis", self.basis)
        self.is_basic[self.basis[pos]] = False
        self.basis[pos] = q
        self.refactor()

    def primal_infeasibility(self) -> float:
        xb = self.x[self.basis]
        lo = self.lb[self.basis] - xb
        hi = xb - self.ub[self.basis]
        return float(max(lo.max(initial=0.0), hi.max(initial=0.0)))

    def duals(self, cost):
        return cost[self.basis] @ self.binv

    # -- iterations -------------------------------------------------------
    def optimize(self, cost, max_pivots):
        tol_d = OPT_TOL * max(1.0, float(np.abs(cost).max(initial=0.0)))
        tol_x = FEAS_TOL * self.scale
        stall = 0
        bland = False
        since_refactor = 0
        fixed = self.ub - self.lb <= 0.0
        while True:
            if self.pivots >= max_pivots:
                raise LPNumericalError(f"no optimum after {self.pivots} pivots", self.basis)
            pi = self.duals(cost)
            d = cost - pi @ self.A
            at_upper = (~self.is_basic) & (self.x >= self.ub - tol_x) & np.isfinite(self.ub)
            can_up = (~self.is_basic) & (~fixed) & (~at_upper) & (d < -tol_d)
            can_down = (~self.is_basic) & (~fixed) & at_upper & (d > tol_d)
            eligible = np.flatnonzero(can_up | can_down)
            if eligible.size == 0:
                return
            if bland:
                q = int(eligible[0])
            else:
                q = int(eligible[np.argmax(np.abs(d[eligible]))])
            direction = 1.0 if can_up[q] else -1.0

            w = self.binv @ self.A[:, q]
            dw = direction * w
            xb = self.x[self.basis]
            lbb, ubb = self.lb[self.basis], self.ub[self.basis]
            theta = self.ub[q] - self.lb[q]
            leave, leave_to = -1, 0.0
            with np.errstate(divide="ignore", invalid="ignore"):
                dec = dw > PIVOT_TOL
                inc = (dw < -PIVOT_TOL) & np.isfinite(ubb)
                ratios = np.full(self.m, np.inf)
                ratios[dec] = (xb[dec] - lbb[dec]) / dw[dec]
                ratios[inc] = (ubb[inc] - xb[inc]) / (-dw[inc])
            ratios = np.maximum(ratios, 0.0)
            rmin = ratios.min(initial=np.inf)
            if rmin < theta:
                ties = np.flatnonzero(ratios <= rmin + tol_x)
                if bland:
                    p = int(ties[np.argmin(self.basis[ties])])
                else:
                    p = int(ties[np.argmax(np.abs(w[ties]))])
                theta = ratios[p]
                leave = p
                leave_to = lbb[p] if dec[p] else ubb[p]
            if not np.isfinite(theta):
                raise LPNumericalError("unbounded direction in a bounded polytope", self.basis)

            self.x[q] += direction * theta
            self.x[self.basis] -= theta * dw
            self.pivots += 1
            if leave >= 0:
                out = self.basis[leave]
                self.x[out] = leave_to
                self.basis[leave] = q
                self.is_basic[out] = False
                self.is_basic[q] = True
                piv = w[leave]
                row = self.binv[leave] / piv
                self.binv -= np.outer(w, row)
                self.binv[leave] = row
                since_refactor += 1
                if since_refactor >= REFACTOR_EVERY:
                    self.refactor()
                    since_refactor = 0
            if theta <= tol_x:
                stall += 1
                if stall >= BLAND_AFTER:
                    bland = True
            else:
                stall = 0
                bland = False


def _greedy_start(lp: PartitionLP, sx: _Simplex):
    """Least-cost transportation start: a spanning tree plus one slack.

    Cluster targets start at the lower bounds; the surplus weight fills
    clusters up to their upper bounds one at a time, so at most one slack
    sits strictly inside its range.
    """
    g, n = lp.k, lp.n
    room = lp.upper - lp.lower
    surplus = float(lp.weights.sum() - lp.lower.sum())
    target = lp.lower.copy()
    slack_value = np.zeros(g)
    free_slack = g - 1
    for i in np.argsort(lp.costs.mean(axis=1), kind="stable"):
        add = min(max(surplus, 0.0), room[i])
        target[i] += add
        slack_value[i] = add
        surplus -= add
        if 0.0 < add < room[i]:
            free_slack = int(i)
    supply = lp.weights.copy()
    demand = target.copy()
    tol = 1e-12 * max(1.0, float(lp.weights.sum()))
    cost = lp.costs / lp.weights[None, :]
    point_open = np.ones(n, dtype=bool)
    cluster_open = np.ones(g, dtype=bool)
    cells = []
    for flat in np.argsort(cost, axis=None, kind="stable"):
        if len(cells) == n + g - 1:
            break
        i, j = divmod(int(flat), n)
        if not (point_open[j] and cluster_open[i]):
            continue
        a = min(supply[j], demand[i])
        cells.append(i * n + j)
        supply[j] -= a
        demand[i] -= a
        point_done = supply[j] <= tol
        cluster_done = demand[i] <= tol
        if point_done and cluster_done:
            supply[j] = demand[i] = 0.0
        if point_done and point_open.sum() > 1:
            point_open[j] = False
        elif cluster_done and cluster_open.sum() > 1:
            cluster_open[i] = False
        else:
            point_open[j] = False
    if len(cells) != n + g - 1:
        return False
    basis = cells + [sx.nz + free_slack]
    values = np.zeros(sx.A.shape[1])
    values[sx.nz:sx.nz + g] = slack_value
    sx.set_basis(basis, values)
    return sx.primal_infeasibility() <= FEAS_TOL * sx.scale


def _warm(lp: PartitionLP, sx: _Simplex, warm: LPSolution):
    if len(warm.basis) != sx.m or warm.assignment.y.shape != (lp.k, lp.n):
        return False
    values = np.zeros(sx.A.shape[1])
    for v in warm.at_upper:
        values[v] = sx.ub[v]
    try:
        sx.set_basis(list(warm.basis), values)
    except LPNumericalError:
        return False
    return sx.primal_infeasibility() <= FEAS_TOL * sx.scale


def _artificial_start(lp: PartitionLP, sx: _Simplex, max_pivots: int):
    """Phase one with artificial columns on the violated range rows."""
    g, n = lp.k, lp.n
    cost = lp.costs / lp.weights[None, :]
    nearest = np.argmin(cost, axis=0)
    load = np.bincount(nearest, weights=lp.weights, minlength=g)
    values = np.zeros(sx.A.shape[1])
    basis = [int(nearest[j]) * n + j for j in range(n)]
    art_cols = []
    for i in range(g):
        over = load[i] - lp.lower[i]
        if 0.0 <= over <= sx.ub[sx.nz + i]:
            basis.append(sx.nz + i)
            continue
        col = np.zeros(sx.m)
        if over < 0.0:
            col[i] = 1.0
        else:
            col[i] = -1.0
            values[sx.nz + i] = sx.ub[sx.nz + i]
        art_cols.append(col)
    arts = np.array([], dtype=int)
    if art_cols:
        arts = sx.add_columns(np.array(art_cols).T)
        values = np.concatenate([values, np.zeros(arts.size)])
        basis.extend(arts.tolist())
    sx.set_basis(basis, values)
    if arts.size:
        phase1 = np.zeros(sx.A.shape[1])
        phase1[arts] = 1.0
        sx.optimize(phase1, max_pivots)
        if sx.x[arts].sum() > FEAS_TOL * sx.scale:
            raise LPNumericalError("assignment LP is infeasible", sx.basis)
        for a in arts:
            pos = np.flatnonzero(sx.basis == a)
            if pos.size:
                sx.drive_out(int(pos[0]), arts)
        sx.x[arts] = 0.0
        sx.ub[arts] = 0.0
        sx.refactor()


def solve_vertex(lp: PartitionLP, warm_start: LPSolution | None = None, crash: bool = True) -> LPSolution:
    """Optimal basic feasible solution of ``lp`` with duals.

    A feasible ``warm_start`` basis is reused as the starting vertex.  With
    ``crash=False`` the greedy start is skipped and phase one runs on
    artificial columns.
    """
    if lp.lower.sum() > lp.weights.sum() * (1 + FEAS_TOL) or lp.weights.sum() > lp.upper.sum() * (1 + FEAS_TOL):
        raise LPNumericalError("assignment LP is infeasible: Σκ⁻ ≤ Σω ≤ Σκ⁺ fails")
    sx = _Simplex(lp)
    max_pivots = 50 * (sx.m + sx.A.shape[1]) + 1000
    start = None
    if warm_start is not None and _warm(lp, sx, warm_start):
        start = "warm"
    if start is None and crash:
        try:
            if _greedy_start(lp, sx):
                start = "greedy"
        except LPNumericalError:
            pass
    if start is None:
        sx = _Simplex(lp)
        _artificial_start(lp, sx, max_pivots)
        start = "artificial"
    phase1_pivots = sx.pivots
    sx.optimize(sx.cost, max_pivots)
    sx.refactor()
    if sx.primal_infeasibility() > 1e3 * FEAS_TOL * sx.scale:
        raise LPNumericalError(
            f"final basis infeasible by {sx.primal_infeasibility():.3g}", sx.basis
        )
    log.debug("LP solved: start=%s phase1=%d pivots=%d", start, phase1_pivots, sx.pivots)
    return _extract(lp, sx, start)


def _extract(lp: PartitionLP, sx: _Simplex, start: str) -> LPSolution:
    g, n = lp.k, lp.n
    z = sx.x[: sx.nz].reshape(g, n).copy()
    z[np.abs(z) <= FEAS_TOL * sx.scale] = 0.0
    y = np.clip(z / lp.weights[None, :], 0.0, 1.0)
    y /= y.sum(axis=0, keepdims=True)
    pi = sx.duals(sx.cost)
    nvar = sx.nz + g
    basis = tuple(int(b) for b in sx.basis if b < nvar)
    if len(basis) != sx.m:
        raise LPNumericalError("artificial column left in the final basis", sx.basis)
    slack_idx = np.arange(sx.nz, nvar)
    upper = frozenset(
        int(v) for v in slack_idx
        if not sx.is_basic[v] and sx.ub[v] > 0 and sx.x[v] >= sx.ub[v] - FEAS_TOL * sx.scale
    )
    assignment = Assignment(y)
    theta = float((lp.costs * assignment.y).sum())
    return LPSolution(
        assignment=assignment,
        basis=basis,
        at_upper=upper,
        cluster_duals=pi[:g].copy(),
        point_duals=pi[g:] * lp.weights,
        theta=theta,
        pivots=sx.pivots,
        start=start,
        groups=lp.groups,
    )


def weight_balanced_assignment(data, sites, bounds, warm_start=None) -> LPSolution:
    """Build and solve the assignment LP in one call."""
    return solve_vertex(build_lp(data, sites, bounds), warm_start)


def unconstrained_reduction_check(data: WeightedDataset, sites, tie_tol: float = 1e-9) -> Assignment:
    """Nearest-site assignment, the inactive-bounds limit of the LP."""
    s = np.asarray(sites.sites if isinstance(sites, SiteSet) else sites, dtype=float)
    if s.ndim == 1:
        s = s[:, None]
    dist = ((data.points[None, :, :] - s[:, None, :]) ** 2).sum(axis=-1)
    order = np.sort(dist, axis=0)
    if s.shape[0] > 1:
        gap = order[1] - order[0]
        tied = np.flatnonzero(gap <= tie_tol * np.maximum(1.0, order[1]))
        if tied.size:
            raise TieError(f"point {tied[0]} is equidistant to two nearest sites")
    return Assignment.from_labels(np.argmin(dist, axis=0), s.shape[0])


def complementary_slackness_gap(lp: PartitionLP, sol: LPSolution, tau: float = TAU_ZERO) -> float:
    """Largest ``|reduced cost|`` over entries with ``y_ij > tau``."""
    rc = lp.reduced_costs(sol.cluster_duals, sol.point_duals)
    mask = sol.assignment.y > tau
    return float(np.abs(rc[mask]).max(initial=0.0))
