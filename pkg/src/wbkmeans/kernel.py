"""Kernelized weight-balanced k-means.

Sites live in the feature space of a kernel.  After the first update every
site is a convex combination of mapped data points, stored as a
coefficient vector over the data; only Gram-matrix entries are ever needed.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._unionfind import UnionFind
from .balanced_kmeans import RunConfig, RunTrace, alternate, init_sites
from .core import Assignment, ClusterBounds, WeightedDataset
from .power_diagram import FeasibilityCertificate, strong_feasibility_from_power

KERNELS = ("linear", "polynomial", "gaussian")


@dataclass(frozen=True)
class KernelFunction:
    """``linear``: u'v; ``polynomial``: (u'v + offset)^degree;
    ``gaussian``: exp(-|u - v|^2 / (2 bandwidth^2))."""

    kind: str
    degree: int | None = None
    offset: float | None = None
    bandwidth: float | None = None

    def __post_init__(self):
        if self.kind not in KERNELS:
            raise ValueError(f"unknown kernel {self.kind!r}; choose from {KERNELS}")
        if self.kind == "polynomial":
            if self.degree is None or self.offset is None:
                raise ValueError("polynomial kernel needs degree and offset")
            if int(self.degree) != self.degree or self.degree < 1 or self.offset < 0:
                raise ValueError("polynomial kernel needs integer degree >= 1 and offset >= 0")
        if self.kind == "gaussian" and (self.bandwidth is None or self.bandwidth <= 0):
            raise ValueError("gaussian kernel needs a positive bandwidth")

    def __call__(self, U, V) -> np.ndarray:
        U = np.atleast_2d(np.asarray(U, dtype=float))
        V = np.atleast_2d(np.asarray(V, dtype=float))
        if self.kind == "linear":
            return U @ V.T
        if self.kind == "polynomial":
            return (U @ V.T + self.offset) ** int(self.degree)
        sq = (U ** 2).sum(1)[:, None] + (V ** 2).sum(1)[None, :] - 2.0 * U @ V.T
        return np.exp(-np.maximum(sq, 0.0) / (2.0 * self.bandwidth ** 2))

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        if self.kind == "polynomial":
            out.update(degree=int(self.degree), offset=float(self.offset))
        if self.kind == "gaussian":
            out.update(bandwidth=float(self.bandwidth))
        return out


def linear_kernel() -> KernelFunction:
    return KernelFunction("linear")


def polynomial_kernel(degree: int, offset: float) -> KernelFunction:
    return KernelFunction("polynomial", degree=degree, offset=offset)


def gaussian_kernel(bandwidth: float) -> KernelFunction:
    return KernelFunction("gaussian", bandwidth=bandwidth)


@dataclass(frozen=True)
class ImplicitSite:
    """A site given either as a data-space ``point`` or as convex ``coef`` over the data."""

    point: np.ndarray | None = None
    coef: np.ndarray | None = None

    def __post_init__(self):
        if (self.point is None) == (self.coef is None):
            raise ValueError("give exactly one of point or coef")
        if self.coef is not None:
            a = np.array(self.coef, dtype=float).ravel()
            if np.any(a < -1e-12) or abs(a.sum() - 1.0) > 1e-9:
                raise ValueError("site coefficients must be non-negative and sum to 1")
            a.setflags(write=False)
            object.__setattr__(self, "coef", a)
        else:
            p = np.array(self.point, dtype=float).ravel()
            p.setflags(write=False)
            object.__setattr__(self, "point", p)

    @classmethod
    def from_index(cls, j: int, n: int) -> "ImplicitSite":
        a = np.zeros(n)
        a[j] = 1.0
        return cls(coef=a)


def _cross(sites, data: WeightedDataset, kernel: KernelFunction, gram: np.ndarray) -> np.ndarray:
    """``Phi(s_i, x_j)`` as a ``(k, n)`` matrix."""
    rows = []
    for s in sites:
        if s.coef is not None:
            rows.append(gram @ s.coef)
        else:
            rows.append(kernel(s.point[None, :], data.points)[0])
    return np.array(rows)


def _site_products(sites, cross: np.ndarray, kernel: KernelFunction) -> np.ndarray:
    k = len(sites)
    M = np.empty((k, k))
    for i, si in enumerate(sites):
        for l, sl in enumerate(sites):
            if sl.coef is not None:
                M[i, l] = cross[i] @ sl.coef
            elif si.coef is not None:
                M[i, l] = cross[l] @ si.coef
            else:
                M[i, l] = kernel(si.point[None, :], sl.point[None, :])[0, 0]
    return M


def kernel_lp_costs(data: WeightedDataset, sites, kernel: KernelFunction, gram=None) -> np.ndarray:
    """Costs ``w_j (Phi(s_i, s_i) - 2 Phi(x_j, s_i))`` of the kernel assignment LP."""
    gram = kernel(data.points, data.points) if gram is None else gram
    cross = _cross(sites, data, kernel, gram)
    self_products = np.diag(_site_products(sites, cross, kernel))
    return data.weights[None, :] * (self_products[:, None] - 2.0 * cross)


@dataclass(frozen=True)
class KernelSiteSet:
    sites: tuple
    groups: tuple

    @property
    def representatives(self) -> list:
        return [self.sites[g[0]] for g in self.groups]

    @property
    def merged(self) -> bool:
        return any(len(g) > 1 for g in self.groups)

    def expand(self, group_sites) -> list:
        out = [None] * len(self.sites)
        for gi, g in enumerate(self.groups):
            for m in g:
                out[m] = group_sites[gi]
        return out


class KernelGeometry:
    def __init__(self, data: WeightedDataset, kernel: KernelFunction, tau: float):
        self.data = data
        self.kernel = kernel
        self.tau = tau
        self.gram = kernel(data.points, data.points)
        self.energy = float(data.weights @ np.diag(self.gram))

    def group(self, sites) -> KernelSiteSet:
        cross = _cross(sites, self.data, self.kernel, self.gram)
        M = _site_products(sites, cross, self.kernel)
        diag = np.diag(M)
        dist2 = diag[:, None] + diag[None, :] - 2.0 * M
        uf = UnionFind(len(sites))
        for i, l in zip(*np.nonzero(np.triu(dist2 <= self.tau ** 2, 1))):
            uf.union(int(i), int(l))
        return KernelSiteSet(tuple(sites), tuple(uf.groups()))

    def costs(self, ks: KernelSiteSet) -> np.ndarray:
        return kernel_lp_costs(self.data, ks.representatives, self.kernel, self.gram)

    def coefficients(self, assignment: Assignment) -> np.ndarray:
        mass = assignment.y * self.data.weights[None, :]
        return mass / mass.sum(axis=1, keepdims=True)

    def theta_at(self, assignment: Assignment, alpha: np.ndarray) -> float:
        cross = alpha @ self.gram
        self_products = np.einsum("in,in->i", cross, alpha)
        c = self.data.weights[None, :] * (self_products[:, None] - 2.0 * cross)
        return float((assignment.y * c).sum())

    def update(self, assignment: Assignment, ks: KernelSiteSet):
        alpha = self.coefficients(assignment)
        new = [ImplicitSite(coef=a) for a in alpha]
        return ks.expand(new), self.theta_at(assignment, alpha)

    def snapshot(self, ks):
        return None


@dataclass
class KernelRunResult:
    assignment: Assignment
    coefficients: np.ndarray
    groups: tuple
    sigma: np.ndarray
    certificate: FeasibilityCertificate
    trace: RunTrace
    theta: float
    squared_error: float
    kernel: KernelFunction


def as_implicit_sites(initial_sites, data: WeightedDataset) -> list:
    """Normalize explicit points, data indices or ImplicitSite lists."""
    if isinstance(initial_sites, (list, tuple)) and initial_sites and isinstance(initial_sites[0], ImplicitSite):
        return list(initial_sites)
    arr = np.asarray(getattr(initial_sites, "sites", initial_sites))
    if arr.ndim == 1 and np.issubdtype(arr.dtype, np.integer):
        return [ImplicitSite.from_index(int(j), data.n) for j in arr]
    arr = np.asarray(arr, dtype=float).reshape(-1, data.d)
    return [ImplicitSite(point=p) for p in arr]


def kernel_run(data: WeightedDataset, bounds: ClusterBounds, initial_sites, kernel: KernelFunction,
               config: RunConfig | None = None) -> KernelRunResult:
    """Weight-balanced k-means in the feature space of ``kernel``."""
    config = config or RunConfig()
    if initial_sites is None:
        initial_sites = init_sites(data, bounds.k, config.init, config.seed)
    sites = as_implicit_sites(initial_sites, data)
    if len(sites) != bounds.k:
        raise ValueError(f"{len(sites)} sites but {bounds.k} cluster bounds")
    geometry = KernelGeometry(data, kernel, config.tau_site)
    out = alternate(geometry, data, bounds, sites, config)
    alpha = geometry.coefficients(out.assignment)
    sigma = out.solution.cluster_duals - out.solution.cluster_duals[-1]
    cross = alpha @ geometry.gram
    self_products = np.einsum("in,in->i", cross, alpha)
    power = np.diag(geometry.gram)[None, :] - 2.0 * cross + self_products[:, None] - sigma[:, None]
    cert = strong_feasibility_from_power(power, out.assignment.y)
    theta = geometry.theta_at(out.assignment, alpha)
    return KernelRunResult(
        assignment=out.assignment,
        coefficients=alpha,
        groups=out.siteset.groups,
        sigma=sigma,
        certificate=cert,
        trace=out.trace,
        theta=theta,
        squared_error=theta + geometry.energy,
        kernel=kernel,
    )
