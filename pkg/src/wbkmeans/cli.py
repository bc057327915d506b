"""Command line: ``wbkmeans run | kernel-run | verify | oracle``.

Point files hold one point per row, coordinates then weight.  Bounds,
must-link pairs, kernel and initialization can come from a YAML/JSON
config file; command-line flags override it.  Artifacts are written to the
output directory as JSON documents plus sparse ``assignment.csv`` triplets.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from .balanced_kmeans import CONVERGED, INIT_STRATEGIES, RunConfig, init_sites, multi_start, run
from .constraints import MustLinkGroups, expand_assignment, merge_must_link, within_group_dispersion
from .core import (
    TAU_SITE,
    ClusterBounds,
    InfeasibleBoundsError,
    SiteSet,
    WeightedDataset,
    point_energy,
    squared_error,
)
from .io import (
    IngestError,
    dumps,
    ingest,
    read_assignment,
    read_sites,
    serialize_assignment,
    write_json,
)
from .kernel import KERNELS, KernelFunction, kernel_run
from .lp_assign import build_lp, solve_vertex
from .oracle import TinyInstance, brute_force_integral, enumerate_optimal_vertices
from .power_diagram import (
    INFEASIBLE,
    PowerDiagram,
    sigma_feasibility_lp,
    verify_strongly_feasible,
)

log = logging.getLogger("wbkmeans")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CAP = 2
EXIT_INFEASIBLE = 3


class JobError(ValueError):
    """A job field is missing or invalid; the message names the field."""


@dataclass
class JobSpec:
    input: str | None = None
    k: int | None = None
    balanced: float | None = None
    lower: list | None = None
    upper: list | None = None
    kernel: dict | None = None
    must_link: list = field(default_factory=list)
    init: str = "uniform"
    seeds: list = field(default_factory=lambda: [0])
    sites: str | list | None = None
    site_indices: list | None = None
    max_iterations: int = 10000
    eps_obj: float = 1e-9
    tau_site: float = TAU_SITE
    out: str = "wbkmeans-out"
    dump_assignments: bool = False
    plot: bool = False
    workers: int = 1
    assign_only: bool = False


_CONFIG_KEYS = {f.name for f in fields(JobSpec)}


def load_config(path) -> dict:
    """Flatten a YAML/JSON config into JobSpec field names."""
    try:
        doc = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise JobError(f"config {path}: {exc}") from None
    if doc is None:
        return {}
    if not isinstance(doc, dict):
        raise JobError(f"config {path}: top level must be a mapping")
    flat = {}
    for key, value in doc.items():
        key = str(key).replace("-", "_")
        if key == "bounds":
            if not isinstance(value, dict):
                raise JobError("config field 'bounds': expected a mapping with 'balanced' or 'lower'/'upper'")
            for bk, bv in value.items():
                if bk not in ("balanced", "lower", "upper"):
                    raise JobError(f"config field 'bounds.{bk}': unknown key")
                flat[bk] = bv
        elif key == "tolerances":
            if not isinstance(value, dict):
                raise JobError("config field 'tolerances': expected a mapping")
            for tk, tv in value.items():
                if tk not in ("eps_obj", "tau_site"):
                    raise JobError(f"config field 'tolerances.{tk}': unknown key")
                flat[tk] = tv
        elif key == "seed":
            flat["seeds"] = [value]
        elif key in _CONFIG_KEYS:
            flat[key] = value
        else:
            raise JobError(f"config field '{key}': unknown key")
    return flat


def _int_list(value, name):
    try:
        return [int(v) for v in value]
    except (TypeError, ValueError):
        raise JobError(f"field '{name}': expected a list of integers") from None


def _float_list(value, name, k):
    try:
        out = [float(v) for v in value]
    except (TypeError, ValueError):
        raise JobError(f"field '{name}': expected a list of numbers") from None
    if k is not None and len(out) != k:
        raise JobError(f"field '{name}': expected {k} values, got {len(out)}")
    return out


def validate(job: JobSpec) -> JobSpec:
    if not job.input:
        raise JobError("field 'input': a points file is required")
    if job.lower is not None or job.upper is not None:
        if job.lower is None or job.upper is None:
            raise JobError("field 'lower'/'upper': give both or neither")
        if job.balanced is not None:
            raise JobError("field 'balanced': conflicts with explicit lower/upper bounds")
        job.lower = _float_list(job.lower, "lower", job.k)
        job.upper = _float_list(job.upper, "upper", len(job.lower))
        job.k = len(job.lower) if job.k is None else job.k
    if job.k is None or int(job.k) < 1:
        raise JobError("field 'k': a positive cluster count is required")
    job.k = int(job.k)
    if job.balanced is not None and not 0.0 <= float(job.balanced) < 1.0:
        raise JobError(f"field 'balanced': slack {job.balanced} outside [0, 1)")
    if job.init not in INIT_STRATEGIES:
        raise JobError(f"field 'init': {job.init!r} is not one of {INIT_STRATEGIES}")
    job.seeds = _int_list(job.seeds, "seeds")
    if not job.seeds:
        raise JobError("field 'seeds': at least one seed is required")
    if job.site_indices is not None:
        job.site_indices = _int_list(job.site_indices, "site_indices")
        job.init = "given"
    if job.init == "given" and job.sites is None and job.site_indices is None:
        raise JobError("field 'sites': init 'given' needs sites or site_indices")
    if job.assign_only and job.init != "given":
        raise JobError("field 'assign_only': needs given sites")
    pairs = []
    for r, p in enumerate(job.must_link or []):
        if not isinstance(p, (list, tuple)) or len(p) < 2:
            raise JobError(f"field 'must_link[{r}]': expected a list of at least two point indices")
        g = _int_list(p, f"must_link[{r}]")
        pairs.extend((g[0], b) for b in g[1:])
    job.must_link = pairs
    if job.kernel is not None:
        if isinstance(job.kernel, str):
            job.kernel = {"kind": job.kernel}
        if not isinstance(job.kernel, dict) or job.kernel.get("kind") not in KERNELS:
            raise JobError(f"field 'kernel.kind': choose from {KERNELS}")
    for name in ("max_iterations", "workers"):
        if int(getattr(job, name)) < 1:
            raise JobError(f"field '{name}': must be at least 1")
    for name in ("eps_obj", "tau_site"):
        if float(getattr(job, name)) <= 0:
            raise JobError(f"field '{name}': must be positive")
    return job


def resolve_bounds(job: JobSpec, total_weight: float) -> ClusterBounds:
    if job.lower is not None:
        return ClusterBounds(job.lower, job.upper)
    return ClusterBounds.balanced(total_weight, job.k, float(job.balanced or 0.0))


def resolve_kernel(job: JobSpec) -> KernelFunction:
    params = dict(job.kernel)
    kind = params.pop("kind")
    unknown = set(params) - {"degree", "offset", "bandwidth"}
    if unknown:
        raise JobError(f"field 'kernel.{sorted(unknown)[0]}': unknown kernel parameter")
    try:
        return KernelFunction(kind, **params)
    except ValueError as exc:
        raise JobError(f"field 'kernel': {exc}") from None


def _given_sites(job: JobSpec, data: WeightedDataset):
    if job.site_indices is not None:
        idx = np.array(job.site_indices)
        if len(idx) != job.k or idx.min() < 0 or idx.max() >= data.n:
            raise JobError(f"field 'site_indices': need {job.k} indices below {data.n}")
        return idx
    raw = read_sites(job.sites) if isinstance(job.sites, (str, Path)) else np.array(job.sites, dtype=float)
    raw = np.asarray(raw, dtype=float)
    if raw.ndim == 1:
        raw = raw[:, None]
    if raw.shape != (job.k, data.d):
        raise JobError(f"field 'sites': expected {job.k} sites of dimension {data.d}, got shape {raw.shape}")
    return raw


def _config(job: JobSpec, seed=0, record=False) -> RunConfig:
    return RunConfig(
        max_iterations=int(job.max_iterations),
        eps_obj=float(job.eps_obj),
        tau_site=float(job.tau_site),
        seed=seed,
        init=job.init,
        record_assignments=record,
    )


def _setup_logging(level=None):
    level = level or os.environ.get("WBKMEANS_LOG_LEVEL", "WARNING")
    logging.basicConfig(level=getattr(logging, str(level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


# -- execution ------------------------------------------------------------------

def _write_outputs(out: Path, assignment, sites_doc, trace_doc, cert, summary):
    out.mkdir(parents=True, exist_ok=True)
    (out / "assignment.csv").write_text(serialize_assignment(assignment))
    write_json(out / "sites.json", sites_doc)
    write_json(out / "trace.json", trace_doc)
    write_json(out / "certificate.json", cert.to_dict())
    write_json(out / "summary.json", summary)


def _plot(out: Path, data, y, sites, sigma, traces, labels):
    from .report import plot_clusters, plot_trace

    plot_trace(traces, out / "convergence.png", labels)
    if data.d <= 2 and sites is not None:
        plot_clusters(data.points, y, sites, sigma, out / "clusters.png")


def _prepare(job: JobSpec):
    data = ingest(job.input)
    groups = MustLinkGroups.from_pairs(job.must_link, data.n) if job.must_link else None
    if groups is not None and groups.groups:
        work, mapping = merge_must_link(data, groups)
    else:
        work, mapping = data, np.arange(data.n)
    bounds = resolve_bounds(job, data.total_weight)
    if bounds.k != job.k:
        raise JobError(f"field 'k': {job.k} clusters but {bounds.k} bounds")
    bounds.check_feasible(data.total_weight)
    return data, groups, work, mapping, bounds


def _must_link_doc(data, groups, work, mapping):
    applied = groups is not None and bool(groups.groups)
    return {
        "applied": applied,
        "groups": [list(g) for g in groups.groups] if applied else [],
        "reduced_points": work.n,
        "dispersion": within_group_dispersion(data, work, mapping) if applied else 0.0,
    }


def execute_run(job: JobSpec) -> int:
    data, groups, work, mapping, bounds = _prepare(job)
    if job.assign_only:
        return _execute_assign(job, data, groups, work, mapping, bounds)
    seeds = job.seeds
    if job.init == "given":
        sites = _given_sites(job, work)
        if job.site_indices is not None:
            sites = work.points[sites]
        results = [run(work, bounds, sites, _config(job, None, job.dump_assignments))]
        best, best_index, labels = results[0], 0, ["given"]
    else:
        workers = int(job.workers)
        ms = multi_start(work, bounds, seeds, _config(job, 0, job.dump_assignments), workers)
        results, best, best_index = ms.runs, ms.best, ms.best_index
        labels = [f"seed {s}" for s in seeds]
    full = expand_assignment(best.assignment, mapping)
    sites = best.sites
    sites_doc = {
        "sites": sites.sites,
        "centroids": best.centroids,
        "groups": [list(g) for g in sites.groups],
        "sigma": best.diagram.params,
        "merged": sites.merged,
    }
    trace_doc = {
        "best": best_index,
        "best_seed": best.seed,
        "runs": [dict(r.trace.to_dict(job.dump_assignments), seed=r.seed, theta=r.theta) for r in results],
    }
    summary = {
        "mode": "run",
        "verdict": best.trace.verdict,
        "certificate": best.certificate.verdict,
        "theta": squared_error(full, data, best.centroids) - point_energy(data),
        "squared_error": squared_error(full, data, best.centroids),
        "n_fractional": full.n_fractional(),
        "fractional_bound": 2 * (bounds.k - 1),
        "iterations": best.trace.iterations,
        "merged_groups": [list(g) for g in sites.groups if len(g) > 1],
        "must_link": _must_link_doc(data, groups, work, mapping),
        "k": bounds.k,
        "n": data.n,
        "d": data.d,
        "seed": best.seed,
        "seeds": list(seeds) if job.init != "given" else [],
        "shape": (full.y * data.weights[None, :]).sum(axis=1),
    }
    out = Path(job.out)
    _write_outputs(out, full, sites_doc, trace_doc, best.certificate, summary)
    if job.plot:
        _plot(out, data, full.y, sites.representatives, best.diagram.params,
              [r.trace.thetas for r in results], labels)
    log.info("run finished: %s, squared error %r", best.trace.verdict, summary["squared_error"])
    return EXIT_OK if best.trace.verdict == CONVERGED else EXIT_CAP


def _execute_assign(job, data, groups, work, mapping, bounds) -> int:
    """One assignment step at fixed sites, no site updates."""
    raw = _given_sites(job, work)
    if job.site_indices is not None:
        raw = work.points[raw]
    ss = SiteSet(raw, tau=float(job.tau_site))
    lp = build_lp(work, ss, bounds, float(job.tau_site))
    sol = solve_vertex(lp)
    diagram = PowerDiagram(ss, sol.cluster_duals)
    cert = verify_strongly_feasible(diagram, sol.assignment, work)
    group_y = sol.assignment
    full = expand_assignment(group_y, mapping)
    reps = ss.representatives
    se = float((full.y * data.weights[None, :] * ((data.points[None] - reps[:, None]) ** 2).sum(-1)).sum())
    sites_doc = {
        "sites": ss.sites,
        "centroids": None,
        "groups": [list(g) for g in ss.groups],
        "sigma": diagram.params,
        "merged": ss.merged,
    }
    trace_doc = {"best": 0, "best_seed": None, "runs": []}
    summary = {
        "mode": "assign",
        "verdict": "assigned",
        "certificate": cert.verdict,
        "theta": se - point_energy(data),
        "squared_error": se,
        "n_fractional": full.n_fractional(),
        "fractional_bound": 2 * (ss.n_groups - 1),
        "iterations": 0,
        "merged_groups": [list(g) for g in ss.groups if len(g) > 1],
        "must_link": _must_link_doc(data, groups, work, mapping),
        "k": bounds.k,
        "n": data.n,
        "d": data.d,
        "seed": None,
        "seeds": [],
        "shape": (full.y * data.weights[None, :]).sum(axis=1),
    }
    out = Path(job.out)
    _write_outputs(out, full, sites_doc, trace_doc, cert, summary)
    if job.plot and data.d <= 2:
        from .report import plot_clusters

        plot_clusters(data.points, full.y, ss.representatives, diagram.params, out / "clusters.png")
    return EXIT_OK


def execute_kernel_run(job: JobSpec) -> int:
    if job.kernel is None:
        raise JobError("field 'kernel': kernel-run needs a kernel")
    kernel = resolve_kernel(job)
    if job.must_link and kernel.kind != "linear":
        raise JobError("field 'must_link': only supported with the linear kernel")
    if job.assign_only:
        raise JobError("field 'assign_only': not available for kernel-run")
    data, groups, work, mapping, bounds = _prepare(job)
    if job.init == "given":
        starts = [(None, _given_sites(job, work))]
    else:
        starts = [(s, init_sites(work, bounds.k, job.init, s)) for s in job.seeds]
    results = []
    for seed, sites in starts:
        res = kernel_run(work, bounds, sites, kernel, _config(job, seed, job.dump_assignments))
        results.append((seed, res))
    b = min(range(len(results)), key=lambda r: results[r][1].theta)
    seed, best = results[b]
    full = expand_assignment(best.assignment, mapping)
    sites_doc = {
        "coefficients": best.coefficients,
        "groups": [list(g) for g in best.groups],
        "sigma": best.sigma,
        "merged": any(len(g) > 1 for g in best.groups),
        "kernel": kernel.to_dict(),
    }
    trace_doc = {
        "best": b,
        "best_seed": seed,
        "runs": [dict(r.trace.to_dict(job.dump_assignments), seed=s, theta=r.theta) for s, r in results],
    }
    summary = {
        "mode": "kernel-run",
        "verdict": best.trace.verdict,
        "certificate": best.certificate.verdict,
        "theta": best.theta,
        "squared_error": best.squared_error,
        "n_fractional": full.n_fractional(),
        "fractional_bound": 2 * (bounds.k - 1),
        "iterations": best.trace.iterations,
        "merged_groups": [list(g) for g in best.groups if len(g) > 1],
        "must_link": _must_link_doc(data, groups, work, mapping),
        "kernel": kernel.to_dict(),
        "k": bounds.k,
        "n": data.n,
        "d": data.d,
        "seed": seed,
        "seeds": [s for s, _ in starts if s is not None],
        "shape": (full.y * data.weights[None, :]).sum(axis=1),
    }
    out = Path(job.out)
    _write_outputs(out, full, sites_doc, trace_doc, best.certificate, summary)
    if job.plot:
        from .report import plot_trace

        plot_trace([r.trace.thetas for _, r in results], out / "convergence.png",
                   [("given" if s is None else f"seed {s}") for s, _ in results])
    return EXIT_OK if best.trace.verdict == CONVERGED else EXIT_CAP


def execute_verify(points, assignment_path, sites_path, sigma=None, out=None) -> int:
    """Certify an external clustering; exit 3 when no feasible diagram exists."""
    data = ingest(points)
    sites = read_sites(sites_path)
    if sites.ndim == 1:
        sites = sites[:, None]
    ss = SiteSet(sites)
    assignment = read_assignment(assignment_path, ss.k, data.n)
    if ss.merged:
        raise JobError("field 'sites': coincident sites; merge them before verifying")
    if sigma is not None:
        diagram = PowerDiagram(ss, sigma)
    else:
        diagram = sigma_feasibility_lp(assignment, data, ss)
    if diagram is None:
        from .power_diagram import FeasibilityCertificate

        cert = FeasibilityCertificate(INFEASIBLE, reason="no power-diagram parameters make the supports feasible")
    else:
        cert = verify_strongly_feasible(diagram, assignment, data)
    doc = dict(cert.to_dict(), sigma=None if diagram is None else diagram.params)
    text = dumps(doc)
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_INFEASIBLE if cert.verdict == INFEASIBLE else EXIT_OK


def execute_oracle(job: JobSpec, out=None) -> int:
    """Exhaustive LP and integral optima for a tiny instance at given sites."""
    data, _, work, _, bounds = _prepare(job)
    if job.must_link:
        raise JobError("field 'must_link': not used by the oracle")
    raw = _given_sites(job, work)
    if job.site_indices is not None:
        raw = work.points[raw]
    inst = TinyInstance(work, bounds, SiteSet(raw, tau=float(job.tau_site)))
    lp_opt = enumerate_optimal_vertices(inst)
    integral = brute_force_integral(inst)
    doc = {
        "lp_squared_error": lp_opt.squared_error,
        "lp_theta": lp_opt.theta,
        "n_vertices": lp_opt.n_vertices,
        "optimal_vertices": [a.y for a in lp_opt.optimal],
        "integral_squared_error": None if integral is None else integral.squared_error,
        "integral_assignment": None if integral is None else integral.assignment.y,
    }
    text = dumps(doc)
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# -- argument parsing -----------------------------------------------------------

def _csv_floats(text):
    return [float(t) for t in text.split(",") if t.strip()]


def _csv_ints(text):
    return [int(t) for t in text.split(",") if t.strip()]


def _pairs(text):
    out = []
    for chunk in text.split(";"):
        if chunk.strip():
            out.append(_csv_ints(chunk))
    return out


def _job_arguments(p: argparse.ArgumentParser):
    p.add_argument("input", nargs="?", help="points file: coordinates then weight per row")
    p.add_argument("-c", "--config", help="YAML or JSON job config; flags override it")
    p.add_argument("-k", type=int, help="number of clusters")
    p.add_argument("--balanced", type=float, metavar="P",
                   help="bounds (1 -/+ P) * total weight / k for every cluster")
    p.add_argument("--lower", type=_csv_floats, metavar="A,B,...", help="explicit lower bounds")
    p.add_argument("--upper", type=_csv_floats, metavar="A,B,...", help="explicit upper bounds")
    p.add_argument("--must-link", type=_pairs, metavar="I,J;K,L",
                   help="linked point groups, ';' between groups")
    p.add_argument("--init", choices=INIT_STRATEGIES, help="initial site strategy")
    p.add_argument("--seeds", type=_csv_ints, metavar="S,...", help="one run per seed, best kept")
    p.add_argument("--sites", help="file of initial sites (implies --init given)")
    p.add_argument("--site-indices", type=_csv_ints, metavar="J,...",
                   help="initial sites as data point indices (implies --init given)")
    p.add_argument("--max-iterations", type=int)
    p.add_argument("--eps-obj", type=float, help="minimum objective decrease per iteration")
    p.add_argument("--tau-site", type=float, help="distance below which sites coincide")
    p.add_argument("-o", "--out", help="output directory")
    p.add_argument("--workers", type=int, help="parallel seeds (default $WBKMEANS_WORKERS or 1)")
    p.add_argument("--dump-assignments", action="store_true", default=None,
                   help="include every iteration's assignment in trace.json")
    p.add_argument("--plot", action="store_true", default=None, help="write PNG figures")
    p.add_argument("--log-level", help="default $WBKMEANS_LOG_LEVEL or WARNING")


def _kernel_arguments(p):
    p.add_argument("--kernel", choices=KERNELS)
    p.add_argument("--degree", type=int)
    p.add_argument("--offset", type=float)
    p.add_argument("--bandwidth", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wbkmeans", description="Weight-balanced k-means clustering.")
    # oracle is left out of the listing: it is a debugging aid
    sub = parser.add_subparsers(dest="command", required=True, metavar="{run,kernel-run,verify}")
    p = sub.add_parser("run", help="cluster a point file")
    _job_arguments(p)
    p.add_argument("--assign-only", action="store_true", default=None,
                   help="one assignment step at the given sites, no site updates")
    p = sub.add_parser("kernel-run", help="cluster in a kernel feature space")
    _job_arguments(p)
    _kernel_arguments(p)
    p = sub.add_parser("verify", help="certify an assignment against sites")
    p.add_argument("input", help="points file")
    p.add_argument("--assignment", required=True, help="sparse cluster,point,fraction triplets")
    p.add_argument("--sites", required=True, help="one site per row, or sites.json")
    p.add_argument("--sigma", type=_csv_floats, metavar="A,B,...",
                   help="power-diagram parameters; searched for when omitted")
    p.add_argument("-o", "--out", help="certificate file (default stdout)")
    p.add_argument("--log-level")
    p = sub.add_parser("oracle", description="Exhaustive LP and integral optima of a tiny instance.")
    _job_arguments(p)
    return parser


def job_from_args(args) -> JobSpec:
    values = load_config(args.config) if getattr(args, "config", None) else {}
    for name in _CONFIG_KEYS:
        v = getattr(args, name, None)
        if v is not None:
            values[name] = v
    if getattr(args, "kernel", None):
        kern = {"kind": args.kernel}
        for p in ("degree", "offset", "bandwidth"):
            if getattr(args, p, None) is not None:
                kern[p] = getattr(args, p)
        values["kernel"] = kern
    if (values.get("sites") is not None or values.get("site_indices") is not None) and args.init is None:
        values["init"] = "given"
    if "workers" not in values:
        env = os.environ.get("WBKMEANS_WORKERS")
        if env:
            try:
                values["workers"] = int(env)
            except ValueError:
                raise JobError(f"WBKMEANS_WORKERS={env!r} is not an integer") from None
    try:
        job = JobSpec(**values)
    except TypeError as exc:
        raise JobError(str(exc)) from None
    return validate(job)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _setup_logging(args.log_level)
    try:
        if args.command == "verify":
            return execute_verify(args.input, args.assignment, args.sites, args.sigma, args.out)
        job = job_from_args(args)
        if args.command == "run":
            if job.kernel is not None:
                raise JobError("field 'kernel': use kernel-run for kernel jobs")
            return execute_run(job)
        if args.command == "kernel-run":
            return execute_kernel_run(job)
        return execute_oracle(job, args.out)
    except (JobError, IngestError, InfeasibleBoundsError, ValueError, OSError) as exc:
        print(f"wbkmeans: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
