# perc_lab/experiments.py

"""
Experiment registry, output writers, run manifests and replay.

Every experiment kind maps to a runner ``(config, workers) -> ExperimentResult``.
:func:`run` writes the result tables as CSV (a ``# config_hash=...`` comment
line, then a header row) and the summary plus any extra artifacts as JSON
with sorted keys, then records SHA-256 checksums in ``manifest.json``.
"""

import csv
import hashlib
import json
import logging
import math
import os
import tempfile
import time
from dataclasses import dataclass, field
from functools import partial
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from networkx.algorithms.flow import dinitz, edmonds_karp

from .config import ExperimentConfig
from .constants import MANIFEST_NAME, PHI_EXACT_NMAX_Z2, SAMPLE_BLOCK, VERSION
from .decorators import logged_precondition, timed
from .errors import ConfigError, PreconditionError, ReplayError
from .explorer import (
    Arena,
    ConnectionEstimator,
    derive_params,
    estimate_psi,
    exact_merge_bound,
    psi_values,
    run_exploration,
    verify_merge_bound,
    verify_sprinkling,
)
from .graphs import (
    FiniteGraph,
    ball,
    edge_boundary_size,
    generate,
    interior_edges,
    interior_radius,
    invasion_cluster,
    sphere,
)
from .isoperimetry import fit_asymptotic, geometry_check, phi_of_set, phi_profile
from .percolation import eta_for, exact_layer_law, sample_layers
from .renormalization import (
    block_connection_prob,
    coarse_grain,
    gm_density_scan,
    half_space_touch_fraction,
    slab_crossing,
    uniqueness_event_prob,
)
from .rng import EdgeLabels, stream_id
from .stats import Estimate, replicate
from .tails import (
    CURVE_HEADER,
    PhiLike,
    PowerLaw,
    collect_mass_experiment,
    crossing_sweep,
    cutset_tail,
    fit_decay,
    mass_bound,
    mass_constant,
    radius_tail_curve,
    solve_v_n,
    volume_tail_sweep,
)

Table = Tuple[Sequence[str], List[Sequence[Any]]]


@dataclass
class ExperimentResult:
    summary: Dict[str, Any]
    tables: Dict[str, Table] = field(default_factory=dict)
    artifacts: Dict[str, Any] = field(default_factory=dict)
    replicas: int = 0


Runner = Callable[[ExperimentConfig, int], ExperimentResult]
EXPERIMENTS: Dict[str, Runner] = {}


def experiment(kind: str) -> Callable[[Runner], Runner]:
    """Register a runner under ``kind``."""
    def register(fn: Runner) -> Runner:
        EXPERIMENTS[kind] = fn
        return fn
    return register


# ---------------------------------------------------------------------------
# Shared helpers
# ---------------------------------------------------------------------------

def resolve_set(g: FiniteGraph, spec: Dict[str, Any]) -> np.ndarray:
    """Vertex mask for a ``set`` parameter (origin, ball, ids, box or vertex coordinates)."""
    shape = spec["shape"]
    if shape == "origin":
        return g.vertex_mask([g.origin])
    if shape == "ball":
        return ball(g, g.vertex_mask([g.origin]), spec.get("radius", 0))
    if shape == "ids":
        ids = spec["ids"]
        if max(ids) >= g.vertex_count:
            raise PreconditionError(f"Vertex id {max(ids)} is outside the graph.")
        return g.vertex_mask(ids)
    if g.coords is None:
        raise PreconditionError(f"Set shape '{shape}' needs a lattice graph.")
    if shape == "vertices":
        return g.vertex_mask([g.vertex_at(c) for c in spec["vertices"]])
    side = spec.get("side", 1)
    lo = -(side // 2)
    mask = np.all((g.coords >= lo) & (g.coords < lo + side), axis=1)
    if int(mask.sum()) != side ** g.coords.shape[1]:
        raise PreconditionError(f"A box of side {side} does not fit in the graph.")
    return mask


def _graph(cfg: ExperimentConfig) -> FiniteGraph:
    return generate(cfg.graph_spec())


def _phi_from(cfg: ExperimentConfig, spec: Optional[Dict[str, Any]]) -> PhiLike:
    """Phi for v_n and decay fits: an exact profile of the configured family, or a power law."""
    spec = spec or {"source": "profile"}
    if spec["source"] == "power":
        return PowerLaw(spec.get("coefficient", 1.0), spec.get("exponent", 0.5))
    family = cfg.graph_spec()
    if family.kind != "zd_box":
        raise PreconditionError("An exact Phi profile needs a zd_box family; use a power-law phi instead.")
    profile = phi_profile(family, spec.get("n_max", PHI_EXACT_NMAX_Z2))
    fit_asymptotic(profile, family.d)
    return profile


def _curve_rows(curves) -> List[Sequence[Any]]:
    rows = []
    for curve in curves:
        rows.extend(curve.rows())
    return rows


# ---------------------------------------------------------------------------
# Isoperimetry
# ---------------------------------------------------------------------------

@experiment("phi-profile")
def _run_phi_profile(cfg: ExperimentConfig, workers: int) -> ExperimentResult:
    p = cfg.params
    family = cfg.graph_spec()
    kwargs = {k: p[k] for k in ("budget", "tier1_n_max") if k in p}
    profile = phi_profile(family, p["n_max"], **kwargs)
    if p.get("fit", True) and family.kind == "zd_box":
        fit_asymptotic(profile, family.d)
    summary = {
        "exact": {str(n): v for n, v in profile.rows()},
        "nondecreasing": profile.is_nondecreasing(),
        "doubling_ok": profile.doubling_ok(),
        "coefficient": profile.coefficient,
        "exponent": profile.exponent() if profile.dimension else None,
    }
    return ExperimentResult(summary, {"phi_profile": (("n", "phi"), profile.rows())})


@experiment("phi-of-set")
def _run_phi_of_set(cfg: ExperimentConfig, workers: int) -> ExperimentResult:
    g = _graph(cfg)
    w = resolve_set(g, cfg.params["set"])
    flow = edmonds_karp if cfg.params.get("flow") == "edmonds_karp" else dinitz
    cert = phi_of_set(g, w, cfg.params.get("r_schedule"), flow_func=flow)
    summary = cert.to_dict(g)
    summary["set_size"] = int(w.sum())
    summary["edge_boundary"] = edge_boundary_size(g, w)
    return ExperimentResult(summary, {"phi_of_set": (("R", "value"), cert.history)})


@experiment("geometry-check")
def _run_geometry_check(cfg: ExperimentConfig, workers: int) -> ExperimentResult:
    """Boundary-versus-diameter check on one set and on random invasion blobs."""
    p = cfg.params
    g = _graph(cfg)
    profile = None
    if "profile_n_max" in p:
        profile = phi_profile(cfg.graph_spec(), p["profile_n_max"])
    sets = []
    if "set" in p:
        sets.append(resolve_set(g, p["set"]))
    count = p.get("random_sets", 0 if sets else 100)
    max_size = p.get("max_size", 200)
    for i in range(count):
        labels = EdgeLabels(g.edge_count, cfg.seed, stream_id("geometry-blob", i))
        size = 1 + int(labels.uniforms()[0] * max_size)
        sets.append(invasion_cluster(g, labels.uniforms(), size))
    rows, failures = [], 0
    hypothesis = True
    for i, a in enumerate(sets):
        diag = geometry_check(g, a, p["eps"], profile)
        failures += not diag.verdict
        hypothesis &= diag.hypothesis_ok
        rows.append((i, int(a.sum()), diag.diameter, diag.boundary_size,
                     diag.delta * diag.diameter, diag.verdict, diag.quadratic_growth_ok, diag.chain_ok))
    summary = {
        "eps": p["eps"],
        "delta": p["eps"] ** 2 / (48 * g.degree_bound),
        "sets": len(sets),
        "failures": failures,
        "hypothesis_ok": hypothesis,
    }
    header = ("index", "size", "diameter", "boundary", "bound", "verdict", "quadratic_growth_ok", "chain_ok")
    return ExperimentResult(summary, {"geometry_check": (header, rows)}, replicas=len(sets))


# ---------------------------------------------------------------------------
# Percolation layers
# ---------------------------------------------------------------------------

def _layer_block(g, p, q, seed, samples, block):
    counts = np.zeros(g.edge_count, dtype=np.int64)
    for i in range(block * SAMPLE_BLOCK, min(samples, (block + 1) * SAMPLE_BLOCK)):
        counts += sample_layers(g, p, q, None, seed, i).union()
    return counts


@experiment("layers-check")
def _run_layers_check(cfg: ExperimentConfig, workers: int) -> ExperimentResult:
    """Per-edge frequency of the layer union against q, and the exact union law on a few edges."""
    g = _graph(cfg)
    p, q = cfg.prob("p"), cfg.prob("q")
    n = cfg.samples(100_000)
    blocks = math.ceil(n / SAMPLE_BLOCK)
    counts = np.sum(replicate(partial(_layer_block, g, p, q, cfg.seed, n), blocks, workers), axis=0)
    freq = counts / n
    sigma = math.sqrt(q * (1 - q) / n) if 0 < q < 1 else 0.0
    z = np.abs(freq - q) / sigma if sigma else np.where(freq == q, 0.0, np.inf)
    exact_edges = cfg.params.get("exact_edges", 4)
    summary = {
        "p": p,
        "q": q,
        "eta": eta_for(p, q),
        "samples": n,
        "max_sigma_units": float(z.max()) if len(z) else 0.0,
        "within_4_sigma": bool(np.all(z <= 4.0)),
        "exact_edges": exact_edges,
        "exact_residual": exact_layer_law(exact_edges, p, q) if exact_edges else 0.0,
    }
    rows = [(e, int(u), int(v), float(freq[e]), float(z[e])) for e, (u, v) in enumerate(g.edges)]
    return ExperimentResult(summary, {"layers_check": (("edge", "u", "v", "frequency", "sigma_units"), rows)}, replicas=n)


# ---------------------------------------------------------------------------
# Tails
# ---------------------------------------------------------------------------

@experiment("volume-tail")
def _run_volume_tail(cfg: ExperimentConfig, workers: int) -> ExperimentResult:
    g = _graph(cfg)
    n = cfg.samples()
    grid = cfg.grid(cfg.params["n_grid"])
    radii = sorted(cfg.params["radii"])
    curves = volume_tail_sweep(g, cfg.prob("p"), grid, radii, n, cfg.seed, workers)
    summary = {"p": cfg.prob("p"), "samples": n, "radii": radii,
               "estimates": {str(r): curves[r].estimates.tolist() for r in radii}}
    if len(radii) > 1:
        last, prev = curves[radii[-1]], curves[radii[-2]]
        summary["stabilized"] = bool(np.all(
            np.abs(last.estimates - prev.estimates) <= last.halfwidths + prev.halfwidths))
    return ExperimentResult(summary, {"volume_tail": (CURVE_HEADER, _curve_rows(curves[r] for r in radii))},
                            replicas=n)


@experiment("radius-tail")
def _run_radius_tail(cfg: ExperimentConfig, workers: int) -> ExperimentResult:
    g = _graph(cfg)
    n = cfg.samples()
    curve, violations = radius_tail_curve(g, cfg.prob("p"), cfg.grid(cfg.params["ns"]),
                                          cfg.params["radius"], n, cfg.seed, workers)
    summary = {"p": cfg.prob("p"), "samples": n, "implication_violations": violations,
               "estimates": curve.estimates.tolist()}
    return ExperimentResult(summary, {"radius_tail": (CURVE_HEADER, curve.rows())}, replicas=n)


@experiment("decay-fit")
def _run_decay_fit(cfg: ExperimentConfig, workers: int) -> ExperimentResult:
    """Volume (or radius) tail regressed on Phi(n) and on n."""
    g = _graph(cfg)
    n = cfg.samples()
    grid = cfg.grid(cfg.params["n_grid"])
    radius = cfg.params["radius"]
    if cfg.params.get("curve", "volume") == "radius":
        curve, _ = radius_tail_curve(g, cfg.prob("p"), grid, radius, n, cfg.seed, workers)
        phi: PhiLike = PowerLaw(1.0, 1.0)
    else:
        curve = volume_tail_sweep(g, cfg.prob("p"), grid, [radius], n, cfg.seed, workers)[radius]
        phi = _phi_from(cfg, cfg.params.get("phi"))
    report = fit_decay(curve, phi)
    summary = report.to_dict()
    summary.update({"p": cfg.prob("p"), "samples": n, "curve": curve.kind})
    return ExperimentResult(summary, {"decay_curve": (CURVE_HEADER, curve.rows())}, replicas=n)


@experiment("cutset-tail")
def _run_cutset_tail(cfg: ExperimentConfig, workers: int) -> ExperimentResult:
    g = _graph(cfg)
    n = cfg.samples()
    s = resolve_set(g, cfg.params["set"])
    curve = cutset_tail(g, s, cfg.prob("p"), cfg.grid(cfg.params["n_grid"]), cfg.params["radius"],
                        n, cfg.seed, workers)
    summary = {"p": cfg.prob("p"), "samples": n, "estimates": curve.estimates.tolist()}
    return ExperimentResult(summary, {"cutset_tail": (CURVE_HEADER, curve.rows())}, replicas=n)


@experiment("crossing-sweep")
def _run_crossing_sweep(cfg: ExperimentConfig, workers: int) -> ExperimentResult:
    n = cfg.samples()
    ps = cfg.params["ps"]
    sweep = crossing_sweep(cfg.params["side"], ps, n, cfg.seed, cfg.params.get("d", 2), workers)
    rows = [(p, e.value, e.halfwidth, e.samples) for p, e in sweep]
    monotone = all(a[1].successes <= b[1].successes for a, b in zip(sweep, sweep[1:])) if ps == sorted(ps) else None
    summary = {"samples": n, "side": cfg.params["side"], "monotone_in_p": monotone}
    return ExperimentResult(summary, {"crossing_sweep": (("p", "estimate", "ci_halfwidth", "samples"), rows)},
                            replicas=n)


@experiment("v-n")
def _run_v_n(cfg: ExperimentConfig, workers: int) -> ExperimentResult:
    p = cfg.params
    phi = _phi_from(cfg, p["phi"])
    d = p.get("d") or (cfg.graph_spec().degree_bound if cfg.graph else None)
    if "c" in p:
        c = p["c"]
    elif "c_prime" in p and d:
        c = mass_constant(p["c_prime"], cfg.prob("p"), d)
    else:
        raise ConfigError("v-n needs c, or c_prime together with a degree d.")
    schedule = solve_v_n(p["size_s"], c, phi, p["n_max"], d=d)
    exact_part, tail_part = mass_bound(p["size_s"], c, phi)
    summary = {
        "c": c,
        "size_s": p["size_s"],
        "max_residual": float(np.max(schedule.residuals)) if len(schedule.residuals) else 0.0,
        "increment_ok": schedule.increment_ok,
        "bound_exact_part": exact_part,
        "bound_tail_part": tail_part,
        "bound": 1.0 - exact_part - tail_part,
    }
    return ExperimentResult(summary, {"v_n": (("n", "v_n", "residual"), schedule.rows())})


@experiment("collect-mass")
def _run_collect_mass(cfg: ExperimentConfig, workers: int) -> ExperimentResult:
    g = _graph(cfg)
    n = cfg.samples()
    s = resolve_set(g, cfg.params["set"])
    phi = _phi_from(cfg, cfg.params["phi"])
    c = cfg.params.get("c", 1.0 / (4 * g.degree_bound))
    result = collect_mass_experiment(g, s, cfg.prob("p"), c, cfg.params["n_max"], n, cfg.seed, phi, workers)
    mean = result.trajectories.mean(axis=0)
    rows = [(k, float(v), float(m)) for k, (v, m) in enumerate(zip(result.schedule.v, mean))]
    summary = {
        "c": c,
        "success": result.success.to_dict(),
        "bound": result.bound,
        "bound_exact_part": result.bound_exact_part,
        "bound_tail_part": result.bound_tail_part,
        "monotone_violations": result.monotone_violations,
        "initial_violations": result.initial_violations,
    }
    return ExperimentResult(summary, {"collect_mass": (("n", "v_n", "mean_mass"), rows)}, replicas=n)


# ---------------------------------------------------------------------------
# Touches and exploration
# ---------------------------------------------------------------------------

def _psi_q_block(g, s, qs, radius, seed, samples, block):
    violations = 0
    for i in range(block * SAMPLE_BLOCK, min(samples, (block + 1) * SAMPLE_BLOCK)):
        values = [psi_values(g, s, q, [radius], seed, i)[0] for q in qs]
        violations += any(b < a for a, b in zip(values, values[1:]))
    return violations


@experiment("psi")
def _run_psi(cfg: ExperimentConfig, workers: int) -> ExperimentResult:
    """Tail of Psi(S) per radius, plus the shared-label monotonicity in q."""
    g = _graph(cfg)
    n = cfg.samples()
    s = resolve_set(g, cfg.params["set"])
    radii = sorted(cfg.params["radii"])
    psi = estimate_psi(s, cfg.prob("q"), g, radii, n, cfg.seed, workers)
    summary = {
        "q": cfg.prob("q"),
        "samples": n,
        "monotone_in_R_violations": psi.monotone_violations,
        "stabilized": psi.stabilized,
        "shape_constant": psi.shape_constant(radii[-1]),
    }
    qs = cfg.params.get("qs")
    if qs:
        qs = sorted(qs)
        blocks = math.ceil(n / SAMPLE_BLOCK)
        fn = partial(_psi_q_block, g, s, qs, radii[-1], cfg.seed, n)
        summary["monotone_in_q_violations"] = int(sum(replicate(fn, blocks, workers)))
    header = ("t", "estimate", "ci_halfwidth", "R", "samples")
    return ExperimentResult(summary, {"psi": (header, _curve_rows(psi.curves[r] for r in radii))}, replicas=n)


@experiment("merge-bound")
def _run_merge_bound(cfg: ExperimentConfig, workers: int) -> ExperimentResult:
    g = _graph(cfg)
    n = cfg.samples()
    s = resolve_set(g, cfg.params["set"])
    p, q, t = cfg.prob("p"), cfg.prob("q"), cfg.params["t"]
    radius = cfg.params.get("radius", interior_radius(g) - 1)
    report = verify_merge_bound(s, p, q, t, g, n, cfg.seed, radius, workers)
    summary = {
        "eps": report.eps,
        "frequency": report.frequency.to_dict(),
        "bound": report.bound,
        "within_bound": report.within_bound,
        "conditional_mean": report.conditional_mean,
    }
    if cfg.params.get("exact"):
        origin = g.vertex_mask([g.origin])
        shell = sphere(g, origin, radius + 1)
        domain = interior_edges(g, ball(g, origin, radius + 1))
        exact = exact_merge_bound(g, s, shell, p, q, t, domain)
        summary["exact"] = vars(exact)
    rows = [(t, report.frequency.value, report.frequency.halfwidth, report.bound, n)]
    return ExperimentResult(summary, {"merge_bound": (("t", "frequency", "ci_halfwidth", "bound", "samples"), rows)},
                            replicas=n)


def _exploration_run(arena, params, seed, estimator_samples, strict, j):
    estimator = ConnectionEstimator(estimator_samples, seed)
    state, sample = run_exploration(arena, params, seed, estimator, sample_index=j, strict=strict)
    return state.to_dict(), state.check_invariants(arena, params, sample)


@experiment("explore")
def _run_explore(cfg: ExperimentConfig, workers: int) -> ExperimentResult:
    """Repeated touch explorations with per-run transcripts and invariant checks."""
    p = cfg.params
    g = _graph(cfg)
    runs = cfg.samples(200)
    s = resolve_set(g, p["set"])
    radius = p.get("radius", interior_radius(g) - 2)
    arena = Arena.build(g, s, radius, p["t"])
    est_samples = p.get("estimator_samples", 200)
    estimator = ConnectionEstimator(est_samples, cfg.seed, workers=workers)
    params = derive_params(cfg.prob("p"), cfg.prob("q"), cfg.prob("eps"), g, estimator,
                           mode=p.get("mode", "practical"), r=p.get("r"), ell=p.get("ell"))
    fn = partial(_exploration_run, arena, params, cfg.seed, est_samples, p.get("strict", False))
    results = replicate(fn, runs, workers)
    rows = []
    reached = 0
    violations = 0
    for j, (transcript, problems) in enumerate(results):
        reached += transcript["status"] == "reached_t"
        violations += len(problems)
        for problem in problems:
            logging.error("Run %d violates a transcript invariant: %s", j, problem)
        rows.append((j, transcript["status"], len(transcript["rounds"]), transcript["final_touches"],
                     transcript["explored_size"], len(problems)))
    summary = {
        "params": params.to_dict(),
        "runs": runs,
        "reached_t": Estimate(reached, runs).to_dict(),
        "invariant_violations": violations,
    }
    keep = p.get("transcripts", 5)
    artifacts = {"transcripts": [t for t, _ in results[:keep]]}
    header = ("run", "status", "rounds", "final_touches", "explored_size", "violations")
    return ExperimentResult(summary, {"explore": (header, rows)}, artifacts, replicas=runs)


@experiment("sprinkling-check")
def _run_sprinkling_check(cfg: ExperimentConfig, workers: int) -> ExperimentResult:
    g = _graph(cfg)
    n = cfg.samples()
    origin = g.vertex_mask([g.origin])
    source = ball(g, origin, cfg.params["source_radius"])
    target_radius = cfg.params["target_radius"]
    if target_radius <= cfg.params["source_radius"]:
        raise PreconditionError("The target sphere must lie outside the source ball.")
    target = sphere(g, origin, target_radius)
    allowed = ball(g, origin, target_radius)
    p = cfg.prob("p")
    if "eta" in cfg.params:
        eta = cfg.params["eta"]
    elif "q" in cfg.percolation:
        eta = eta_for(p, cfg.prob("q"))
    else:
        raise ConfigError("sprinkling-check needs params.eta or percolation.q.")
    report = verify_sprinkling(g, source, target, p, eta, cfg.prob("eps"), n, cfg.seed, allowed, workers)
    summary = {
        "alpha": report.alpha,
        "eps": report.eps,
        "eta": eta,
        "hypothesis": report.hypothesis.to_dict(),
        "conclusion": report.conclusion.to_dict(),
        "hypothesis_ok": report.hypothesis_ok,
        "conclusion_ok": report.conclusion_ok,
    }
    rows = [("plain", report.hypothesis.value, report.hypothesis.halfwidth, n),
            ("sprinkled", report.conclusion.value, report.conclusion.halfwidth, n)]
    return ExperimentResult(summary, {"sprinkling": (("event", "estimate", "ci_halfwidth", "samples"), rows)},
                            replicas=n)


# ---------------------------------------------------------------------------
# Renormalization
# ---------------------------------------------------------------------------

@experiment("block-scan")
def _run_block_scan(cfg: ExperimentConfig, workers: int) -> ExperimentResult:
    p = cfg.params
    n = cfg.samples()
    d = p.get("d", 3)
    rows = []
    for scale in cfg.grid(p["n_grid"]):
        conn = block_connection_prob(cfg.prob("p"), p["k"], scale, p["C"], d, n, cfg.seed, workers)
        uniq = uniqueness_event_prob(cfg.prob("p"), p["k"], p.get("n0", scale), n, cfg.seed, d, workers)
        rows.append((p["k"], scale, p["C"], conn.value, conn.halfwidth, uniq.value, uniq.halfwidth, n))
    header = ("k", "n", "C", "connection", "connection_ci", "uniqueness", "uniqueness_ci", "samples")
    summary = {"p": cfg.prob("p"), "d": d, "best_connection": max(r[3] for r in rows)}
    return ExperimentResult(summary, {"block_scan": (header, rows)}, replicas=n)


@experiment("coarse-grain")
def _run_coarse_grain(cfg: ExperimentConfig, workers: int) -> ExperimentResult:
    p = cfg.params
    n = cfg.samples(200)
    result = coarse_grain(cfg.prob("p"), p["k"], p["n"], p["C"], p["window"], n, cfg.seed,
                          p.get("n0"), p.get("d", 3), workers)
    coarse = result.layout.coarse
    rows = [(e, int(a), int(b), m.value, m.halfwidth, m.samples)
            for e, ((a, b), m) in enumerate(zip(coarse.edges, result.marginals))]
    header = ("coarse_edge", "u", "v", "marginal", "ci_halfwidth", "samples")
    return ExperimentResult(result.to_dict(), {"coarse_marginals": (header, rows)},
                            {"coarse_snapshot": result.snapshot()}, replicas=n)


@experiment("density-scan")
def _run_density_scan(cfg: ExperimentConfig, workers: int) -> ExperimentResult:
    p = cfg.params
    n = cfg.samples(200)
    scan = gm_density_scan(cfg.prob("p"), p["k"], cfg.grid(p["n_grid"]), p["delta"], n, cfg.seed,
                           p.get("d", 3), workers)
    rows = [r for row in scan for r in row.rows()]
    summary = {
        "C": scan[0].C,
        "delta": p["delta"],
        "by_n": {str(row.n): {"all_dense": row.all_dense.to_dict(), "intersecting": row.intersecting.to_dict(),
                              "violations": row.violations} for row in scan},
        "violations": sum(row.violations for row in scan),
    }
    header = ("n", "i", "mean_density", "p_dense", "ci_halfwidth", "samples")
    return ExperimentResult(summary, {"density_scan": (header, rows)}, replicas=n)


@experiment("slab-crossing")
def _run_slab_crossing(cfg: ExperimentConfig, workers: int) -> ExperimentResult:
    p = cfg.params
    n = cfg.samples(200)
    diag = slab_crossing(p.get("d", 3), p["ell"], cfg.prob("p"), cfg.grid(p["lengths"]), n, cfg.seed, workers)
    summary = {"thickness": diag.thickness, "verdicts": diag.verdicts(),
               "monotone_violations": diag.monotone_violations}
    header = ("ell", "L", "estimate", "ci_halfwidth", "thicker_estimate", "samples")
    return ExperimentResult(summary, {"slab_crossing": (header, diag.rows())}, replicas=n)


@experiment("half-space")
def _run_half_space(cfg: ExperimentConfig, workers: int) -> ExperimentResult:
    p = cfg.params
    n = cfg.samples(200)
    report = half_space_touch_fraction(p.get("d", 3), cfg.prob("p"), p["n"], n, cfg.seed,
                                       p.get("c0", 0.1), p.get("half_space", False), workers)
    rows = [(report.n, report.mean, report.sigma, report.above.value, report.above.halfwidth, n)]
    header = ("n", "mean_fraction", "sigma", "p_above_c0", "ci_halfwidth", "samples")
    return ExperimentResult(report.to_dict(), {"half_space": (header, rows)}, replicas=n)


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def _plain(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if value is None:
        return ""
    return value


def to_jsonable(value: Any) -> Any:
    """Recursively convert numpy and Estimate values to plain JSON types."""
    if isinstance(value, Estimate):
        return value.to_dict()
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    return value


def write_csv(path: str, header: Sequence[str], rows: Sequence[Sequence[Any]], config_hash: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# config_hash={config_hash}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_plain(v) for v in row])


def write_json(path: str, payload: Any) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(to_jsonable(payload), fh, sort_keys=True, indent=2)
        fh.write("\n")


def file_sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    """Everything needed to replay a run bit-identically."""

    kind: str
    config: Dict[str, Any]
    config_hash: str
    seed: int
    version: str
    files: Dict[str, str]
    replicas: int
    workers: int
    wall_clock_seconds: float
    directory: str = ""

    def to_dict(self) -> Dict[str, Any]:
        out = dict(vars(self))
        out.pop("directory")
        return out

    @property
    def path(self) -> str:
        return os.path.join(self.directory, MANIFEST_NAME)

    def write(self) -> str:
        write_json(self.path, self.to_dict())
        return self.path

    @classmethod
    def load(cls, path: str) -> "RunManifest":
        if not os.path.isfile(path):
            raise ReplayError(f"Manifest '{path}' does not exist.")
        try:
            with open(path, "r", encoding="utf-8") as fh:
                data = json.load(fh)
            return cls(directory=os.path.dirname(os.path.abspath(path)), **data)
        except (ValueError, TypeError) as exc:
            raise ReplayError(f"Manifest '{path}' is unreadable: {exc}") from exc


@logged_precondition
@timed("experiment run")
def run(cfg: ExperimentConfig, workers: int = 1) -> RunManifest:
    """Dispatch ``cfg`` to its experiment, write the outputs and the manifest."""
    runner = EXPERIMENTS.get(cfg.kind)
    if runner is None:
        raise ConfigError(f"Unknown experiment '{cfg.kind}'.")
    start = time.perf_counter()
    logging.info("Running %s (config %s, seed %d, workers %d)", cfg.kind, cfg.config_hash[:12], cfg.seed, workers)
    result = runner(cfg, workers)
    run_dir = os.path.join(cfg.directory, f"{cfg.kind}-{cfg.config_hash[:12]}")
    os.makedirs(run_dir, exist_ok=True)
    written = []
    if "csv" in cfg.formats:
        for name, (header, rows) in result.tables.items():
            write_csv(os.path.join(run_dir, f"{name}.csv"), header, rows, cfg.config_hash)
            written.append(f"{name}.csv")
    if "json" in cfg.formats:
        summary = {"kind": cfg.kind, "config_hash": cfg.config_hash, "seed": cfg.seed, "result": result.summary}
        write_json(os.path.join(run_dir, "summary.json"), summary)
        written.append("summary.json")
        for name, payload in result.artifacts.items():
            write_json(os.path.join(run_dir, f"{name}.json"), payload)
            written.append(f"{name}.json")
    files = {name: file_sha256(os.path.join(run_dir, name)) for name in sorted(written)}
    manifest = RunManifest(
        kind=cfg.kind,
        config=cfg.to_dict(),
        config_hash=cfg.config_hash,
        seed=cfg.seed,
        version=VERSION,
        files=files,
        replicas=result.replicas,
        workers=workers,
        wall_clock_seconds=round(time.perf_counter() - start, 3),
        directory=run_dir,
    )
    manifest.write()
    logging.info("Wrote %d file(s) and %s to %s", len(files), MANIFEST_NAME, run_dir)
    return manifest


@dataclass
class ReplayReport:
    verdicts: Dict[str, str]

    @property
    def passed(self) -> bool:
        return all(v == "pass" for v in self.verdicts.values())


def replay(manifest_path: str, workers: int = 1) -> ReplayReport:
    """
    Re-run the manifest's config (with the manifest's seed) into a scratch
    directory and compare checksums per file. A file whose bytes no longer
    match the manifest is reported ``corrupted``; one the rerun reproduces
    differently is reported ``mismatch``.
    """
    manifest = RunManifest.load(manifest_path)
    missing = [n for n in manifest.files if not os.path.isfile(os.path.join(manifest.directory, n))]
    if missing:
        raise ReplayError(f"Missing output file(s): {', '.join(missing)}")
    cfg = ExperimentConfig.from_dict(manifest.config)
    with tempfile.TemporaryDirectory() as scratch:
        fresh = run(cfg.with_overrides(seed=manifest.seed, out=scratch), workers)
    verdicts = {}
    for name, recorded in sorted(manifest.files.items()):
        on_disk = file_sha256(os.path.join(manifest.directory, name))
        if on_disk != recorded:
            verdicts[name] = "corrupted"
        elif fresh.files.get(name) != recorded:
            verdicts[name] = "mismatch"
        else:
            verdicts[name] = "pass"
        if verdicts[name] != "pass":
            logging.warning("Replay: %s is %s", name, verdicts[name])
    return ReplayReport(verdicts)
