# perc_lab/renormalization.py

"""
Block events on Z^d and the coarse-grained field built from them: block
connection and uniqueness probabilities, the dependent coarse field on a
two-dimensional window, the density pigeonhole scan, slab crossings and the
half-space touch fraction.

Balls here are graph balls of Z^d (l1 balls), computed from coordinates.
"""

import logging
import math
from dataclasses import dataclass
from functools import lru_cache, partial
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .constants import MAX_FINE_VERTICES
from .errors import BudgetExhaustedError, GeometryError, PreconditionError
from .graphs import FiniteGraph, GraphSpec, generate, interior_edges
from .percolation import ClusterIndex, component_labels, left_right_crossing, reachable, restrict_edges
from .rng import EdgeLabels, stream_id
from .stats import Estimate, replicate


def c_from_delta(delta: float) -> int:
    """Spread constant C = 2 * ceil(1/delta)."""
    if not 0 < delta < 1:
        raise PreconditionError("delta must lie in (0, 1).")
    return 2 * math.ceil(1.0 / delta)


@dataclass(frozen=True)
class BlockParams:
    """
    Block scales. ``eta_prime`` is the rigorous dependence tolerance
    eps^(C^2) / C; practical runs report it without using it.
    """

    d: int
    k: int
    n: int
    C: int
    eps: float = 0.1
    mode: str = "practical"

    def validate(self, scan: bool = False) -> None:
        if self.d < 2:
            raise PreconditionError("Block events need d >= 2.")
        if int(self.C) != self.C or self.C < 2:
            raise PreconditionError("C must be an integer >= 2.")
        if self.k < 1:
            raise PreconditionError("k must be at least 1.")
        if scan and self.n < 3 * self.k:
            raise PreconditionError("Density scans need n >= 3k.")

    @property
    def eta_prime(self) -> float:
        return self.eps ** (self.C ** 2) / self.C

    def connection_floor(self) -> float:
        """Lower bound 1 - (C eta')^(1/C^2) on the best pair connection, from the square-root trick."""
        return 1.0 - (self.C * self.eta_prime) ** (1.0 / self.C ** 2)

    def to_dict(self) -> dict:
        out = dict(vars(self))
        out["eta_prime"] = self.eta_prime
        out["connection_floor"] = self.connection_floor()
        return out


# ---------------------------------------------------------------------------
# Fine lattices
# ---------------------------------------------------------------------------

@lru_cache(maxsize=8)
def _box(d: int, radius: int) -> FiniteGraph:
    side = 2 * radius + 1
    if side ** d > MAX_FINE_VERTICES:
        raise BudgetExhaustedError(f"A Z^{d} box of side {side} exceeds {MAX_FINE_VERTICES} vertices.")
    return generate(GraphSpec("zd_box", d=d, side=side))


@lru_cache(maxsize=8)
def _slab(d: int, thickness: int, window: int) -> FiniteGraph:
    size = window * window * (2 * thickness + 1) ** (d - 2)
    if size > MAX_FINE_VERTICES:
        raise BudgetExhaustedError(f"A slab window of {size} vertices exceeds {MAX_FINE_VERTICES}.")
    return generate(GraphSpec("slab", d=d, thickness=thickness, window=(window, window)))


def _l1(g: FiniteGraph, center: Sequence[int]) -> np.ndarray:
    return np.abs(g.coords - np.asarray(center, dtype=np.int64)).sum(axis=1)


def l1_ball(g: FiniteGraph, center: Sequence[int], radius: int) -> np.ndarray:
    return _l1(g, center) <= radius


def _axis_point(d: int, x: int) -> np.ndarray:
    point = np.zeros(d, dtype=np.int64)
    point[0] = x
    return point


# ---------------------------------------------------------------------------
# Block events
# ---------------------------------------------------------------------------

def _block_sample(g, source, target, domain, p, seed, i):
    labels = EdgeLabels(g.edge_count, seed, stream_id("block", i))
    return bool(np.any(reachable(g, source, labels.open_below(p, domain)) & target))


def block_connection_prob(
    p: float, k: int, n: int, C: int, d: int, samples: int, seed: int, workers: int = 1
) -> Estimate:
    """Estimate P_p(B_k <-> B_k(n) inside B_{Cn}), with B_k(n) centred at (n, 0, ..., 0)."""
    BlockParams(d, k, n, C).validate()
    if n + k > C * n:
        raise GeometryError(f"B_{k}(n) is not inside B_{{Cn}} for n={n}, C={C}.")
    g = _box(d, C * n)
    region = l1_ball(g, _axis_point(d, 0), C * n)
    source = l1_ball(g, _axis_point(d, 0), k)
    target = l1_ball(g, _axis_point(d, n), k)
    fn = partial(_block_sample, g, source, target, interior_edges(g, region), p, seed)
    return Estimate(int(sum(replicate(fn, samples, workers))), samples)


def _uniqueness_holds(g, labels, seed_mask, boundary_mask) -> bool:
    shared = np.intersect1d(np.unique(labels[seed_mask]), np.unique(labels[boundary_mask]))
    return shared.size <= 1


def _uniqueness_sample(g, seed_mask, boundary_mask, domain, p, seed, i):
    labels = EdgeLabels(g.edge_count, seed, stream_id("uniqueness", i))
    comp = component_labels(g, labels.open_below(p, domain))
    return _uniqueness_holds(g, comp, seed_mask, boundary_mask)


def uniqueness_event_prob(
    p: float, k: int, n0: int, samples: int, seed: int, d: int = 3, workers: int = 1
) -> Estimate:
    """
    Frequency of U: at most one cluster of the configuration restricted to the
    edges of B_{n0} meets both B_k and the inner boundary of B_{n0}.
    """
    if not k < n0:
        raise GeometryError("The uniqueness event needs k < n0.")
    g = _box(d, n0)
    dist = _l1(g, _axis_point(d, 0))
    fn = partial(_uniqueness_sample, g, dist <= k, dist == n0, interior_edges(g, dist <= n0), p, seed)
    return Estimate(int(sum(replicate(fn, samples, workers))), samples)


# ---------------------------------------------------------------------------
# Coarse field
# ---------------------------------------------------------------------------

@dataclass
class CoarseLayout:
    """Fine lattice and the per-site masks the coarse indicators read."""

    graph: FiniteGraph
    coarse: FiniteGraph
    params: BlockParams
    n0: int
    seeds: List[np.ndarray]
    regions: List[np.ndarray]
    unique_regions: List[np.ndarray]
    unique_boundaries: List[np.ndarray]

    def support(self, coarse_edge: int) -> np.ndarray:
        """Fine edges that the indicator of ``coarse_edge`` depends on."""
        a, b = self.coarse.edges[coarse_edge]
        region = self.regions[a] | self.unique_regions[a] | self.unique_regions[b]
        return interior_edges(self.graph, region)


def coarse_layout(d: int, k: int, n: int, C: int, window: int, n0: Optional[int] = None) -> CoarseLayout:
    """
    Place coarse site u of a ``window`` x ``window`` grid at the fine point
    nu = (n u_1, n u_2, 0, ..., 0), shifted so every block fits.
    """
    params = BlockParams(d, k, n, C)
    params.validate()
    n0 = n if n0 is None else n0
    if not k < n0:
        raise GeometryError("The uniqueness event needs k < n0.")
    if n + k > C * n:
        raise GeometryError("Neighbouring seed boxes must lie inside B_{Cn}.")
    if window < 2:
        raise PreconditionError("The coarse window needs at least 2 x 2 sites.")
    margin = max(C * n, n0)
    side = (window - 1) * n + 2 * margin + 1
    g = _slab(d, max(margin, 1), side)
    coarse = generate(GraphSpec("zd_box", d=2, side=window))
    base = g.coords[:, :2].min(axis=0) + margin
    seeds, regions, u_regions, u_bounds = [], [], [], []
    for a in range(coarse.vertex_count):
        u = np.array(np.unravel_index(a, (window, window)))
        center = np.zeros(d, dtype=np.int64)
        center[:2] = base + n * u
        dist = _l1(g, center)
        seeds.append(dist <= k)
        regions.append(dist <= C * n)
        u_regions.append(dist <= n0)
        u_bounds.append(dist == n0)
    logging.debug("Coarse layout: %d fine vertices, %d coarse edges", g.vertex_count, coarse.edge_count)
    return CoarseLayout(g, coarse, params, n0, seeds, regions, u_regions, u_bounds)


def coarse_indicators(layout: CoarseLayout, opened: np.ndarray) -> np.ndarray:
    """
    zeta(uv) for every coarse edge: B_k(nu) joined to B_k(nv) inside
    nu + B_{Cn}, and the uniqueness event at both nu and nv.
    """
    g = layout.graph
    sites = layout.coarse.vertex_count
    unique = np.zeros(sites, dtype=bool)
    for a in range(sites):
        labels = component_labels(g, restrict_edges(g, opened, layout.unique_regions[a]))
        unique[a] = _uniqueness_holds(g, labels, layout.seeds[a], layout.unique_boundaries[a])
    region_labels: Dict[int, np.ndarray] = {}
    out = np.zeros(layout.coarse.edge_count, dtype=bool)
    for e, (a, b) in enumerate(layout.coarse.edges):
        if not (unique[a] and unique[b]):
            continue
        if a not in region_labels:
            region_labels[a] = component_labels(g, restrict_edges(g, opened, layout.regions[a]))
        labels = region_labels[a]
        out[e] = np.intersect1d(labels[layout.seeds[a]], labels[layout.seeds[b]]).size > 0
    return out


def _coarse_sample(layout, p, seed, i):
    labels = EdgeLabels(layout.graph.edge_count, seed, stream_id("coarse", i))
    return coarse_indicators(layout, labels.open_below(p))


def _distance_classes(coarse: FiniteGraph, C: int) -> Dict[str, Tuple[np.ndarray, np.ndarray]]:
    ends = coarse.coords[coarse.edges]
    m = coarse.edge_count
    first, second = np.triu_indices(m, k=1)
    gaps = np.abs(ends[first][:, :, None, :] - ends[second][:, None, :, :]).sum(axis=-1)
    dist = gaps.reshape(len(first), -1).min(axis=1)
    bins = {
        "<=1": dist <= 1,
        "2": dist == 2,
        f"3..{3 * C}": (dist >= 3) & (dist <= 3 * C),
        f">{3 * C}": dist > 3 * C,
    }
    return {name: (first[sel], second[sel]) for name, sel in bins.items()}


@dataclass
class CoarseConfig:
    """Coarse indicators per sample plus marginal, dependence and connectivity diagnostics."""

    layout: CoarseLayout
    indicators: np.ndarray
    covariance: Dict[str, Tuple[float, float, int]]
    crossing: Estimate
    giant_fraction: float

    @property
    def samples(self) -> int:
        return self.indicators.shape[0]

    @property
    def marginals(self) -> List[Estimate]:
        return [Estimate(int(c), self.samples) for c in self.indicators.sum(axis=0)]

    @property
    def min_marginal(self) -> float:
        return min(e.value for e in self.marginals)

    def far_covariance_ok(self, sigmas: float = 4.0) -> bool:
        name = f">{3 * self.layout.params.C}"
        cov, sigma, pairs = self.covariance[name]
        return pairs == 0 or abs(cov) <= sigmas * sigma + 1e-12

    def snapshot(self, sample: int = 0) -> dict:
        """One sample of the coarse field as a JSON-ready edge list on window coordinates."""
        coarse = self.layout.coarse
        w = coarse.shape[0]
        edges = []
        for e, (a, b) in enumerate(coarse.edges):
            edges.append([
                [int(x) for x in np.unravel_index(a, (w, w))],
                [int(x) for x in np.unravel_index(b, (w, w))],
                int(self.indicators[sample, e]),
            ])
        return {"window": w, "sample": sample, "edges": edges}

    def to_dict(self) -> dict:
        return {
            "params": self.layout.params.to_dict(),
            "n0": self.layout.n0,
            "samples": self.samples,
            "min_marginal": self.min_marginal,
            "mean_marginal": float(self.indicators.mean()) if self.indicators.size else 0.0,
            "covariance": {k: {"covariance": c, "sigma": s, "pairs": n} for k, (c, s, n) in self.covariance.items()},
            "far_covariance_ok": self.far_covariance_ok(),
            "crossing": self.crossing.to_dict(),
            "giant_fraction": self.giant_fraction,
        }


def _pooled_covariance(x: np.ndarray, pairs: Tuple[np.ndarray, np.ndarray]) -> Tuple[float, float, int]:
    first, second = pairs
    if len(first) == 0 or x.shape[0] < 2:
        return 0.0, 0.0, int(len(first))
    centred = x - x.mean(axis=0)
    per_sample = (centred[:, first] * centred[:, second]).mean(axis=1)
    sigma = float(per_sample.std(ddof=1) / math.sqrt(x.shape[0]))
    return float(per_sample.mean()), sigma, int(len(first))


def coarse_grain(
    p: float, k: int, n: int, C: int, window: int, samples: int, seed: int,
    n0: Optional[int] = None, d: int = 3, workers: int = 1,
) -> CoarseConfig:
    """One fine sample per coarse sample; returns the coarse field and its diagnostics."""
    layout = coarse_layout(d, k, n, C, window, n0)
    rows = replicate(partial(_coarse_sample, layout, p, seed), samples, workers)
    indicators = np.array(rows, dtype=bool).reshape(samples, layout.coarse.edge_count)
    x = indicators.astype(np.float64)
    covariance = {name: _pooled_covariance(x, pairs) for name, pairs in _distance_classes(layout.coarse, C).items()}
    crossings, giant = 0, 0.0
    for row in indicators:
        crossings += left_right_crossing(layout.coarse, row)
        giant += ClusterIndex(layout.coarse, row).component_sizes().max() / layout.coarse.vertex_count
    return CoarseConfig(layout, indicators, covariance, Estimate(int(crossings), samples),
                        giant / samples if samples else 0.0)


# ---------------------------------------------------------------------------
# Density pigeonhole scan
# ---------------------------------------------------------------------------

@dataclass
class DensityScanRow:
    n: int
    C: int
    densities: np.ndarray
    dense: List[Estimate]
    all_dense: Estimate
    intersecting: Estimate
    violations: int

    def rows(self) -> List[Tuple]:
        mean = self.densities.mean(axis=0)
        return [(self.n, i, float(mean[i]), self.dense[i].value, self.dense[i].halfwidth, self.densities.shape[0])
                for i in range(self.C)]


def _density_sample(g, regions, seeds, big, p, delta, seed, i):
    labels = EdgeLabels(g.edge_count, seed, stream_id("density", i))
    opened = labels.open_below(p)
    total = int(big.sum())
    cover = np.zeros(g.vertex_count, dtype=np.int64)
    densities = []
    for region, source in zip(regions, seeds):
        cluster = reachable(g, source, opened, region) & big
        densities.append(cluster.sum() / total)
        cover += cluster
    densities = np.array(densities)
    all_dense = bool(np.all(densities > delta))
    intersecting = bool(cover.max() >= 2)
    return densities, all_dense, intersecting


def gm_density_scan(
    p: float, k: int, n_grid: Sequence[int], delta: float, samples: int, seed: int,
    d: int = 3, workers: int = 1,
) -> List[DensityScanRow]:
    """
    For each n: densities |C_i| / |B_{2Cn}| of C_i = {x : x <-> B_k(ni) inside
    B_{Cn}(ni)}, i < C = 2 ceil(1/delta), with the pathwise check that all
    densities above delta force two of the C_i to intersect.
    """
    C = c_from_delta(delta)
    out = []
    for n in n_grid:
        BlockParams(d, k, n, C).validate(scan=True)
        g = _box(d, 2 * C * n)
        big = l1_ball(g, _axis_point(d, 0), 2 * C * n)
        regions = [l1_ball(g, _axis_point(d, n * i), C * n) for i in range(C)]
        seeds = [l1_ball(g, _axis_point(d, n * i), k) for i in range(C)]
        results = replicate(partial(_density_sample, g, regions, seeds, big, p, delta, seed), samples, workers)
        densities = np.array([r[0] for r in results]).reshape(samples, C)
        all_dense = [r[1] for r in results]
        intersecting = [r[2] for r in results]
        violations = sum(1 for a, b in zip(all_dense, intersecting) if a and not b)
        if violations:
            logging.error("Density pigeonhole violated in %d samples at n=%d", violations, n)
        out.append(DensityScanRow(
            n, C, densities,
            [Estimate(int(np.count_nonzero(densities[:, i] > delta)), samples) for i in range(C)],
            Estimate(sum(all_dense), samples), Estimate(sum(intersecting), samples), violations,
        ))
    return out


# ---------------------------------------------------------------------------
# Slabs and half-spaces
# ---------------------------------------------------------------------------

@dataclass
class SlabDiagnostics:
    thickness: int
    lengths: List[int]
    crossings: List[Estimate]
    thicker: List[Estimate]
    monotone_violations: int

    def verdicts(self) -> List[str]:
        """Trend between consecutive lengths: rising, flat (within noise) or falling."""
        out = []
        for a, b in zip(self.crossings, self.crossings[1:]):
            gap = b.value - a.value
            noise = a.halfwidth + b.halfwidth
            out.append("flat" if abs(gap) <= noise else ("rising" if gap > 0 else "falling"))
        return out

    def rows(self) -> List[Tuple]:
        return [(self.thickness, L, e.value, e.halfwidth, t.value, e.samples)
                for L, e, t in zip(self.lengths, self.crossings, self.thicker)]


def _slab_sample(g, thin, p, seed, length, i):
    opened = EdgeLabels(g.edge_count, seed, stream_id("slab", length, i)).open_below(p)
    return left_right_crossing(g, opened, thin), left_right_crossing(g, opened)


def slab_crossing(
    d: int, ell: int, p: float, lengths: Sequence[int], samples: int, seed: int, workers: int = 1
) -> SlabDiagnostics:
    """
    Left-right crossing of an L x L window of the slab Z^2 x {-ell..ell}^(d-2),
    together with the same event in the thickness ell+1 slab on shared labels.
    """
    if ell < 1:
        raise PreconditionError("Slab thickness must be at least 1.")
    if any(b <= a for a, b in zip(lengths, lengths[1:])):
        raise PreconditionError("Window lengths must increase.")
    crossings, thicker, violations = [], [], 0
    for length in lengths:
        g = _slab(d, ell + 1, length)
        thin = np.all(np.abs(g.coords[:, 2:]) <= ell, axis=1)
        results = replicate(partial(_slab_sample, g, thin, p, seed, length), samples, workers)
        violations += sum(1 for a, b in results if a and not b)
        crossings.append(Estimate(sum(a for a, _ in results), samples))
        thicker.append(Estimate(sum(b for _, b in results), samples))
    return SlabDiagnostics(ell, list(lengths), crossings, thicker, violations)


@dataclass
class HalfSpaceReport:
    n: int
    c0: float
    fractions: np.ndarray
    above: Estimate
    half_space: bool

    @property
    def mean(self) -> float:
        return float(self.fractions.mean()) if self.fractions.size else 0.0

    @property
    def sigma(self) -> float:
        if self.fractions.size < 2:
            return 0.0
        return float(self.fractions.std(ddof=1) / math.sqrt(self.fractions.size))

    def to_dict(self) -> dict:
        return {"n": self.n, "c0": self.c0, "half_space": self.half_space, "mean_fraction": self.mean,
                "sigma": self.sigma, "above_c0": self.above.to_dict()}


def _half_space_sample(g, source, targets, domain, region, p, seed, i):
    opened = EdgeLabels(g.edge_count, seed, stream_id("half-space", i)).open_below(p, domain)
    hit = reachable(g, source, opened, region)
    return np.count_nonzero(hit & targets) / np.count_nonzero(targets)


def half_space_touch_fraction(
    d: int, p: float, n: int, samples: int, seed: int, c0: float = 0.1,
    half_space: bool = False, workers: int = 1,
) -> HalfSpaceReport:
    """
    Mean fraction of the inner boundary of B_{2n} joined to B_n inside B_{2n},
    and the frequency of that fraction reaching ``c0``. With ``half_space``
    the region is cut to {x_1 >= 0}.
    """
    if n < 1:
        raise PreconditionError("n must be positive.")
    g = _box(d, 2 * n)
    dist = _l1(g, _axis_point(d, 0))
    region = dist <= 2 * n
    if half_space:
        region &= g.coords[:, 0] >= 0
    source = region & (dist <= n)
    targets = region & (dist == 2 * n)
    fn = partial(_half_space_sample, g, source, targets, interior_edges(g, region), region, p, seed)
    fractions = np.array(replicate(fn, samples, workers), dtype=np.float64)
    above = Estimate(int(np.count_nonzero(fractions >= c0)), samples)
    return HalfSpaceReport(n, c0, fractions, above, half_space)
