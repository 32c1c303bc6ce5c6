# perc_lab/isoperimetry.py

"""
Isoperimetric profiles Phi(n), minimal edge cutsets Phi(W) by max-flow, and
the boundary-versus-diameter check with its level-set diagnostics.
"""

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np
from networkx.algorithms.flow import dinitz

from .constants import DEFAULT_ENUMERATION_BUDGET, PHI_TIER1_NMAX
from .errors import BudgetExhaustedError, PreconditionError
from .graphs import (
    FiniteGraph,
    GraphSpec,
    ball,
    bfs_distances,
    boundaries,
    diameter_pair,
    edge_boundary_size,
    generate,
    interior_radius,
    is_connected,
)


@dataclass
class IsoProfile:
    """Exact Phi(n) table with an optional fitted asymptote a * n^((d-1)/d)."""

    exact: Dict[int, int]
    family: Optional[GraphSpec] = None
    coefficient: Optional[float] = None
    dimension: Optional[int] = None

    @property
    def n_max(self) -> int:
        return max(self.exact) if self.exact else 0

    def exponent(self) -> float:
        d = self.dimension or 1
        return (d - 1) / d

    def phi(self, n: float) -> float:
        """Phi(ceil(n)) from the table, the fitted asymptote beyond it."""
        k = max(1, math.ceil(n - 1e-12))
        if k in self.exact:
            return float(self.exact[k])
        if self.coefficient is None:
            raise PreconditionError(f"n={n} lies outside the exact range and no asymptote is fitted.")
        return self.coefficient * k ** self.exponent()

    def is_nondecreasing(self) -> bool:
        keys = sorted(self.exact)
        return all(self.exact[a] <= self.exact[b] for a, b in zip(keys, keys[1:]))

    def doubling_ok(self) -> bool:
        """Phi(2n) <= 2 Phi(n) wherever both sides are tabulated."""
        return all(self.exact[2 * n] <= 2 * self.exact[n] for n in self.exact if 2 * n in self.exact)

    def rows(self) -> List[Tuple[int, int]]:
        return sorted(self.exact.items())


@dataclass
class CutsetCertificate:
    value: int
    cutset: np.ndarray
    enclosing_set: np.ndarray
    radius: int
    stabilized: bool
    history: List[Tuple[int, int]] = field(default_factory=list)

    def to_dict(self, g: FiniteGraph) -> dict:
        return {
            "value": self.value,
            "R": self.radius,
            "stabilized": self.stabilized,
            "history": [list(h) for h in self.history],
            "cutset": g.edges[self.cutset].tolist(),
        }


@dataclass
class GeometryDiagnostics:
    diameter: int
    base_vertex: int
    boundary_size: int
    f: np.ndarray
    g: np.ndarray
    radii: List[int]
    cover: List[int]
    family: List[int]
    delta: float
    verdict: bool
    quadratic_growth_ok: bool = True
    chain_ok: bool = True
    hypothesis_ok: bool = True

    def intervals(self, ks: Sequence[int]) -> List[Tuple[float, float]]:
        return [(k - self.radii[k] - 0.5, k + self.radii[k] + 0.5) for k in ks]

    def family_length(self) -> float:
        return float(sum(2 * self.radii[k] + 1 for k in self.family))


# ---------------------------------------------------------------------------
# Phi(n)
# ---------------------------------------------------------------------------

def _connected_set_minima(
    g: FiniteGraph, size_cap: int, anchored: bool, budget: int
) -> Dict[int, int]:
    """
    Minimum |boundary| over connected sets of each size containing the origin
    (each set visited once, Redelmeier-style). With ``anchored`` the origin is
    forced to be the smallest vertex id, which counts each translation class
    of a lattice set once.
    """
    origin = g.origin
    degrees = g.degrees()
    neighbors = [set(int(w) for w in g.neighbors(v)) for v in range(g.vertex_count)]
    best: Dict[int, int] = {}
    visits = 0
    cells: List[int] = []
    in_cells = set()

    def grow(untried: List[int], seen: set, boundary: int) -> None:
        nonlocal visits
        untried = list(untried)
        while untried:
            v = untried.pop()
            inside = len(neighbors[v] & in_cells)
            new_boundary = boundary + int(degrees[v]) - 2 * inside
            cells.append(v)
            in_cells.add(v)
            visits += 1
            if visits > budget:
                raise BudgetExhaustedError(f"Connected-set enumeration exceeded {budget} visits.")
            size = len(cells)
            if new_boundary < best.get(size, math.inf):
                best[size] = new_boundary
            if size < size_cap:
                fresh = [w for w in neighbors[v] if w not in seen and (not anchored or w > origin)]
                grow(untried + fresh, seen | set(fresh), new_boundary)
            cells.pop()
            in_cells.discard(v)

    grow([origin], {origin}, 0)
    logging.debug("Connected-set enumeration: %d visits up to size %d", visits, size_cap)
    return best


def _subset_minimum(g: FiniteGraph, n: int, sizes: Sequence[int], budget: int) -> int:
    """Minimum |boundary| over every subset of the radius-n ball containing the origin with a size in ``sizes``."""
    region = np.flatnonzero(ball(g, g.vertex_mask([g.origin]), n))
    local = {int(v): i for i, v in enumerate(region)}
    nbr_bits = []
    for v in region:
        bits = 0
        for w in g.neighbors(v):
            if int(w) in local:
                bits |= 1 << local[int(w)]
        nbr_bits.append(bits)
    degrees = g.degrees()[region]
    origin_local = local[g.origin]
    others = [i for i in range(len(region)) if i != origin_local]
    total = sum(math.comb(len(others), s - 1) for s in sizes)
    if total > budget:
        raise BudgetExhaustedError(f"Subset search at n={n} needs {total} subsets (budget {budget}).")
    best = math.inf
    for s in sizes:
        for combo in itertools.combinations(others, s - 1):
            members = (origin_local,) + combo
            mask = 0
            for i in members:
                mask |= 1 << i
            boundary = sum(int(degrees[i]) - (nbr_bits[i] & mask).bit_count() for i in members)
            best = min(best, boundary)
    return int(best)


def phi_profile(
    spec: GraphSpec,
    n_max: int,
    budget: int = DEFAULT_ENUMERATION_BUDGET,
    tier1_n_max: int = PHI_TIER1_NMAX,
) -> IsoProfile:
    """
    Exact Phi(n) for n = 1..n_max over a vertex-transitive family.

    Connected sets containing the origin are enumerated up to size n_max;
    for small n every subset of the radius-n ball is also searched and the
    two answers must agree. Phi(n) is the minimum over sizes n..n_max.
    """
    if n_max < 1:
        raise PreconditionError("n_max must be at least 1.")
    g = generate(spec.with_extent(n_max + 1))
    anchored = spec.kind == "zd_box"
    minima = _connected_set_minima(g, n_max, anchored, budget)
    exact: Dict[int, int] = {}
    running = math.inf
    for n in range(n_max, 0, -1):
        running = min(running, minima.get(n, math.inf))
        exact[n] = int(running)
    exact = dict(sorted(exact.items()))

    for n in range(1, min(tier1_n_max, n_max - 1) + 1):
        try:
            truth = _subset_minimum(g, n, (n, n + 1), budget)
        except BudgetExhaustedError as exc:
            logging.info("Subset cross-check stopped at n=%d: %s", n, exc)
            break
        tier2 = min(minima[n], minima[n + 1])
        if truth != tier2:
            raise PreconditionError(
                f"Subset search gives {truth} but connected sets give {tier2} at n={n}."
            )
    profile = IsoProfile(exact, family=spec, dimension=spec.d if spec.kind != "tree" else None)
    if not profile.is_nondecreasing():
        raise PreconditionError("Computed profile is not nondecreasing.")
    logging.info("Phi profile for %s up to n=%d: %s", spec.kind, n_max, profile.rows())
    return profile


def fit_asymptotic(profile: IsoProfile, d: int) -> float:
    """Least-squares coefficient a for Phi(n) ~ a * n^((d-1)/d) over the exact range."""
    if not profile.exact:
        raise PreconditionError("Cannot fit an empty profile.")
    ns = np.array(sorted(profile.exact), dtype=float)
    phis = np.array([profile.exact[int(n)] for n in ns], dtype=float)
    x = ns ** ((d - 1) / d)
    coefficient = float(np.dot(x, phis) / np.dot(x, x))
    profile.coefficient = coefficient
    profile.dimension = d
    return coefficient


# ---------------------------------------------------------------------------
# Phi(W)
# ---------------------------------------------------------------------------

def _min_cut(g: FiniteGraph, w: np.ndarray, dist: np.ndarray, radius: int, flow_func) -> Tuple[int, np.ndarray]:
    region = (dist >= 0) & (dist <= radius)
    shell = dist == radius
    net = nx.DiGraph()
    inner = g.edges[region[g.edges[:, 0]] & region[g.edges[:, 1]]]
    for u, v in inner:
        net.add_edge(int(u), int(v), capacity=1)
        net.add_edge(int(v), int(u), capacity=1)
    # edges without a capacity attribute are treated as infinite
    for v in np.flatnonzero(w):
        net.add_edge("source", int(v))
    for v in np.flatnonzero(shell):
        net.add_edge(int(v), "sink")
    value, (source_side, _) = nx.minimum_cut(net, "source", "sink", flow_func=flow_func)
    enclosing = g.vertex_mask([v for v in source_side if v != "source"])
    return int(round(value)), enclosing


def phi_of_set(
    g: FiniteGraph,
    w: np.ndarray,
    r_schedule: Optional[Sequence[int]] = None,
    flow_func: Callable = dinitz,
) -> CutsetCertificate:
    """
    Smallest edge cutset separating ``w`` from the truncation shell.

    The shell at radius R is the sphere of radius R around the origin. By
    default R starts at radius(W) + 2 and doubles while the ball stays a
    faithful lattice ball; the value is flagged stabilized once two
    consecutive radii agree.
    """
    w = np.asarray(w, dtype=bool)
    if not w.any():
        raise PreconditionError("W must be nonempty.")
    dist = bfs_distances(g, g.vertex_mask([g.origin]))
    if np.any(dist[w] < 0):
        raise PreconditionError("W is not reachable from the origin.")
    w_radius = int(dist[w].max())
    limit = interior_radius(g)
    if r_schedule is None:
        r_schedule = []
        r = w_radius + 2
        while r <= limit:
            r_schedule.append(r)
            r *= 2
        if not r_schedule:
            r_schedule = [limit]
    history: List[Tuple[int, int]] = []
    enclosing = None
    for radius in r_schedule:
        if radius <= w_radius or radius > int(dist.max()):
            raise PreconditionError(f"W touches the truncation shell at R={radius}.")
        value, enclosing = _min_cut(g, w, dist, radius, flow_func)
        history.append((radius, value))
        if len(history) >= 2 and history[-1][1] == history[-2][1]:
            break
    bnd = boundaries(g, enclosing)
    if int(np.count_nonzero(bnd.edge_boundary)) != history[-1][1]:
        raise PreconditionError("Extracted cutset size differs from the max-flow value.")
    stabilized = len(history) >= 2 and history[-1][1] == history[-2][1]
    if not stabilized:
        logging.warning("Phi(W) did not stabilize over radii %s", [h[0] for h in history])
    return CutsetCertificate(history[-1][1], bnd.edge_boundary, enclosing, history[-1][0], stabilized, history)


# ---------------------------------------------------------------------------
# Boundary versus diameter
# ---------------------------------------------------------------------------

def geometry_check(
    g: FiniteGraph, a: np.ndarray, eps: float, profile: Optional[IsoProfile] = None
) -> GeometryDiagnostics:
    """
    Check |∂A| >= delta * diam(A) with delta = eps^2 / (48 d), populating the
    level-set tables f(k, r), g(k, r), the radii r(k) and the disjoint
    interval family the bound is assembled from.
    """
    a = np.asarray(a, dtype=bool)
    if not is_connected(g, a):
        raise PreconditionError("geometry_check needs a connected set.")
    if eps >= 1:
        logging.warning("eps=%.3g >= 1; the level-set argument assumes eps < 1.", eps)
    d = g.degree_bound
    delta = eps * eps / (48.0 * d)
    boundary_size = edge_boundary_size(g, a)

    hypothesis_ok = True
    if profile is not None:
        bad = [n for n, phi in profile.exact.items() if phi < eps * math.sqrt(n)]
        if bad:
            hypothesis_ok = False
            logging.warning("Profile violates Phi(n) >= eps*sqrt(n) at n=%s", bad)

    # levels are distances from an end of a diameter pair, so every level 0..m is hit
    m, base = diameter_pair(g, a)
    if m == 0:
        return GeometryDiagnostics(0, base, boundary_size, np.zeros((1, 1)), np.zeros((1, 1)),
                                   [0], [0], [0], delta, True, True, True, hypothesis_ok)

    dist = bfs_distances(g, g.vertex_mask([base]), max_depth=m)
    out_degree = np.zeros(g.vertex_count, dtype=np.int64)
    crossing = g.edges[a[g.edges[:, 0]] != a[g.edges[:, 1]]]
    inside_end = np.where(a[crossing[:, 0]], crossing[:, 0], crossing[:, 1])
    np.add.at(out_degree, inside_end, 1)

    members = np.flatnonzero(a)
    level_sizes = np.bincount(dist[members], minlength=m + 1)[: m + 1]
    level_out = np.bincount(dist[members], weights=out_degree[members], minlength=m + 1)[: m + 1]
    size_prefix = np.concatenate([[0], np.cumsum(level_sizes)])
    out_prefix = np.concatenate([[0], np.cumsum(level_out)])

    f = np.zeros((m + 1, m + 1), dtype=np.int64)
    gt = np.zeros((m + 1, m + 1), dtype=np.int64)
    for k in range(m + 1):
        for r in range(m + 1):
            lo, hi = max(0, k - r), min(m, k + r)
            f[k, r] = size_prefix[hi + 1] - size_prefix[lo]
            gt[k, r] = int(out_prefix[hi + 1] - out_prefix[lo])

    radii = []
    for k in range(m + 1):
        hits = np.flatnonzero(gt[k] >= (eps / 2.0) * np.sqrt(f[k]))
        if len(hits):
            radii.append(int(hits[0]))
        else:
            hypothesis_ok = False
            radii.append(m)

    growth_floor = (eps / (6.0 * d)) ** 2
    quadratic_ok = all(
        f[k, r] >= growth_floor * (r + 1) ** 2 for k in range(m + 1) for r in range(radii[k] + 1)
    )

    cover = []
    uncovered = 0
    while uncovered <= m:
        candidates = [k for k in range(m + 1) if k - radii[k] <= uncovered]
        pick = max(candidates, key=lambda k: (k + radii[k], -k))
        cover.append(pick)
        uncovered = pick + radii[pick] + 1
    evens, odds = cover[0::2], cover[1::2]
    length = lambda ks: sum(2 * radii[k] + 1 for k in ks)
    family = evens if length(evens) >= length(odds) else odds

    chain_ok = sum(int(gt[k, radii[k]]) for k in family) <= boundary_size
    verdict = boundary_size >= delta * m
    diagnostics = GeometryDiagnostics(m, base, boundary_size, f, gt, radii, cover, family, delta,
                                      verdict, quadratic_ok, chain_ok, hypothesis_ok)
    logging.debug("geometry_check: m=%d |∂A|=%d delta=%.3g verdict=%s", m, boundary_size, delta, verdict)
    return diagnostics
