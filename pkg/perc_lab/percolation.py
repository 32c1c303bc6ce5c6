# perc_lab/percolation.py

"""
Coupled bond percolation: threshold configurations, the three-layer
(omega, xi, zeta) decomposition, and cluster computation.
"""

import itertools
import logging
import math
from dataclasses import dataclass
from typing import Callable, List, Optional

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .constants import ETA_TOLERANCE, EXACT_ENUMERATION_MAX_EDGES
from .errors import BudgetExhaustedError, PreconditionError
from .graphs import FiniteGraph
from .rng import EdgeLabels, stream_id


def eta_for(p: float, q: float) -> float:
    """Sprinkling density eta with (1-p)(1-eta)^2 = 1-q."""
    if not 0.0 <= p <= 1.0 or not 0.0 <= q <= 1.0:
        raise PreconditionError("p and q must lie in [0, 1].")
    if q >= 1.0:
        raise PreconditionError("q = 1 leaves no room for a sprinkling layer.")
    if q < p:
        raise PreconditionError(f"Need p <= q, got p={p}, q={q}.")
    eta = 1.0 - math.sqrt((1.0 - q) / (1.0 - p))
    eta = min(max(eta, 0.0), 1.0)
    residual = abs((1.0 - p) * (1.0 - eta) ** 2 - (1.0 - q))
    if residual > ETA_TOLERANCE:
        raise PreconditionError(f"eta residual {residual:.3g} exceeds tolerance.")
    return eta


@dataclass(frozen=True)
class Config:
    """Open-edge mask tagged with its density."""

    open: np.ndarray
    p: float

    @property
    def open_count(self) -> int:
        return int(np.count_nonzero(self.open))


@dataclass(frozen=True)
class LayeredSample:
    """Three independent layers on a common domain: omega at p, xi and zeta at eta."""

    omega: Config
    xi: Config
    zeta: Config
    domain: np.ndarray
    p: float
    q: float
    eta: float

    def union(self) -> np.ndarray:
        return self.omega.open | self.xi.open | self.zeta.open


def sample_config(labels: EdgeLabels, p: float, domain: Optional[np.ndarray] = None) -> Config:
    """Edges of ``domain`` whose label is below ``p``; monotone in ``p``."""
    if not 0.0 <= p <= 1.0:
        raise PreconditionError(f"Density {p} outside [0, 1].")
    return Config(labels.open_below(p, domain), p)


def sample_layers(
    g: FiniteGraph,
    p: float,
    q: float,
    domain: Optional[np.ndarray],
    seed: int,
    sample_index: int = 0,
) -> LayeredSample:
    """Draw (omega, xi, zeta) from three disjoint label streams."""
    eta = eta_for(p, q)
    domain = g.all_edges() if domain is None else domain
    layers = []
    for name, density in (("omega", p), ("xi", eta), ("zeta", eta)):
        labels = EdgeLabels(g.edge_count, seed, stream_id(f"layer-{name}", sample_index))
        layers.append(sample_config(labels, density, domain))
    return LayeredSample(layers[0], layers[1], layers[2], domain, p, q, eta)


class UnionFind:
    """Disjoint sets with path halving and union by rank."""

    def __init__(self, n: int):
        self.parent = list(range(n))
        self.rank = [0] * n

    def find(self, x: int) -> int:
        parent = self.parent
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if self.rank[ra] < self.rank[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        if self.rank[ra] == self.rank[rb]:
            self.rank[ra] += 1
        return True


class ClusterIndex:
    """
    Components of ``(V, open ∩ restriction)`` built with union-find.

    ``representatives[v]`` is the root of ``v``; ``sizes[root]`` the size of its component.
    """

    def __init__(self, g: FiniteGraph, edge_mask: np.ndarray):
        self.graph = g
        self.uf = UnionFind(g.vertex_count)
        for u, v in g.edges[edge_mask]:
            self.uf.union(int(u), int(v))
        self.representatives = np.fromiter(
            (self.uf.find(v) for v in range(g.vertex_count)), dtype=np.int64, count=g.vertex_count
        )
        self.sizes = np.bincount(self.representatives, minlength=g.vertex_count)

    def find(self, v: int) -> int:
        return int(self.representatives[v])

    def same(self, u: int, v: int) -> bool:
        return self.representatives[u] == self.representatives[v]

    def size_of(self, v: int) -> int:
        return int(self.sizes[self.representatives[v]])

    def cluster_of(self, s: np.ndarray) -> np.ndarray:
        """Union of the components meeting ``s`` (always contains ``s``)."""
        roots = np.unique(self.representatives[s])
        return np.isin(self.representatives, roots)

    def component_sizes(self) -> np.ndarray:
        return self.sizes[self.sizes > 0]


def clusters(g: FiniteGraph, config: Config, restriction: Optional[np.ndarray] = None) -> ClusterIndex:
    """ClusterIndex of ``config`` restricted to the edge mask ``restriction``."""
    mask = config.open if restriction is None else config.open & restriction
    return ClusterIndex(g, mask)


def component_labels(g: FiniteGraph, edge_mask: np.ndarray) -> np.ndarray:
    """Component label per vertex of ``(V, edge_mask)`` via scipy's csgraph."""
    chosen = g.edges[edge_mask]
    n = g.vertex_count
    adj = coo_matrix(
        (np.ones(len(chosen), dtype=np.int8), (chosen[:, 0], chosen[:, 1])), shape=(n, n)
    )
    _, labels = connected_components(adj, directed=False)
    return labels


def restrict_edges(g: FiniteGraph, edge_mask: np.ndarray, allowed: Optional[np.ndarray]) -> np.ndarray:
    """Edges of ``edge_mask`` with both endpoints in ``allowed``."""
    if allowed is None:
        return edge_mask
    return edge_mask & allowed[g.edges[:, 0]] & allowed[g.edges[:, 1]]


def reachable(
    g: FiniteGraph,
    sources: np.ndarray,
    edge_mask: np.ndarray,
    allowed: Optional[np.ndarray] = None,
    labels: Optional[np.ndarray] = None,
) -> np.ndarray:
    """
    Vertices joined to ``sources`` by edges of ``edge_mask`` inside ``allowed``.

    Sources outside ``allowed`` are dropped. ``labels`` may carry precomputed
    component labels of the restricted edge set.
    """
    src = sources if allowed is None else sources & allowed
    if not src.any():
        return np.zeros(g.vertex_count, dtype=bool)
    if labels is None:
        labels = component_labels(g, restrict_edges(g, edge_mask, allowed))
    hit = np.isin(labels, np.unique(labels[src]))
    if allowed is not None:
        hit &= allowed
    return hit


def connected(g: FiniteGraph, left: np.ndarray, right: np.ndarray, via: np.ndarray) -> bool:
    """True iff some vertex of ``left`` joins some vertex of ``right`` through ``via``."""
    if np.any(left & right):
        return True
    if not left.any() or not right.any():
        return False
    labels = component_labels(g, via)
    return bool(np.intersect1d(labels[left], labels[right]).size)


def edge_connected_to(
    g: FiniteGraph,
    e: int,
    target: np.ndarray,
    via: np.ndarray,
    forbidden_vertices: Optional[np.ndarray] = None,
) -> bool:
    """
    True iff an endpoint of edge ``e`` reaches ``target`` through ``via`` in
    the graph with ``forbidden_vertices`` removed.
    """
    allowed = g.all_vertices() if forbidden_vertices is None else ~forbidden_vertices
    ends = g.edges[e]
    starts = g.vertex_mask([v for v in ends if allowed[v]])
    if not starts.any():
        return False
    if np.any(starts & target):
        return True
    return bool(np.any(reachable(g, starts, via, allowed) & target))


def left_right_crossing(
    g: FiniteGraph, edge_mask: np.ndarray, allowed: Optional[np.ndarray] = None, axis: int = 0
) -> bool:
    """True iff the open subgraph joins the two extreme faces along ``axis``."""
    if g.coords is None:
        raise PreconditionError("Crossing events need a lattice embedding.")
    x = g.coords[:, axis]
    region = g.all_vertices() if allowed is None else allowed
    lo = region & (x == x[region].min())
    hi = region & (x == x[region].max())
    return bool(np.any(reachable(g, lo, edge_mask, region) & hi))


# ---------------------------------------------------------------------------
# Exact enumeration harness
# ---------------------------------------------------------------------------

def exact_expectation(
    g: FiniteGraph,
    p: float,
    functional: Callable[[np.ndarray], float],
    domain: Optional[np.ndarray] = None,
) -> float:
    """
    E_p[functional(open mask)] by a weighted sum over every configuration of
    ``domain`` (edges outside ``domain`` stay closed).
    """
    domain = g.all_edges() if domain is None else domain
    idx = np.flatnonzero(domain)
    if len(idx) > EXACT_ENUMERATION_MAX_EDGES:
        raise BudgetExhaustedError(
            f"Exact enumeration over {len(idx)} edges exceeds the {EXACT_ENUMERATION_MAX_EDGES}-edge budget."
        )
    total = 0.0
    for bits in itertools.product((False, True), repeat=len(idx)):
        opened = np.zeros(g.edge_count, dtype=bool)
        opened[idx] = bits
        k = sum(bits)
        weight = (p ** k) * ((1.0 - p) ** (len(idx) - k))
        if weight:
            total += weight * float(functional(opened))
    return total


def exact_layer_law(edge_count: int, p: float, q: float) -> float:
    """
    Largest deviation between the exact law of omega ∪ xi ∪ zeta on
    ``edge_count`` edges and the product Bernoulli(q) law, found by
    enumerating every joint layer outcome.
    """
    if edge_count > 6:
        raise BudgetExhaustedError("Layer-law enumeration is limited to 6 edges.")
    eta = eta_for(p, q)
    union_law = {}
    for outcome in itertools.product(list(itertools.product((0, 1), repeat=3)), repeat=edge_count):
        weight = 1.0
        key = []
        for w, x, z in outcome:
            weight *= (p if w else 1 - p) * (eta if x else 1 - eta) * (eta if z else 1 - eta)
            key.append(bool(w or x or z))
        union_law[tuple(key)] = union_law.get(tuple(key), 0.0) + weight
    worst = 0.0
    for key, prob in union_law.items():
        k = sum(key)
        product = (q ** k) * ((1 - q) ** (edge_count - k))
        worst = max(worst, abs(prob - product))
    logging.debug("Layer law on %d edges: largest deviation %.3g", edge_count, worst)
    return worst
