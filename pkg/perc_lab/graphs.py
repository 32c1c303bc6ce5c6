# perc_lab/graphs.py

"""
Finite graph substrates: Z^d boxes, slabs, regular trees and user edge lists,
plus metric balls and the boundary operators every other module builds on.

Vertex and edge sets are numpy boolean masks sized to the owning graph.
"""

import logging
import os
import heapq
from collections import deque
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse

from .errors import GraphSpecError, PreconditionError

GRAPH_KINDS = ("zd_box", "slab", "tree", "file")


@dataclass(frozen=True)
class GraphSpec:
    """
    Description of a graph family member.

    :param kind: One of ``zd_box``, ``slab``, ``tree`` or ``file``.
    :param d: Lattice dimension (``zd_box`` and ``slab``).
    :param side: Box side length (``zd_box``).
    :param thickness: Slab half-thickness; extra coordinates range over -thickness..thickness.
    :param window: Slab window (lengths of the first two coordinates).
    :param degree: Tree degree.
    :param depth: Tree depth.
    :param path: Edge-list file path (``file``).
    """

    kind: str
    d: int = 2
    side: int = 0
    thickness: int = 0
    window: Tuple[int, int] = (0, 0)
    degree: int = 0
    depth: int = 0
    path: Optional[str] = None

    def validate(self) -> None:
        if self.kind not in GRAPH_KINDS:
            raise GraphSpecError(f"Unknown graph kind '{self.kind}'.")
        if self.kind == "zd_box":
            if self.d <= 0 or self.side <= 0:
                raise GraphSpecError("zd_box needs positive d and side.")
        elif self.kind == "slab":
            if self.d < 2:
                raise GraphSpecError("slab needs d >= 2.")
            if self.thickness < 1:
                raise GraphSpecError("slab thickness must be at least 1.")
            if len(self.window) != 2 or min(self.window) <= 0:
                raise GraphSpecError("slab window must be two positive lengths.")
        elif self.kind == "tree":
            if self.degree < 2 or self.depth < 0:
                raise GraphSpecError("tree needs degree >= 2 and depth >= 0.")
        elif not self.path:
            raise GraphSpecError("file graphs need a path.")

    @property
    def degree_bound(self) -> int:
        if self.kind in ("zd_box", "slab"):
            return 2 * self.d
        return self.degree

    def with_extent(self, radius: int) -> "GraphSpec":
        """Same family, large enough that the origin's radius-``radius`` ball sees no free boundary."""
        if self.kind == "zd_box":
            return GraphSpec("zd_box", d=self.d, side=2 * radius + 3)
        if self.kind == "slab":
            w = 2 * radius + 3
            return GraphSpec("slab", d=self.d, thickness=self.thickness, window=(w, w))
        if self.kind == "tree":
            return GraphSpec("tree", degree=self.degree, depth=radius + 1)
        return self


class FiniteGraph:
    """
    Immutable finite simple graph with a canonical edge index.

    Edges are stored as an ``(m, 2)`` array with ``u < v`` in lexicographic
    order; ``incidence[v]`` lists the edge ids at ``v`` aligned with
    ``adjacency[v]``.
    """

    def __init__(
        self,
        vertex_count: int,
        edges: np.ndarray,
        degree_bound: int,
        origin: int = 0,
        coords: Optional[np.ndarray] = None,
        shape: Optional[Tuple[int, ...]] = None,
        offset: Optional[np.ndarray] = None,
    ):
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if len(edges):
            edges = np.sort(edges, axis=1)
            order = np.lexsort((edges[:, 1], edges[:, 0]))
            edges = edges[order]
        self.vertex_count = int(vertex_count)
        self.edges = edges
        self.degree_bound = int(degree_bound)
        self.origin = int(origin)
        self.coords = coords
        self.shape = shape
        self.offset = offset
        self.edges.setflags(write=False)
        if self.coords is not None:
            self.coords.setflags(write=False)

        m = len(edges)
        rows = np.concatenate([edges[:, 0], edges[:, 1]])
        cols = np.concatenate([edges[:, 1], edges[:, 0]])
        eids = np.concatenate([np.arange(m), np.arange(m)])
        csr = sparse.csr_matrix(
            (eids + 1, (rows, cols)), shape=(self.vertex_count, self.vertex_count)
        )
        csr.sort_indices()
        self.adjacency_matrix = sparse.csr_matrix(
            (np.ones(len(csr.data), dtype=np.int32), csr.indices, csr.indptr),
            shape=csr.shape,
        )
        self._indptr = csr.indptr
        self._neighbors = csr.indices
        self._incident = (csr.data - 1).astype(np.int64)
        self._lookup: Optional[Dict[Tuple[int, int], int]] = None

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    def neighbors(self, v: int) -> np.ndarray:
        return self._neighbors[self._indptr[v]:self._indptr[v + 1]]

    def incident_edges(self, v: int) -> np.ndarray:
        return self._incident[self._indptr[v]:self._indptr[v + 1]]

    @property
    def adjacency(self) -> List[np.ndarray]:
        return [self.neighbors(v) for v in range(self.vertex_count)]

    def degrees(self) -> np.ndarray:
        return np.diff(self._indptr)

    def edge_id(self, u: int, v: int) -> int:
        """Return the id of edge ``{u, v}``; raises ``KeyError`` when absent."""
        if self._lookup is None:
            self._lookup = {(int(a), int(b)): i for i, (a, b) in enumerate(self.edges)}
        if u > v:
            u, v = v, u
        return self._lookup[(int(u), int(v))]

    def vertex_mask(self, vertices: Sequence[int] = ()) -> np.ndarray:
        mask = np.zeros(self.vertex_count, dtype=bool)
        mask[np.asarray(list(vertices), dtype=np.int64)] = True
        return mask

    def edge_mask(self, edge_ids: Sequence[int] = ()) -> np.ndarray:
        mask = np.zeros(self.edge_count, dtype=bool)
        mask[np.asarray(list(edge_ids), dtype=np.int64)] = True
        return mask

    def all_vertices(self) -> np.ndarray:
        return np.ones(self.vertex_count, dtype=bool)

    def all_edges(self) -> np.ndarray:
        return np.ones(self.edge_count, dtype=bool)

    def vertex_at(self, coord: Sequence[int]) -> int:
        """Vertex id of a lattice coordinate (coordinates are centred on the origin)."""
        if self.shape is None:
            raise PreconditionError("Graph has no lattice embedding.")
        idx = np.asarray(coord, dtype=np.int64) + self.offset
        if np.any(idx < 0) or np.any(idx >= np.asarray(self.shape)):
            raise PreconditionError(f"Coordinate {tuple(coord)} lies outside the graph.")
        return int(np.ravel_multi_index(tuple(idx), self.shape))

    def __repr__(self) -> str:
        return (
            f"FiniteGraph(vertices={self.vertex_count}, edges={self.edge_count}, "
            f"degree_bound={self.degree_bound})"
        )


class Boundaries(NamedTuple):
    edge_boundary: np.ndarray
    closure: np.ndarray
    interior: np.ndarray
    inner: np.ndarray
    outer: np.ndarray


# ---------------------------------------------------------------------------
# Generators
# ---------------------------------------------------------------------------

def _lattice(shape: Tuple[int, ...], offset: np.ndarray, degree_bound: int) -> FiniteGraph:
    n = int(np.prod(shape))
    index = np.arange(n).reshape(shape)
    pairs = []
    for axis in range(len(shape)):
        if shape[axis] < 2:
            continue
        lo = np.take(index, np.arange(shape[axis] - 1), axis=axis).ravel()
        hi = np.take(index, np.arange(1, shape[axis]), axis=axis).ravel()
        pairs.append(np.stack([lo, hi], axis=1))
    edges = np.concatenate(pairs) if pairs else np.zeros((0, 2), dtype=np.int64)
    coords = np.stack(np.unravel_index(np.arange(n), shape), axis=1).astype(np.int64) - offset
    origin = int(np.ravel_multi_index(tuple(offset), shape))
    return FiniteGraph(n, edges, degree_bound, origin=origin, coords=coords,
                       shape=tuple(shape), offset=offset)


def _tree(degree: int, depth: int) -> FiniteGraph:
    edges = []
    frontier = [0]
    count = 1
    for level in range(depth):
        nxt = []
        for parent in frontier:
            children = degree if level == 0 else degree - 1
            for _ in range(children):
                edges.append((parent, count))
                nxt.append(count)
                count += 1
        frontier = nxt
    return FiniteGraph(count, np.array(edges, dtype=np.int64), degree, origin=0)


def read_edge_list(path: str) -> FiniteGraph:
    """
    Read a user graph from the plain-text edge-list format::

        vertices=<n> edges=<m> degree=<d>
        u v
        ...

    Invariant violations are rejected, never repaired.
    """
    if not os.path.isfile(path):
        raise GraphSpecError(f"Edge-list file '{path}' does not exist.")
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]
    except OSError as exc:
        raise GraphSpecError(f"Cannot read '{path}': {exc}") from exc
    if not lines:
        raise GraphSpecError(f"'{path}' is empty.")
    try:
        header = dict(tok.split("=", 1) for tok in lines[0].split())
        n, m, d = int(header["vertices"]), int(header["edges"]), int(header["degree"])
    except (KeyError, ValueError) as exc:
        raise GraphSpecError(f"Malformed header in '{path}': {lines[0]!r}") from exc
    if n <= 0 or d <= 0:
        raise GraphSpecError("Header needs positive vertex count and degree.")
    try:
        edges = np.array([[int(x) for x in ln.split()] for ln in lines[1:]], dtype=np.int64)
    except ValueError as exc:
        raise GraphSpecError(f"Non-integer edge line in '{path}'.") from exc
    edges = edges.reshape(-1, 2) if edges.size else np.zeros((0, 2), dtype=np.int64)
    if len(edges) != m:
        raise GraphSpecError(f"Header announces {m} edges, file has {len(edges)}.")
    if len(edges):
        if np.any(edges[:, 0] >= edges[:, 1]):
            raise GraphSpecError("Every edge line must satisfy u < v (no self-loops).")
        if edges.min() < 0 or edges.max() >= n:
            raise GraphSpecError("Edge endpoint out of range.")
        if len(np.unique(edges, axis=0)) != len(edges):
            raise GraphSpecError("Parallel edges are not allowed.")
        if np.bincount(edges.ravel(), minlength=n).max() > d:
            raise GraphSpecError("A vertex exceeds the declared degree bound.")
    return FiniteGraph(n, edges, d, origin=0)


def write_edge_list(g: FiniteGraph, path: str) -> None:
    """Write ``g`` in the edge-list format accepted by :func:`read_edge_list`."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"vertices={g.vertex_count} edges={g.edge_count} degree={g.degree_bound}\n")
        for u, v in g.edges:
            fh.write(f"{u} {v}\n")


def generate(spec: GraphSpec) -> FiniteGraph:
    """
    Build the finite graph described by ``spec``.

    Lattice graphs carry coordinates centred on the origin, which is the
    centre vertex of the box (or slab window).
    """
    spec.validate()
    if spec.kind == "zd_box":
        shape = (spec.side,) * spec.d
        g = _lattice(shape, np.array([s // 2 for s in shape]), 2 * spec.d)
    elif spec.kind == "slab":
        t = 2 * spec.thickness + 1
        shape = tuple(spec.window) + (t,) * (spec.d - 2)
        g = _lattice(shape, np.array([s // 2 for s in shape]), 2 * spec.d)
    elif spec.kind == "tree":
        g = _tree(spec.degree, spec.depth)
    else:
        g = read_edge_list(spec.path)
    logging.debug("Generated %s graph: %r", spec.kind, g)
    return g


# ---------------------------------------------------------------------------
# Metric operations
# ---------------------------------------------------------------------------

def _as_mask(g: FiniteGraph, a) -> np.ndarray:
    a = np.asarray(a)
    if a.dtype == bool:
        return a
    return g.vertex_mask(a.ravel())


def bfs_distances(
    g: FiniteGraph,
    sources,
    max_depth: Optional[int] = None,
    allowed: Optional[np.ndarray] = None,
) -> np.ndarray:
    """
    Level-synchronous multi-source BFS.

    :param sources: Source vertex mask (or ids).
    :param max_depth: Stop after this many levels.
    :param allowed: Restrict the search to the subgraph induced by this mask.
    :return: int64 distances, -1 where unreached.
    """
    frontier = _as_mask(g, sources).copy()
    if allowed is not None:
        frontier &= allowed
    dist = np.full(g.vertex_count, -1, dtype=np.int64)
    dist[frontier] = 0
    visited = frontier.copy()
    depth = 0
    while frontier.any() and (max_depth is None or depth < max_depth):
        depth += 1
        reach = (g.adjacency_matrix @ frontier.astype(np.int32)) > 0
        frontier = reach & ~visited
        if allowed is not None:
            frontier &= allowed
        dist[frontier] = depth
        visited |= frontier
    return dist


def ball(g: FiniteGraph, a, r: int, allowed: Optional[np.ndarray] = None) -> np.ndarray:
    """Vertices at graph distance at most ``r`` from ``a``."""
    mask = _as_mask(g, a)
    if r < 0:
        raise PreconditionError("Ball radius must be non-negative.")
    if not mask.any():
        raise PreconditionError("Ball centre set is empty.")
    return bfs_distances(g, mask, max_depth=r, allowed=allowed) >= 0


def sphere(g: FiniteGraph, a, r: int) -> np.ndarray:
    """Vertices at distance exactly ``r`` from ``a``."""
    return bfs_distances(g, _as_mask(g, a), max_depth=r) == r


def boundaries(g: FiniteGraph, a) -> Boundaries:
    """Edge boundary, closure, interior, inner and outer vertex boundary of ``a``."""
    mask = _as_mask(g, a)
    in_u = mask[g.edges[:, 0]]
    in_v = mask[g.edges[:, 1]]
    closure = in_u | in_v
    interior = in_u & in_v
    edge_boundary = closure & ~interior
    crossing = g.edges[edge_boundary]
    inner = np.zeros(g.vertex_count, dtype=bool)
    outer = np.zeros(g.vertex_count, dtype=bool)
    ends = crossing.ravel()
    inner[ends[mask[ends]]] = True
    outer[ends[~mask[ends]]] = True
    return Boundaries(edge_boundary, closure, interior, inner, outer)


def edge_boundary_size(g: FiniteGraph, a) -> int:
    mask = _as_mask(g, a)
    return int(np.count_nonzero(mask[g.edges[:, 0]] != mask[g.edges[:, 1]]))


def interior_edges(g: FiniteGraph, a) -> np.ndarray:
    mask = _as_mask(g, a)
    return mask[g.edges[:, 0]] & mask[g.edges[:, 1]]


def induced_subgraph(g: FiniteGraph, a) -> Tuple[FiniteGraph, np.ndarray, np.ndarray]:
    """
    Subgraph induced by ``a``, relabelled densely in increasing id order.

    :return: ``(h, to_sub, to_parent)`` where ``to_sub[v]`` is -1 outside ``a``.
    """
    mask = _as_mask(g, a)
    if not mask.any():
        raise PreconditionError("Cannot induce a subgraph on an empty set.")
    to_parent = np.flatnonzero(mask)
    to_sub = np.full(g.vertex_count, -1, dtype=np.int64)
    to_sub[to_parent] = np.arange(len(to_parent))
    kept = g.edges[interior_edges(g, mask)]
    origin = int(to_sub[g.origin]) if mask[g.origin] else 0
    coords = g.coords[to_parent].copy() if g.coords is not None else None
    h = FiniteGraph(len(to_parent), to_sub[kept], g.degree_bound, origin=origin, coords=coords)
    return h, to_sub, to_parent


def distance(g: FiniteGraph, u: int, v: int) -> Optional[int]:
    """Shortest-path distance, or ``None`` when unreachable."""
    if u == v:
        return 0
    dist = bfs_distances(g, g.vertex_mask([u]))
    return int(dist[v]) if dist[v] >= 0 else None


def is_connected(g: FiniteGraph, a) -> bool:
    mask = _as_mask(g, a)
    if not mask.any():
        return False
    start = g.vertex_mask([int(np.flatnonzero(mask)[0])])
    return bool(np.all(bfs_distances(g, start, allowed=mask)[mask] >= 0))


def diameter_pair(g: FiniteGraph, a) -> Tuple[int, int]:
    """Ambient diameter of the connected set ``a`` and a member at one end of it."""
    mask = _as_mask(g, a)
    if not is_connected(g, mask):
        raise PreconditionError("diameter_of needs a connected, nonempty vertex set.")
    members = np.flatnonzero(mask)
    # a connected set of k vertices has ambient diameter at most k - 1
    cap = len(members) - 1
    best, end = 0, int(members[0])
    for u in members:
        dist = bfs_distances(g, g.vertex_mask([u]), max_depth=cap)
        ecc = int(dist[mask].max())
        if ecc > best:
            best, end = ecc, int(u)
    return best, end


def diameter_of(g: FiniteGraph, a) -> int:
    """Largest ambient distance between two vertices of the connected set ``a``."""
    return diameter_pair(g, a)[0]


def find_path(
    g: FiniteGraph, sources: np.ndarray, targets: np.ndarray, allowed: np.ndarray
) -> Optional[List[int]]:
    """Shortest vertex path from ``sources`` to ``targets`` inside ``allowed``, or ``None``."""
    parent = np.full(g.vertex_count, -2, dtype=np.int64)
    queue = deque()
    for s in np.flatnonzero(sources & allowed):
        parent[s] = -1
        queue.append(int(s))
    while queue:
        v = queue.popleft()
        if targets[v]:
            path = [v]
            while parent[path[-1]] >= 0:
                path.append(int(parent[path[-1]]))
            return path[::-1]
        for w in g.neighbors(v):
            if allowed[w] and parent[w] == -2:
                parent[w] = v
                queue.append(int(w))
    return None


def interior_radius(g: FiniteGraph, center: Optional[int] = None) -> int:
    """
    Largest R such that every vertex within distance R - 1 of ``center`` has
    full degree, i.e. the radius-R ball is a faithful copy of the infinite one.
    """
    center = g.origin if center is None else center
    dist = bfs_distances(g, g.vertex_mask([center]))
    deficient = dist[(g.degrees() < g.degree_bound) & (dist >= 0)]
    if len(deficient) == 0:
        return int(dist.max()) + 1
    return int(deficient.min())


def invasion_cluster(
    g: FiniteGraph, weights: np.ndarray, size: int, start: Optional[int] = None
) -> np.ndarray:
    """
    Connected set of ``size`` vertices grown from ``start`` by invasion: each
    step adds the outside endpoint of the lightest frontier edge.
    """
    start = g.origin if start is None else start
    inside = np.zeros(g.vertex_count, dtype=bool)
    inside[start] = True
    frontier = [(float(weights[e]), int(w)) for e, w in zip(g.incident_edges(start), g.neighbors(start))]
    heapq.heapify(frontier)
    count = 1
    while count < size and frontier:
        _, v = heapq.heappop(frontier)
        if inside[v]:
            continue
        inside[v] = True
        count += 1
        for e, w in zip(g.incident_edges(v), g.neighbors(v)):
            if not inside[w]:
                heapq.heappush(frontier, (float(weights[e]), int(w)))
    if count < size:
        raise PreconditionError(f"The component of vertex {start} has fewer than {size} vertices.")
    return inside
