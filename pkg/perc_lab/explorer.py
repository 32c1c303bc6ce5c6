# perc_lab/explorer.py

"""
Seeded touch exploration.

Starting from the inner boundary of Lambda = B_{R+1}, each round places
``ell`` mid-balls between the explored set K and the target set S, opens the
first ball that is entirely zeta-open, and grows its cluster through
omega outside the closure of K plus xi-edges on the boundary of K. A round
succeeds when the grown cluster touches both K and the outer boundary of S
outside K, which adds at least one new touch |∂S ∩ ∂K|.
"""

import itertools
import logging
import math
from dataclasses import dataclass, field
from functools import partial
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .constants import DEFAULT_ESTIMATOR_SAMPLES, DEFAULT_RADIUS_SEARCH_MAX
from .errors import BudgetExhaustedError, MidBallNotFoundError, NoAvoidingPathError, PreconditionError
from .graphs import (
    FiniteGraph,
    ball,
    bfs_distances,
    boundaries,
    find_path,
    interior_edges,
    interior_radius,
    sphere,
)
from .isoperimetry import phi_of_set
from .percolation import LayeredSample, eta_for, reachable, restrict_edges, sample_layers
from .rng import EdgeLabels, mask_digest, stream_id
from .stats import Estimate, replicate
from .tails import TailCurve

MODES = ("rigorous", "practical")

RUNNING = "running"
REACHED_T = "reached_t"
HALTED_NO_SEED = "halted_no_seed"
HALTED_NO_CONNECTION = "halted_no_connection"
HALTED_BUDGET = "halted_budget"


# ---------------------------------------------------------------------------
# Parameters
# ---------------------------------------------------------------------------

@dataclass
class ExplorationParams:
    """
    Constants of the exploration. In practical mode ``r`` and ``ell`` may be
    overridden; the rigorous values are kept alongside for the record.
    """

    p: float
    q: float
    eps: float
    eta: float
    alpha: float
    t_spr: int
    delta: float
    r: int
    b: int
    ell: int
    c: float
    d: int
    mode: str = "rigorous"
    rigorous_r: Optional[int] = None
    rigorous_ell: Optional[float] = None
    rigorous_c: Optional[float] = None

    def to_dict(self) -> dict:
        return dict(vars(self))


def calibrate_sprinkling(p: float, eta: float, eps: float) -> Tuple[int, float]:
    """Least t with (1-eta)^t <= eps/2, and alpha = (eps/2) (1-p)^t."""
    if eta <= 0:
        raise PreconditionError("eta = 0 admits no finite sprinkling exponent.")
    if eps <= 0:
        raise PreconditionError("eps must be positive.")
    if not 0 <= p < 1:
        raise PreconditionError("p must lie in [0, 1).")
    target = eps / 2.0
    if eta >= 1 or target >= 1:
        t = 0 if target >= 1 else 1
    else:
        t = max(0, math.ceil(math.log(target) / math.log1p(-eta)) - 1)
        while (1.0 - eta) ** t > target:
            t += 1
    alpha = target * (1.0 - p) ** t
    return t, alpha


def seed_count(eta: float, b: int, eps: float) -> float:
    """
    Least ell >= 1 with (1 - eta^b)^ell <= eps/2; ``math.inf`` when eta^b
    underflows.
    """
    target = eps / 2.0
    if target >= 1:
        return 1
    x = eta ** b
    if x <= 0:
        return math.inf
    if x >= 1:
        return 1
    ell = max(1, math.ceil(math.log(target) / math.log1p(-x)) - 1)
    while (1.0 - x) ** ell > target:
        ell += 1
    return ell


def ball_size_bound(g: FiniteGraph, r: int, center: Optional[int] = None) -> int:
    """b = max(|interior edges of B_r|, |B_r|) around ``center``."""
    center = g.origin if center is None else center
    region = ball(g, g.vertex_mask([center]), r)
    return max(int(interior_edges(g, region).sum()), int(region.sum()))


class ConnectionEstimator:
    """
    Monte Carlo engine for the connection probabilities used by the mid-ball
    search. Substreams are derived deterministically from a key, so a run is
    replayable single-threaded.
    """

    def __init__(self, samples: int = DEFAULT_ESTIMATOR_SAMPLES, master_seed: int = 0,
                 key: int = 0, workers: int = 1, budget: Optional[int] = None):
        self.samples = int(samples)
        self.master_seed = int(master_seed)
        self.key = int(key)
        self.workers = int(workers)
        self.budget = budget
        self.used = 0

    def substream(self, key: int) -> "ConnectionEstimator":
        child = ConnectionEstimator(self.samples, self.master_seed, key, self.workers, None)
        child._parent = self
        return child

    def charge(self, samples: int) -> None:
        root = self
        while getattr(root, "_parent", None) is not None:
            root = root._parent
        root.used += samples
        if root.budget is not None and root.used > root.budget:
            raise BudgetExhaustedError(f"Estimator budget of {root.budget} samples exhausted.")
        if root is not self:
            self.used += samples

    def labels(self, g: FiniteGraph, purpose: str, i: int) -> EdgeLabels:
        return EdgeLabels(g.edge_count, self.master_seed, stream_id(purpose, self.key, i))


def _shell_hit_sample(g, sources, region, shell, p, seed, key, i) -> bool:
    labels = EdgeLabels(g.edge_count, seed, stream_id("radius-calibration", key, i))
    return bool(np.any(reachable(g, sources, labels.open_below(p), region) & shell))


def shell_connection_probability(
    g: FiniteGraph, p: float, radius: int, estimator: ConnectionEstimator,
    shell_radius: Optional[int] = None,
) -> Estimate:
    """Estimate P_p(B_radius(o) <-> sphere(shell_radius)), the shell standing in for infinity."""
    shell_radius = interior_radius(g) if shell_radius is None else shell_radius
    if radius >= shell_radius:
        raise PreconditionError("The ball already meets the shell.")
    origin = g.vertex_mask([g.origin])
    sources = ball(g, origin, radius)
    region = ball(g, origin, shell_radius)
    shell = sphere(g, origin, shell_radius)
    estimator.charge(estimator.samples)
    fn = partial(_shell_hit_sample, g, sources, region, shell, p, estimator.master_seed, radius)
    hits = replicate(fn, estimator.samples, estimator.workers)
    return Estimate(int(sum(hits)), estimator.samples)


def choose_radius(
    g: FiniteGraph, p: float, delta: float, estimator: ConnectionEstimator,
    r_max: int = DEFAULT_RADIUS_SEARCH_MAX,
) -> int:
    """Least r >= 1 with estimated P_p(B_{r-1} <-> shell) >= 1 - delta."""
    limit = min(r_max, interior_radius(g) - 1)
    for r in range(1, limit + 1):
        est = shell_connection_probability(g, p, r - 1, estimator)
        logging.debug("r=%d: P(B_{r-1} <-> shell) ~ %.4f", r, est.value)
        if est.value >= 1.0 - delta:
            return r
    raise BudgetExhaustedError(
        f"No radius up to {limit} reached connection probability {1 - delta:.4g}; p may be subcritical at this scale."
    )


def derive_params(
    p: float,
    q: float,
    eps: float,
    g: FiniteGraph,
    estimator: ConnectionEstimator,
    mode: str = "rigorous",
    r: Optional[int] = None,
    ell: Optional[int] = None,
    r_max: int = DEFAULT_RADIUS_SEARCH_MAX,
) -> ExplorationParams:
    """
    Derive (eta, alpha, delta, r, b, ell, c) from (p, q, eps). The sprinkling
    constant alpha is calibrated at eps/4. In practical mode explicit ``r``
    and ``ell`` replace the derived values and the rigorous ones are logged.
    """
    if mode not in MODES:
        raise PreconditionError(f"Unknown mode '{mode}'.")
    if not p < q < 1:
        raise PreconditionError(f"Need p < q < 1, got p={p}, q={q}.")
    if not 0 < eps <= 1:
        raise PreconditionError("eps must lie in (0, 1].")
    eta = eta_for(p, q)
    t_spr, alpha = calibrate_sprinkling(p, eta, eps / 4.0)
    delta = min(alpha, eps / 4.0) ** 2
    d = g.degree_bound

    rigorous_r = None
    if mode == "rigorous" or r is None:
        rigorous_r = choose_radius(g, p, delta, estimator, r_max)
    chosen_r = r if (mode == "practical" and r is not None) else rigorous_r

    b_rig = ball_size_bound(g, rigorous_r) if rigorous_r is not None else None
    ell_rig = seed_count(eta, b_rig, eps) if b_rig is not None else None
    c_rig = 1.0 / (4 * b_rig ** 3 * d * ell_rig) if ell_rig not in (None, math.inf) else (0.0 if ell_rig else None)

    b = ball_size_bound(g, chosen_r)
    if mode == "practical" and ell is not None:
        chosen_ell = int(ell)
    else:
        chosen_ell = seed_count(eta, b, eps)
        if chosen_ell == math.inf:
            raise BudgetExhaustedError("Seed count ell is not representable; use practical mode.")
    c = 1.0 / (4 * b ** 3 * d * chosen_ell)
    params = ExplorationParams(p, q, eps, eta, alpha, t_spr, delta, chosen_r, b, chosen_ell, c, d,
                               mode, rigorous_r, ell_rig, c_rig)
    if mode == "practical":
        logging.info(
            "Practical parameters r=%d ell=%d (rigorous r=%s ell=%s c=%s)",
            chosen_r, chosen_ell, rigorous_r, ell_rig, c_rig,
        )
    return params


# ---------------------------------------------------------------------------
# Mid-balls
# ---------------------------------------------------------------------------

@dataclass
class MidBallResult:
    ball: np.ndarray
    center: int
    to_left: Estimate
    to_right: Estimate
    samples: int
    certified: bool = True


@dataclass
class MidBallCounts:
    """Per-vertex hit counts of radius r-1 and r balls for the two sides."""

    left_inner: np.ndarray
    right_inner: np.ndarray
    left_outer: np.ndarray
    right_outer: np.ndarray
    samples: int


def _midball_sample(g, allowed, domain, left, right, r, p, seed, key, i):
    labels = EdgeLabels(g.edge_count, seed, stream_id("mid-ball", key, i))
    opened = labels.open_below(p, domain)
    reach_left = reachable(g, left, opened, allowed & ~right)
    reach_right = reachable(g, right, opened, allowed & ~left)
    dl = bfs_distances(g, reach_left, max_depth=r, allowed=allowed)
    dr = bfs_distances(g, reach_right, max_depth=r, allowed=allowed)
    return ((dl >= 0) & (dl <= r - 1), (dr >= 0) & (dr <= r - 1), dl >= 0, dr >= 0)


def midball_counts(
    g: FiniteGraph, allowed: np.ndarray, left: np.ndarray, right: np.ndarray,
    r: int, p: float, estimator: ConnectionEstimator,
) -> MidBallCounts:
    """
    For every vertex v of the working graph G[allowed], count the samples in
    which B_{r-1}(v) and B_r(v) meet the set reachable from ``left`` avoiding
    ``right`` (and symmetrically). One labelling per sample serves every v.
    """
    domain = interior_edges(g, allowed)
    estimator.charge(estimator.samples)
    fn = partial(_midball_sample, g, allowed, domain, left, right, r, p, estimator.master_seed, estimator.key)
    results = replicate(fn, estimator.samples, estimator.workers)
    n = g.vertex_count
    sums = [np.zeros(n, dtype=np.int64) for _ in range(4)]
    for res in results:
        for acc, hit in zip(sums, res):
            acc += hit
    return MidBallCounts(*sums, samples=estimator.samples)


def find_mid_balls(
    g: FiniteGraph,
    allowed: np.ndarray,
    left: np.ndarray,
    right: np.ndarray,
    avoid: np.ndarray,
    r: int,
    ell: int,
    delta: float,
    p: float,
    estimator: ConnectionEstimator,
    strict: bool = False,
    counts: Optional[MidBallCounts] = None,
) -> List[MidBallResult]:
    """
    Place ``ell`` disjoint radius-r balls of G[allowed], disjoint from
    ``avoid``, each likely to connect to ``left`` off ``right`` and to
    ``right`` off ``left``.

    Each ball is found by walking a shortest left-to-right path that avoids
    the r-neighbourhood of everything forbidden so far and taking the first
    index i where B_{r-1}(v_i) reaches left and B_{r-1}(v_{i+1}) reaches
    right at level 1 - sqrt(delta), less the Wilson half-width. The accepted
    ball is B_r(v_i). With ``strict`` a missing index raises; otherwise the
    best index is taken and marked uncertified.
    """
    if np.any(left & right):
        raise PreconditionError("L and R must be disjoint.")
    if not left.any() or not right.any():
        raise PreconditionError("L and R must be nonempty.")
    if counts is None:
        counts = midball_counts(g, allowed, left, right, r, p, estimator)
    n = counts.samples
    threshold = 1.0 - math.sqrt(delta)
    forbidden = np.asarray(avoid, dtype=bool).copy()
    results: List[MidBallResult] = []
    for _ in range(ell):
        blocked = ball(g, forbidden, r, allowed=allowed) if forbidden.any() else np.zeros_like(forbidden)
        path = find_path(g, left, right, allowed & ~blocked)
        if path is None:
            raise NoAvoidingPathError("No L-R path avoids the r-neighbourhood of the forbidden set.")
        best, best_score, chosen = None, -1.0, None
        for i in range(len(path) - 1):
            est_l = Estimate(int(counts.left_inner[path[i]]), n)
            est_r = Estimate(int(counts.right_inner[path[i + 1]]), n)
            if est_l.value >= threshold - est_l.halfwidth and est_r.value >= threshold - est_r.halfwidth:
                chosen = i
                break
            score = min(est_l.value, est_r.value)
            if score > best_score:
                best, best_score = i, score
        certified = chosen is not None
        if not certified:
            if strict:
                raise MidBallNotFoundError(
                    f"No path index certified at level {threshold:.4f} with {n} samples."
                )
            chosen = best if best is not None else 0
        center = path[chosen]
        region = ball(g, g.vertex_mask([center]), r, allowed=allowed)
        result = MidBallResult(
            region, center,
            Estimate(int(counts.left_outer[center]), n),
            Estimate(int(counts.right_outer[center]), n),
            n, certified,
        )
        results.append(result)
        forbidden |= region
    return results


# ---------------------------------------------------------------------------
# Arena, seeds, growth
# ---------------------------------------------------------------------------

@dataclass
class Arena:
    """Lambda = B_{R+1}(o), target set S inside B_R, anchor = inner boundary of Lambda."""

    graph: FiniteGraph
    radius: int
    lam: np.ndarray
    s: np.ndarray
    t: int
    anchor: np.ndarray
    s_outer: np.ndarray
    s_boundary: np.ndarray
    domain: np.ndarray

    @classmethod
    def build(cls, g: FiniteGraph, s: np.ndarray, radius: int, t: int) -> "Arena":
        s = np.asarray(s, dtype=bool)
        if t < 1:
            raise PreconditionError("The touch target t must be a positive integer.")
        origin = g.vertex_mask([g.origin])
        inner = ball(g, origin, radius)
        lam = ball(g, origin, radius + 1)
        if np.any(s & ~inner):
            raise PreconditionError("S must lie inside B_R.")
        anchor = boundaries(g, lam).inner
        if not anchor.any():
            raise PreconditionError("Lambda has no boundary inside the graph; enlarge the graph.")
        if np.any(s & anchor):
            raise PreconditionError("S meets the inner boundary of Lambda.")
        bnd = boundaries(g, s)
        return cls(g, radius, lam, s, t, anchor, bnd.outer, bnd.edge_boundary, interior_edges(g, lam & ~s))

    @property
    def working(self) -> np.ndarray:
        return self.lam & ~self.s

    def touches(self, k: np.ndarray) -> int:
        """|∂S ∩ ∂K|."""
        kb = k[self.graph.edges[:, 0]] != k[self.graph.edges[:, 1]]
        return int(np.count_nonzero(kb & self.s_boundary))


def seeds_function(
    d_set: np.ndarray, k_set: np.ndarray, arena: Arena, params: ExplorationParams,
    estimator: ConnectionEstimator, strict: bool = False,
) -> List[MidBallResult]:
    """
    The deterministic seed rule: mid-balls in G[Lambda \\ S] between
    L = outer boundary of S minus K and R = K, avoiding D. The estimator
    substream is keyed by (D, K).
    """
    if np.any(arena.anchor & ~k_set):
        raise PreconditionError("K must contain the inner boundary of Lambda.")
    if arena.touches(k_set) >= arena.t:
        raise PreconditionError("K already has t touches with S.")
    if int(d_set.sum()) > params.b * params.ell * arena.t:
        raise PreconditionError("|D| exceeds b * ell * t.")
    left = arena.s_outer & ~k_set
    if not left.any():
        raise PreconditionError("Every outer boundary vertex of S is already in K.")
    sub = estimator.substream(mask_digest(d_set, k_set))
    return find_mid_balls(arena.graph, arena.working, left, k_set, d_set, params.r, params.ell,
                          params.delta, params.p, sub, strict=strict)


def grow_seed(
    b: np.ndarray, d_set: np.ndarray, k_set: np.ndarray, sample: LayeredSample, arena: Arena
) -> np.ndarray:
    """
    C1 = cluster of B in omega outside the closure of K; C2 = both endpoints
    of xi-open edges uv with u in C1 \\ K and v in K. Returns C1 ∪ C2.
    """
    g = arena.graph
    u, v = g.edges[:, 0], g.edges[:, 1]
    closure_k = k_set[u] | k_set[v]
    c1 = reachable(g, b, sample.omega.open & ~closure_k) | b
    c1_free = c1 & ~k_set
    bridges = sample.xi.open & ((c1_free[u] & k_set[v]) | (c1_free[v] & k_set[u]))
    c2 = np.zeros(g.vertex_count, dtype=bool)
    c2[g.edges[bridges].ravel()] = True
    return c1 | c2


@dataclass
class RoundRecord:
    index: int
    seed_centers: List[int]
    chosen: Optional[int]
    cluster_size: int
    touches: int
    status: str


@dataclass
class ExplorationState:
    round_index: int = 0
    seed_sets: List[List[np.ndarray]] = field(default_factory=list)
    clusters: List[np.ndarray] = field(default_factory=list)
    touches: List[int] = field(default_factory=list)
    rounds: List[RoundRecord] = field(default_factory=list)
    status: str = RUNNING
    d_set: Optional[np.ndarray] = None
    k_set: Optional[np.ndarray] = None

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "rounds": [vars(r) for r in self.rounds],
            "touches": list(self.touches),
            "final_touches": self.touches[-1] if self.touches else 0,
            "explored_size": int(self.k_set.sum()) if self.k_set is not None else 0,
        }

    def check_invariants(self, arena: Arena, params: ExplorationParams, sample: LayeredSample) -> List[str]:
        """Return a description of every transcript invariant that fails (empty when all hold)."""
        problems = []
        g = arena.graph
        seen = np.zeros(g.vertex_count, dtype=bool)
        for j, balls in enumerate(self.seed_sets):
            if sum(int(b.sum()) for b in balls) > params.b * params.ell:
                problems.append(f"seed budget exceeded in round {j}")
            for b in balls:
                if np.any(b & seen):
                    problems.append(f"seed ball in round {j} overlaps earlier seeds")
                seen |= b
        if any(a >= b for a, b in zip(self.touches, self.touches[1:])):
            problems.append("touch counts not strictly increasing over successful rounds")
        if self.k_set is not None and np.any(arena.anchor & ~self.k_set):
            problems.append("K lost part of the anchor")
        if self.status == REACHED_T and arena.touches(self.k_set) < arena.t:
            problems.append("reached_t without t touches")
        zeta_balls = np.zeros(g.edge_count, dtype=bool)
        for balls in self.seed_sets:
            for b in balls:
                zeta_balls |= interior_edges(g, b)
        union = (sample.union() | (zeta_balls & sample.zeta.open)) & arena.domain
        reach = reachable(g, arena.anchor, union, arena.working)
        for j, c in enumerate(self.clusters):
            if np.any(c & ~reach):
                problems.append(f"cluster {j} is not joined to the anchor")
        return problems


def run_exploration(
    arena: Arena,
    params: ExplorationParams,
    seed: int,
    estimator: Optional[ConnectionEstimator] = None,
    sample_index: int = 0,
    strict: bool = False,
) -> Tuple[ExplorationState, LayeredSample]:
    """
    Run the touch exploration once. Returns the transcript and the layered
    sample it was run on.
    """
    if params.mode == "rigorous":
        phi_s = phi_of_set(arena.graph, arena.s).value
        if arena.t > params.c * phi_s:
            raise PreconditionError(f"t={arena.t} exceeds c * Phi(S) = {params.c * phi_s:.4g}.")
    estimator = estimator or ConnectionEstimator(master_seed=seed)
    estimator = estimator.substream(stream_id("exploration", sample_index))
    g = arena.graph
    sample = sample_layers(g, params.p, params.q, arena.domain, seed, sample_index)

    state = ExplorationState()
    state.seed_sets.append([])
    state.clusters.append(arena.anchor.copy())
    state.touches.append(arena.touches(arena.anchor))
    d_set = np.zeros(g.vertex_count, dtype=bool)
    k_set = arena.anchor.copy()

    for i in range(1, arena.t + 2):
        state.round_index = i
        if arena.touches(k_set) >= arena.t:
            state.status = REACHED_T
            break
        if i > arena.t:
            state.status = HALTED_BUDGET
            break
        if not (arena.s_outer & ~k_set).any():
            state.status = HALTED_NO_CONNECTION
            state.rounds.append(RoundRecord(i, [], None, 0, state.touches[-1], state.status))
            break
        try:
            seeds = seeds_function(d_set, k_set, arena, params, estimator, strict=strict)
        except BudgetExhaustedError as exc:
            logging.info("Round %d stopped: %s", i, exc)
            state.status = HALTED_BUDGET
            break
        except NoAvoidingPathError as exc:
            logging.info("Round %d stopped: %s", i, exc)
            state.status = HALTED_NO_CONNECTION
            state.rounds.append(RoundRecord(i, [], None, 0, state.touches[-1], state.status))
            break
        balls = [m.ball for m in seeds]
        state.seed_sets.append(balls)
        centers = [m.center for m in seeds]
        for b in balls:
            d_set |= b
        chosen = next(
            (j for j, b in enumerate(balls) if np.all(sample.zeta.open[interior_edges(g, b)])), None
        )
        if chosen is None:
            state.status = HALTED_NO_SEED
            state.rounds.append(RoundRecord(i, centers, None, 0, state.touches[-1], state.status))
            break
        cluster = grow_seed(balls[chosen], d_set, k_set, sample, arena)
        if not (np.any(cluster & arena.s_outer & ~k_set) and np.any(cluster & k_set)):
            state.status = HALTED_NO_CONNECTION
            state.rounds.append(RoundRecord(i, centers, chosen, int(cluster.sum()), state.touches[-1], state.status))
            break
        k_set = k_set | cluster
        state.clusters.append(cluster)
        state.touches.append(arena.touches(k_set))
        state.rounds.append(RoundRecord(i, centers, chosen, int(cluster.sum()), state.touches[-1], RUNNING))
    state.d_set, state.k_set = d_set, k_set
    logging.debug("Exploration finished: %s after %d rounds", state.status, state.round_index)
    return state, sample


# ---------------------------------------------------------------------------
# Psi(S), merge bound, sprinkling
# ---------------------------------------------------------------------------

@dataclass
class PsiEstimate:
    curves: Dict[int, TailCurve]
    values: np.ndarray
    monotone_violations: int
    stabilized: bool

    def shape_constant(self, radius: int) -> float:
        """Smallest eps with P(Psi >= t) >= (1 - eps)^t over the tabulated t >= 1."""
        curve = self.curves[radius]
        worst = 0.0
        for t, est in zip(curve.grid, curve.estimates):
            if t >= 1:
                worst = max(worst, 1.0 - est ** (1.0 / t) if est > 0 else 1.0)
        return worst


def _psi_sample(g, s, regions, q, seed, i):
    labels = EdgeLabels(g.edge_count, seed, stream_id("psi", i))
    opened = labels.open_below(q)
    crossing = g.edges[boundaries(g, s).edge_boundary]
    outer_end = np.where(s[crossing[:, 0]], crossing[:, 1], crossing[:, 0])
    out = []
    for region, shell in regions:
        reach = reachable(g, shell, opened, region & ~s)
        out.append(int(np.count_nonzero(reach[outer_end])))
    return out


def psi_values(g: FiniteGraph, s: np.ndarray, q: float, radii: Sequence[int], seed: int, i: int) -> List[int]:
    """Psi_R(S) for each radius on the labels of replica ``i``."""
    origin = g.vertex_mask([g.origin])
    regions = [(ball(g, origin, r + 1), sphere(g, origin, r + 1)) for r in radii]
    return _psi_sample(g, s, regions, q, seed, i)


def estimate_psi(
    s: np.ndarray, q: float, g: FiniteGraph, radii: Sequence[int],
    samples: int, seed: int, workers: int = 1,
) -> PsiEstimate:
    """
    Distribution of Psi_R(S) = #{e in ∂S : e joined to sphere(R+1) off S}
    for each R, all radii sharing labels.
    """
    s = np.asarray(s, dtype=bool)
    origin = g.vertex_mask([g.origin])
    dist = bfs_distances(g, origin)
    limit = interior_radius(g)
    for r in radii:
        if np.any(dist[s] > r) or np.any(dist[s] < 0):
            raise PreconditionError(f"S is not inside B_{r}.")
        if r + 1 > limit:
            raise PreconditionError(f"B_{r + 1} exceeds the faithful part of the graph (radius {limit}).")
    radii = sorted(radii)
    regions = [((dist >= 0) & (dist <= r + 1), dist == r + 1) for r in radii]
    values = np.array(replicate(partial(_psi_sample, g, s, regions, q, seed), samples, workers), dtype=np.int64)
    boundary = int(boundaries(g, s).edge_boundary.sum())
    grid = list(range(boundary + 1))
    curves = {
        r: TailCurve("psi", grid, [int(np.count_nonzero(values[:, j] >= t)) for t in grid], samples, q, r, seed)
        for j, r in enumerate(radii)
    }
    violations = int(np.count_nonzero(np.any(np.diff(values, axis=1) > 0, axis=1))) if len(radii) > 1 else 0
    stabilized = False
    if len(radii) > 1:
        last, prev = curves[radii[-1]], curves[radii[-2]]
        gap = np.abs(last.estimates - prev.estimates)
        stabilized = bool(np.all(gap <= last.halfwidths + prev.halfwidths))
    return PsiEstimate(curves, values, violations, stabilized)


@dataclass
class MergeBoundReport:
    eps: float
    frequency: Estimate
    bound: float
    conditional_mean: float

    @property
    def within_bound(self) -> bool:
        return self.frequency.value <= self.bound + 3 * self.frequency.sigma + 1e-12


def merge_eps(p: float, q: float) -> float:
    """eps solving (1-q)(1-eps) = 1-p."""
    if p < q:
        raise PreconditionError("The merge bound needs p >= q (omega at q, union at p).")
    if p >= 1:
        raise PreconditionError("p must be below 1.")
    return 1.0 - (1.0 - p) / (1.0 - q)


def _merge_event(g, s, region, shell, omega, zeta, t):
    """(event, |∂K ∩ ∂M|, K misses S) for one pair of configurations."""
    k = reachable(g, shell, omega, region)
    if np.any(k & s):
        return False, 0, False
    u, v = g.edges[:, 0], g.edges[:, 1]
    closure_k = k[u] | k[v]
    m = reachable(g, s & ~k, (omega | zeta) & ~closure_k, region)
    common = (k[u] != k[v]) & (m[u] != m[v])
    size = int(np.count_nonzero(common))
    event = size >= t and not np.any(zeta & common)
    return event, size, True


def _merge_sample(g, s, region, shell, domain, p, q, eps, t, seed, i):
    omega = EdgeLabels(g.edge_count, seed, stream_id("merge-omega", i)).open_below(q, domain)
    zeta = EdgeLabels(g.edge_count, seed, stream_id("merge-zeta", i)).open_below(eps, domain)
    event, size, clear = _merge_event(g, s, region, shell, omega, zeta, t)
    weight = (1.0 - eps) ** size if clear and size >= t else 0.0
    return event, weight


def verify_merge_bound(
    s: np.ndarray, p: float, q: float, t: int, g: FiniteGraph,
    samples: int, seed: int, radius: Optional[int] = None, workers: int = 1,
) -> MergeBoundReport:
    """
    Frequency of E = {K ∩ S = ∅, |∂K ∩ ∂M| >= t, zeta closed on ∂K ∩ ∂M}
    against (1 - eps)^t, with omega at q and zeta at eps; K is the omega
    cluster of the shell and M the cluster of S off the closure of K.
    """
    eps = merge_eps(p, q)
    s = np.asarray(s, dtype=bool)
    origin = g.vertex_mask([g.origin])
    dist = bfs_distances(g, origin)
    radius = interior_radius(g) - 1 if radius is None else radius
    if np.any(dist[s] > radius):
        raise PreconditionError("S must lie inside B_R.")
    region = (dist >= 0) & (dist <= radius + 1)
    shell = dist == radius + 1
    domain = interior_edges(g, region)
    fn = partial(_merge_sample, g, s, region, shell, domain, p, q, eps, t, seed)
    results = replicate(fn, samples, workers)
    hits = sum(1 for e, _ in results if e)
    cond = float(np.mean([w for _, w in results])) if results else 0.0
    return MergeBoundReport(eps, Estimate(hits, samples), (1.0 - eps) ** t, cond)


@dataclass
class ExactMergeReport:
    probability: float
    bound: float
    identity_residual: float
    classes: int


def exact_merge_bound(
    g: FiniteGraph, s: np.ndarray, shell: np.ndarray, p: float, q: float, t: int,
    domain: Optional[np.ndarray] = None,
) -> ExactMergeReport:
    """
    Exact P(E) by enumerating every (omega, zeta) pair on ``domain``, plus
    the largest deviation of P(zeta closed on ∂K ∩ ∂M | K, M) from
    (1 - eps)^{|∂K ∩ ∂M|}.
    """
    eps = merge_eps(p, q)
    domain = g.all_edges() if domain is None else domain
    idx = np.flatnonzero(domain)
    if len(idx) > 10:
        raise BudgetExhaustedError("Two-layer enumeration is limited to 10 edges.")
    region = g.all_vertices()
    configs = []
    for bits in itertools.product((False, True), repeat=len(idx)):
        mask = np.zeros(g.edge_count, dtype=bool)
        mask[idx] = bits
        configs.append((mask, sum(bits)))
    m = len(idx)
    u, v = g.edges[:, 0], g.edges[:, 1]
    total = 0.0
    joint: Dict[bytes, List[float]] = {}
    sizes: Dict[bytes, int] = {}
    for omega, ko in configs:
        w_omega = q ** ko * (1 - q) ** (m - ko)
        if w_omega == 0:
            continue
        k = reachable(g, shell, omega, region)
        if np.any(k & s):
            continue
        closure_k = k[u] | k[v]
        for zeta, kz in configs:
            w = w_omega * eps ** kz * (1 - eps) ** (m - kz)
            if w == 0:
                continue
            mm = reachable(g, s & ~k, (omega | zeta) & ~closure_k, region)
            common = (k[u] != k[v]) & (mm[u] != mm[v])
            size = int(np.count_nonzero(common))
            closed = not np.any(zeta & common)
            key = np.packbits(np.concatenate([k, mm])).tobytes()
            acc = joint.setdefault(key, [0.0, 0.0])
            acc[0] += w
            if closed:
                acc[1] += w
            sizes[key] = size
            if closed and size >= t:
                total += w
    residual = 0.0
    for key, (mass, closed_mass) in joint.items():
        residual = max(residual, abs(closed_mass / mass - (1 - eps) ** sizes[key]))
    return ExactMergeReport(total, (1 - eps) ** t, residual, len(joint))


@dataclass
class SprinklingReport:
    hypothesis: Estimate
    conclusion: Estimate
    alpha: float
    eps: float

    @property
    def hypothesis_ok(self) -> bool:
        return self.hypothesis.value >= 1 - self.alpha

    @property
    def conclusion_ok(self) -> bool:
        return self.conclusion.value >= 1 - self.eps - self.conclusion.halfwidth


def _sprinkling_sample(g, source, target, allowed, inner_domain, rim, p, eta, seed, i):
    omega = EdgeLabels(g.edge_count, seed, stream_id("sprinkle-omega", i))
    xi = EdgeLabels(g.edge_count, seed, stream_id("sprinkle-xi", i))
    full = omega.open_below(p, interior_edges(g, allowed))
    plain = bool(np.any(reachable(g, source, full, allowed) & target))
    thinned = (full & inner_domain) | xi.open_below(eta, rim)
    sprinkled = bool(np.any(reachable(g, source, thinned, allowed) & target))
    return plain, sprinkled


def verify_sprinkling(
    g: FiniteGraph, source: np.ndarray, target: np.ndarray, p: float, eta: float, eps: float,
    samples: int, seed: int, allowed: Optional[np.ndarray] = None, workers: int = 1,
) -> SprinklingReport:
    """
    Estimate P_p(B <-> R) and P(B <-> R in omega off R plus eta-percolation
    on ∂R); the first at least 1 - alpha should force the second to at least
    1 - eps, alpha being the calibrated sprinkling constant.
    """
    allowed = g.all_vertices() if allowed is None else allowed
    _, alpha = calibrate_sprinkling(p, eta, eps)
    inner_domain = interior_edges(g, allowed & ~target)
    rim = boundaries(g, target).edge_boundary & interior_edges(g, allowed)
    fn = partial(_sprinkling_sample, g, source, target, allowed, inner_domain, rim, p, eta, seed)
    results = replicate(fn, samples, workers)
    plain = sum(1 for a, _ in results if a)
    sprinkled = sum(1 for _, b in results if b)
    return SprinklingReport(Estimate(plain, samples), Estimate(sprinkled, samples), alpha, eps)
