# perc_lab/tails.py

"""
Volume and radius tails of finite clusters, decay fits against Phi(n), and
the collecting-mass schedule v_n with its Monte Carlo companion.
"""

import logging
import math
from dataclasses import dataclass
from functools import partial
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import integrate, optimize, stats

from .constants import DECAY_ENVELOPE_SIGMAS, MASS_RESIDUAL_TOLERANCE
from .errors import PreconditionError
from .graphs import FiniteGraph, GraphSpec, ball, bfs_distances, boundaries, generate, interior_edges
from .isoperimetry import IsoProfile, phi_of_set
from .percolation import left_right_crossing, reachable
from .rng import EdgeLabels, stream_id
from .stats import Estimate, replicate, wilson_interval

PhiLike = Union[IsoProfile, Callable[[float], float]]


@dataclass(frozen=True)
class PowerLaw:
    """Model profile Phi(t) = coefficient * t^exponent (picklable, unlike a lambda)."""

    coefficient: float = 1.0
    exponent: float = 0.5

    def __call__(self, t: float) -> float:
        return self.coefficient * max(float(t), 0.0) ** self.exponent


@dataclass
class TailCurve:
    """Per-threshold frequencies with Wilson half-widths and replay metadata."""

    kind: str
    grid: List[int]
    successes: List[int]
    samples: int
    p: float
    radius: Optional[int] = None
    seed: Optional[int] = None

    @property
    def estimates(self) -> np.ndarray:
        return np.array(self.successes, dtype=float) / max(self.samples, 1)

    @property
    def halfwidths(self) -> np.ndarray:
        out = []
        for k in self.successes:
            lo, hi = wilson_interval(k, self.samples)
            out.append((hi - lo) / 2.0)
        return np.array(out)

    def estimate_at(self, n: int) -> Estimate:
        return Estimate(self.successes[self.grid.index(n)], self.samples)

    def rows(self) -> List[Tuple]:
        return [
            (n, est, hw, self.radius, self.samples)
            for n, est, hw in zip(self.grid, self.estimates, self.halfwidths)
        ]


CURVE_HEADER = ("n", "estimate", "ci_halfwidth", "R", "samples")


@dataclass
class DecayFit:
    predictor: str
    slope: float
    intercept: float
    r_squared: float
    predictor_source: str
    points: int
    slope_stderr: float = 0.0


@dataclass
class DecayReport:
    phi_fit: DecayFit
    n_fit: DecayFit
    lower_constant: float
    upper_constant: float
    sandwich_ok: bool

    def to_dict(self) -> dict:
        return {
            "phi_fit": vars(self.phi_fit),
            "n_fit": vars(self.n_fit),
            "lower_constant": self.lower_constant,
            "upper_constant": self.upper_constant,
            "sandwich_ok": self.sandwich_ok,
        }


@dataclass
class MassSchedule:
    size_s: int
    c: float
    v: np.ndarray
    residuals: np.ndarray
    increment_ok: Optional[bool] = None

    def rows(self) -> List[Tuple[int, float, float]]:
        return [(n, float(v), float(r)) for n, (v, r) in enumerate(zip(self.v, self.residuals))]


@dataclass
class MassExperiment:
    schedule: MassSchedule
    trajectories: np.ndarray
    success: Estimate
    bound_exact_part: float
    bound_tail_part: float
    monotone_violations: int = 0
    initial_violations: int = 0

    @property
    def bound(self) -> float:
        return 1.0 - self.bound_exact_part - self.bound_tail_part


# ---------------------------------------------------------------------------
# Volume and radius tails
# ---------------------------------------------------------------------------

def _ball_region(g: FiniteGraph, radius: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    region = ball(g, g.vertex_mask([g.origin]), radius)
    return region, interior_edges(g, region), boundaries(g, region).inner


def _origin_cluster_sample(
    g: FiniteGraph, regions: Sequence[Tuple[np.ndarray, np.ndarray, np.ndarray]],
    p: float, seed: int, purpose: str, dist: np.ndarray, i: int,
) -> List[Tuple[int, bool, int]]:
    labels = EdgeLabels(g.edge_count, seed, stream_id(purpose, i))
    opened = labels.open_below(p)
    origin = g.vertex_mask([g.origin])
    out = []
    for region, domain, shell in regions:
        cluster = reachable(g, origin, opened & domain, region)
        out.append((int(cluster.sum()), not bool(np.any(cluster & shell)), int(dist[cluster].max())))
    return out


def volume_tail_sweep(
    g: FiniteGraph, p: float, n_grid: Sequence[int], radii: Sequence[int],
    samples: int, seed: int, workers: int = 1,
) -> Dict[int, TailCurve]:
    """Volume tails at several truncation radii under shared labels."""
    regions = [_ball_region(g, r) for r in radii]
    for r, (region, _, _) in zip(radii, regions):
        if max(n_grid) > int(region.sum()):
            raise PreconditionError(f"n={max(n_grid)} exceeds |B_{r}|={int(region.sum())}.")
    dist = bfs_distances(g, g.vertex_mask([g.origin]))
    fn = partial(_origin_cluster_sample, g, regions, p, seed, "volume-tail", dist)
    results = replicate(fn, samples, workers)
    curves = {}
    for j, r in enumerate(radii):
        successes = [sum(1 for res in results if res[j][1] and res[j][0] >= n) for n in n_grid]
        curves[r] = TailCurve("volume", list(n_grid), successes, samples, p, r, seed)
    return curves


def volume_tail(
    g: FiniteGraph, p: float, n_grid: Sequence[int], radius: int,
    samples: int, seed: int, workers: int = 1,
) -> TailCurve:
    """Frequency of {n <= |C_o| < inf}; clusters touching the inner boundary of B_R count as infinite."""
    return volume_tail_sweep(g, p, n_grid, [radius], samples, seed, workers)[radius]


def radius_tail_curve(
    g: FiniteGraph, p: float, ns: Sequence[int], radius: int,
    samples: int, seed: int, workers: int = 1,
) -> Tuple[TailCurve, int]:
    """
    Frequencies of {o <-> sphere(n), o finite} over ``ns`` from one set of
    labels, with the number of samples where the event at n+1 held but the
    event at n did not (always zero).
    """
    if max(ns) >= radius:
        raise PreconditionError(f"Need n < R, got n={max(ns)}, R={radius}.")
    dist = bfs_distances(g, g.vertex_mask([g.origin]))
    fn = partial(_origin_cluster_sample, g, [_ball_region(g, radius)], p, seed, "radius-tail", dist)
    results = [res[0] for res in replicate(fn, samples, workers)]
    grid = sorted(ns)
    hits = np.array([[finite and reach >= n for n in grid] for _, finite, reach in results], dtype=bool)
    violations = int(np.count_nonzero(hits[:, 1:] & ~hits[:, :-1])) if len(grid) > 1 else 0
    curve = TailCurve("radius", grid, hits.sum(axis=0).astype(int).tolist(), samples, p, radius, seed)
    return curve, violations


def radius_tail(
    g: FiniteGraph, p: float, n: int, radius: int, samples: int, seed: int, workers: int = 1
) -> Estimate:
    """Estimate of P(o <-> sphere(n) and o does not reach the inner boundary of B_R)."""
    curve, _ = radius_tail_curve(g, p, [n], radius, samples, seed, workers)
    return Estimate(curve.successes[0], samples)


# ---------------------------------------------------------------------------
# Decay fits
# ---------------------------------------------------------------------------

def _phi_values(phi: PhiLike, grid: Sequence[int]) -> Tuple[np.ndarray, str]:
    if isinstance(phi, IsoProfile):
        values = np.array([phi.phi(n) for n in grid], dtype=float)
        exact = all(n in phi.exact for n in grid)
        return values, "exact profile" if exact else "fitted asymptote"
    return np.array([phi(n) for n in grid], dtype=float), "model"


def _linear_fit(x: np.ndarray, y: np.ndarray, predictor: str, source: str) -> DecayFit:
    if np.ptp(x) == 0:
        raise PreconditionError(f"Predictor '{predictor}' is constant on the grid.")
    res = stats.linregress(x, y)
    r_squared = 1.0 if np.ptp(y) == 0 else float(res.rvalue ** 2)
    stderr = float(res.stderr) if np.isfinite(res.stderr) else 0.0
    return DecayFit(predictor, float(res.slope), float(res.intercept), r_squared, source, len(x), stderr)


def fit_decay(curve: TailCurve, phi: PhiLike, sigmas: float = DECAY_ENVELOPE_SIGMAS) -> DecayReport:
    """
    Regress log(estimate) on Phi(n) and on n over the strictly positive
    estimates. The envelope constants are the fitted rate minus and plus
    ``sigmas`` slope standard errors; the sandwich holds when the lower
    constant is positive and every Wilson interval meets the band
    A exp(-C Phi(n)) <= P <= A exp(-c Phi(n)), A the fitted prefactor.
    """
    estimates = curve.estimates
    keep = estimates > 0
    if np.count_nonzero(keep) < 4:
        raise PreconditionError("fit_decay needs at least four positive estimates.")
    grid = np.array(curve.grid)[keep]
    logs = np.log(estimates[keep])
    phis, source = _phi_values(phi, grid.tolist())
    phi_fit = _linear_fit(phis, logs, "phi", source)
    n_fit = _linear_fit(grid.astype(float), logs, "n", "grid")

    rate, spread = -phi_fit.slope, sigmas * phi_fit.slope_stderr
    lower, upper = rate - spread, rate + spread
    intervals = np.array([wilson_interval(k, curve.samples) for k in np.array(curve.successes)[keep]])
    floor = np.exp(phi_fit.intercept - upper * phis)
    ceiling = np.exp(phi_fit.intercept - lower * phis)
    inside = (intervals[:, 1] >= floor) & (intervals[:, 0] <= ceiling)
    if not inside.all():
        logging.info("Decay envelope missed at n=%s", grid[~inside].tolist())
    return DecayReport(phi_fit, n_fit, float(lower), float(upper), bool(lower > 0 and inside.all()))


# ---------------------------------------------------------------------------
# Collecting mass
# ---------------------------------------------------------------------------

def mass_constant(c_prime: float, p: float, d: int) -> float:
    """min(-c' / (4 d log(1-p)), 1 / (2d))."""
    if not 0 < p < 1:
        raise PreconditionError("mass_constant needs p in (0, 1).")
    return min(-c_prime / (4 * d * math.log(1 - p)), 1.0 / (2 * d))


def _inverse_integral(phi: PhiLike, c: float, a: float, b: float) -> float:
    """Integral of 1 / (c Phi(t)) over [a, b]."""
    if b <= a:
        return 0.0
    if isinstance(phi, IsoProfile):
        # Phi(t) = Phi(ceil t) is constant on each (k-1, k]
        k_lo, k_hi = max(1, math.ceil(a)), max(1, math.ceil(b))
        if k_lo == k_hi:
            return (b - a) / (c * phi.phi(k_lo))
        total = (k_lo - a) / (c * phi.phi(k_lo))
        ks = np.arange(k_lo + 1, k_hi)
        if len(ks):
            total += float(np.sum(1.0 / (c * np.array([phi.phi(k) for k in ks]))))
        total += (b - (k_hi - 1)) / (c * phi.phi(k_hi))
        return total
    value, _ = integrate.quad(lambda t: 1.0 / (c * phi(t)), a, b, epsabs=1e-13, epsrel=1e-12, limit=400)
    return value


def solve_v_n(
    size_s: int, c: float, phi: PhiLike, n_max: int, d: Optional[int] = None
) -> MassSchedule:
    """
    Solve the integral of 1/(c Phi) from |S| to v_n equal to n for n = 0..n_max.

    Each step brackets v_{n+1} to the right of v_n by doubling and refines it
    with Brent's method. When ``d`` is given and c <= 1/(2d), the increment
    bound v_{n+1} - v_n <= 2 c Phi(v_n) is checked.
    """
    if c <= 0:
        raise PreconditionError("c must be positive.")
    if size_s < 1:
        raise PreconditionError("|S| must be at least 1.")
    v = [float(size_s)]
    for _ in range(n_max):
        start = v[-1]
        phi_start = phi.phi(start) if isinstance(phi, IsoProfile) else phi(start)
        if phi_start <= 0:
            raise PreconditionError(f"Phi model is nonpositive at t={start}.")
        step = max(c * phi_start, 1e-9)
        while _inverse_integral(phi, c, start, start + step) < 1.0:
            step *= 2.0
        root = optimize.brentq(
            lambda x: _inverse_integral(phi, c, start, x) - 1.0, start, start + step, xtol=1e-12, rtol=1e-14
        )
        v.append(root)
    v_arr = np.array(v)
    residuals = np.array([abs(_inverse_integral(phi, c, size_s, x) - n) for n, x in enumerate(v_arr)])
    if residuals.max() > MASS_RESIDUAL_TOLERANCE:
        logging.warning("v_n residual %.3g exceeds tolerance", residuals.max())

    increment_ok = None
    if d is not None and c <= 1.0 / (2 * d):
        phi_at = phi.phi if isinstance(phi, IsoProfile) else phi
        points = v_arr[:-1]
        try:
            doubling = all(phi_at(2 * x) <= 2 * phi_at(x) + 1e-12 for x in points)
        except PreconditionError:
            doubling = False
        if doubling:
            bounds = 2 * c * np.array([phi_at(x) for x in points])
            increment_ok = bool(np.all(np.diff(v_arr) <= bounds + 1e-9))
    return MassSchedule(size_s, c, v_arr, residuals, increment_ok)


def mass_bound(size_s: int, c: float, phi: PhiLike) -> Tuple[float, float]:
    """
    Sum of exp(-c Phi(n)) over n >= |S|, split into the exactly tabulated part
    and an integral bound for the modelled tail.
    """
    if isinstance(phi, IsoProfile):
        ns = [n for n in phi.exact if n >= size_s]
        exact_part = float(sum(math.exp(-c * phi.exact[n]) for n in ns))
        start = max(phi.n_max, size_s - 1)
        if phi.coefficient is None:
            logging.warning("No asymptote fitted; the tail of the bound is omitted.")
            return exact_part, 0.0
        a, gamma = phi.coefficient, phi.exponent()
        tail_fn = lambda x: math.exp(-c * a * x ** gamma)
    else:
        start = size_s + 999
        exact_part = float(sum(math.exp(-c * phi(n)) for n in range(size_s, start + 1)))
        tail_fn = lambda x: math.exp(-c * phi(x))
    tail_part, _ = integrate.quad(tail_fn, start, np.inf, limit=400)
    return exact_part, float(tail_part)


def _mass_sample(
    g: FiniteGraph, s: np.ndarray, dist: np.ndarray, p: float, n_max: int, seed: int, i: int
) -> np.ndarray:
    labels = EdgeLabels(g.edge_count, seed, stream_id("collect-mass", i))
    opened = labels.open_below(p)
    out = np.zeros(n_max + 1, dtype=np.int64)
    for n in range(n_max + 1):
        region = (dist >= 0) & (dist <= n)
        out[n] = int(reachable(g, s, opened, region).sum())
    return out


def collect_mass_experiment(
    g: FiniteGraph, s: np.ndarray, p: float, c: float, n_max: int,
    samples: int, seed: int, phi: PhiLike, workers: int = 1,
) -> MassExperiment:
    """
    Track M_n = |vertices of B_n(S) joined to S inside B_n(S)| against the
    schedule v_n and report the success frequency next to the analytic bound.
    """
    s = np.asarray(s, dtype=bool)
    dist = bfs_distances(g, s, max_depth=n_max)
    inside = dist >= 0
    if np.any(g.degrees()[inside] < g.degree_bound):
        raise PreconditionError("B_n(S) reaches the free boundary; enlarge the truncation.")
    schedule = solve_v_n(int(s.sum()), c, phi, n_max, d=g.degree_bound)
    fn = partial(_mass_sample, g, s, dist, p, n_max, seed)
    traj = np.array(replicate(fn, samples, workers))
    wins = int(np.count_nonzero(np.all(traj >= schedule.v - 1e-9, axis=1)))
    exact_part, tail_part = mass_bound(int(s.sum()), c, phi)
    monotone = int(np.count_nonzero(np.any(np.diff(traj, axis=1) < 0, axis=1)))
    initial = int(np.count_nonzero(traj[:, 0] != int(s.sum())))
    return MassExperiment(schedule, traj, Estimate(wins, samples), exact_part, tail_part, monotone, initial)


# ---------------------------------------------------------------------------
# Cutset tail and crossing sweep
# ---------------------------------------------------------------------------

def _cutset_sample(
    g: FiniteGraph, s: np.ndarray, region: np.ndarray, domain: np.ndarray, shell: np.ndarray,
    p: float, seed: int, i: int,
) -> Optional[int]:
    labels = EdgeLabels(g.edge_count, seed, stream_id("cutset-tail", i))
    cluster = reachable(g, s, labels.open_below(p, domain), region)
    if np.any(cluster & shell):
        return None
    return phi_of_set(g, cluster).value


def cutset_tail(
    g: FiniteGraph, s: np.ndarray, p: float, n_grid: Sequence[int], radius: int,
    samples: int, seed: int, workers: int = 1,
) -> TailCurve:
    """Frequency of {C_S finite and Phi(C_S) >= n}, Phi(C_S) by max-flow."""
    region, domain, shell = _ball_region(g, radius)
    if np.any(s & ~region) or np.any(s & shell):
        raise PreconditionError("S must lie strictly inside the truncation.")
    fn = partial(_cutset_sample, g, s, region, domain, shell, p, seed)
    values = replicate(fn, samples, workers)
    successes = [sum(1 for v in values if v is not None and v >= n) for n in n_grid]
    return TailCurve("cutset", list(n_grid), successes, samples, p, radius, seed)


def _crossing_sample(g: FiniteGraph, ps: Sequence[float], seed: int, i: int) -> List[bool]:
    labels = EdgeLabels(g.edge_count, seed, stream_id("crossing", i))
    return [left_right_crossing(g, labels.open_below(p)) for p in ps]


def crossing_sweep(
    side: int, ps: Sequence[float], samples: int, seed: int, d: int = 2, workers: int = 1
) -> List[Tuple[float, Estimate]]:
    """Left-right crossing frequency of a Z^d box over a grid of p (shared labels, so monotone in p)."""
    g = generate(GraphSpec("zd_box", d=d, side=side))
    results = np.array(replicate(partial(_crossing_sample, g, list(ps), seed), samples, workers), dtype=bool)
    return [(p, Estimate(int(results[:, j].sum()), samples)) for j, p in enumerate(ps)]
