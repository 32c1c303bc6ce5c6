# tests/test_percolation.py

import math
import operator
import unittest
from functools import partial

import numpy as np
from hypothesis import given, settings, strategies as st

from perc_lab.errors import BudgetExhaustedError, PreconditionError
from perc_lab.graphs import FiniteGraph, GraphSpec, generate
from perc_lab.percolation import (
    ClusterIndex,
    component_labels,
    connected,
    eta_for,
    exact_expectation,
    exact_layer_law,
    left_right_crossing,
    reachable,
    sample_config,
    sample_layers,
)
from perc_lab.rng import EdgeLabels, mask_digest, stream_id
from perc_lab.stats import Estimate, replicate, wilson_interval
from tests.oracles import bfs_labels, exact_law

BOX = generate(GraphSpec("zd_box", d=2, side=5))


@st.composite
def small_graphs(draw):
    """Random simple graphs on up to 7 vertices with at most 12 edges."""
    n = draw(st.integers(min_value=2, max_value=7))
    pairs = [(u, v) for u in range(n) for v in range(u + 1, n)]
    chosen = draw(st.lists(st.sampled_from(pairs), unique=True, max_size=12))
    g = FiniteGraph(n, np.array(chosen, dtype=np.int64).reshape(-1, 2), n - 1)
    bits = draw(st.lists(st.booleans(), min_size=g.edge_count, max_size=g.edge_count))
    return g, np.array(bits, dtype=bool)


class TestLabels(unittest.TestCase):

    def test_labels_are_reproducible(self):
        """Labels depend only on (seed, stream, edge index)."""
        a = EdgeLabels(100, 7, stream_id("x", 3))
        b = EdgeLabels(100, 7, stream_id("x", 3))
        c = EdgeLabels(100, 7, stream_id("x", 4))
        np.testing.assert_array_equal(a.values, b.values)
        self.assertFalse(np.array_equal(a.values, c.values))

    def test_prefix_is_stable(self):
        """A longer label array extends a shorter one with the same seed and stream."""
        short = EdgeLabels(10, 1, 5).values
        long = EdgeLabels(20, 1, 5).values
        np.testing.assert_array_equal(short, long[:10])

    def test_uniforms_in_unit_interval(self):
        """Float labels lie in [0, 1) and are roughly uniform."""
        u = EdgeLabels(20_000, 3, 9).uniforms()
        self.assertTrue(np.all((u >= 0) & (u < 1)))
        self.assertAlmostEqual(float(u.mean()), 0.5, delta=0.02)

    def test_mask_digest_distinguishes_masks(self):
        """Different masks give different digests; equal masks equal ones."""
        a = np.array([True, False, True])
        self.assertEqual(mask_digest(a), mask_digest(a.copy()))
        self.assertNotEqual(mask_digest(a), mask_digest(~a))


class TestCoupling(unittest.TestCase):

    @settings(max_examples=50, deadline=None)
    @given(p1=st.floats(0, 1), p2=st.floats(0, 1), seed=st.integers(0, 2 ** 40))
    def test_threshold_coupling_is_monotone(self, p1, p2, seed):
        """With shared labels, the open set at the smaller density is contained in the larger one."""
        lo, hi = sorted((p1, p2))
        labels = EdgeLabels(BOX.edge_count, seed, stream_id("monotone"))
        small = sample_config(labels, lo).open
        large = sample_config(labels, hi).open
        self.assertFalse(np.any(small & ~large))

    def test_extreme_densities(self):
        """p = 0 opens nothing and p = 1 opens everything in the domain."""
        labels = EdgeLabels(BOX.edge_count, 0, 1)
        self.assertEqual(sample_config(labels, 0.0).open_count, 0)
        self.assertEqual(sample_config(labels, 1.0).open_count, BOX.edge_count)
        domain = BOX.edge_mask([0, 1, 2])
        self.assertEqual(sample_config(labels, 1.0, domain).open_count, 3)

    def test_density_outside_unit_interval(self):
        """Densities outside [0, 1] are rejected."""
        with self.assertRaises(PreconditionError):
            sample_config(EdgeLabels(4, 0, 0), 1.5)

    def test_eta_identity(self):
        """(1-p)(1-eta)^2 = 1-q to within 1e-12."""
        for p, q in ((0.5, 0.75), (0.1, 0.9), (0.3, 0.3), (0.0, 0.5)):
            eta = eta_for(p, q)
            self.assertAlmostEqual((1 - p) * (1 - eta) ** 2, 1 - q, delta=1e-12)
        self.assertEqual(eta_for(0.4, 0.4), 0.0)
        self.assertAlmostEqual(eta_for(0.5, 0.75), 1 - math.sqrt(0.5), places=12)

    def test_eta_preconditions(self):
        """q < p and q = 1 are rejected."""
        with self.assertRaises(PreconditionError):
            eta_for(0.6, 0.5)
        with self.assertRaises(PreconditionError):
            eta_for(0.5, 1.0)

    def test_layers_use_distinct_streams(self):
        """The three layers are drawn from different streams and stay inside the domain."""
        domain = BOX.edge_mask(range(10))
        sample = sample_layers(BOX, 0.5, 0.9, domain, seed=11, sample_index=2)
        for layer in (sample.omega, sample.xi, sample.zeta):
            self.assertFalse(np.any(layer.open & ~domain))
        again = sample_layers(BOX, 0.5, 0.9, domain, seed=11, sample_index=2)
        np.testing.assert_array_equal(sample.union(), again.union())

    def test_exact_layer_law(self):
        """The union of the three layers is exactly product Bernoulli(q)."""
        self.assertLess(exact_layer_law(3, 0.3, 0.6), 1e-12)
        self.assertLess(exact_layer_law(1, 0.0, 0.5), 1e-12)
        with self.assertRaises(BudgetExhaustedError):
            exact_layer_law(7, 0.3, 0.6)

    def test_layer_union_frequency(self):
        """Empirical union frequency on a box matches q within five standard errors."""
        n = 400
        counts = sum(sample_layers(BOX, 0.4, 0.7, None, 5, i).union().astype(int) for i in range(n))
        freq = counts.sum() / (n * BOX.edge_count)
        self.assertAlmostEqual(freq, 0.7, delta=5 * math.sqrt(0.21 / (n * BOX.edge_count)))


class TestClusters(unittest.TestCase):

    @settings(max_examples=30, deadline=None)
    @given(bits=st.lists(st.booleans(), min_size=BOX.edge_count, max_size=BOX.edge_count))
    def test_union_find_matches_csgraph(self, bits):
        """Union-find clusters and scipy component labels induce the same partition."""
        mask = np.array(bits, dtype=bool)
        index = ClusterIndex(BOX, mask)
        labels = component_labels(BOX, mask)
        for u, v in ((0, 24), (12, 13), (6, 18)):
            self.assertEqual(index.same(u, v), labels[u] == labels[v])
        self.assertEqual(int(index.component_sizes().sum()), BOX.vertex_count)

    def test_reachable_respects_allowed(self):
        """Reachability never leaves the allowed set and drops sources outside it."""
        g = FiniteGraph(4, np.array([[0, 1], [1, 2], [2, 3]]), 2)
        everything = g.all_edges()
        allowed = g.vertex_mask([0, 1, 3])
        hit = reachable(g, g.vertex_mask([0]), everything, allowed)
        self.assertEqual(np.flatnonzero(hit).tolist(), [0, 1])
        self.assertFalse(reachable(g, g.vertex_mask([2]), everything, allowed).any())

    def test_connected_overlap_and_empty(self):
        """Overlapping sets are connected; an empty side never is."""
        a = BOX.vertex_mask([3])
        self.assertTrue(connected(BOX, a, a, BOX.edge_mask()))
        self.assertFalse(connected(BOX, a, BOX.vertex_mask(), BOX.all_edges()))

    def test_crossing_extremes(self):
        """All-open boxes are crossed and all-closed boxes are not."""
        self.assertTrue(left_right_crossing(BOX, BOX.all_edges()))
        self.assertFalse(left_right_crossing(BOX, BOX.edge_mask()))

    def test_exact_expectation_on_a_path(self):
        """P(0 <-> 2) on a two-edge path is p^2."""
        g = FiniteGraph(3, np.array([[0, 1], [1, 2]]), 2)
        value = exact_expectation(g, 0.3, lambda m: connected(g, g.vertex_mask([0]), g.vertex_mask([2]), m))
        self.assertAlmostEqual(value, 0.09, places=12)

    def test_exact_expectation_budget(self):
        """More than 16 free edges exhausts the enumeration budget."""
        g = generate(GraphSpec("zd_box", d=2, side=4))
        with self.assertRaises(BudgetExhaustedError):
            exact_expectation(g, 0.5, lambda m: 0.0)


class TestAgainstOracles(unittest.TestCase):

    @settings(max_examples=60, deadline=None)
    @given(case=small_graphs())
    def test_partition_matches_brute_force(self, case):
        """Union-find and csgraph labels induce the brute-force BFS partition."""
        g, mask = case
        truth = bfs_labels(g.vertex_count, [tuple(map(int, e)) for e in g.edges[mask]])
        index = ClusterIndex(g, mask)
        labels = component_labels(g, mask)
        for u in range(g.vertex_count):
            for v in range(g.vertex_count):
                same = truth[u] == truth[v]
                self.assertEqual(bool(index.same(u, v)), same)
                self.assertEqual(bool(labels[u] == labels[v]), same)

    def test_four_cycle(self):
        """On the 4-cycle at p = 1/2, P(|C_o| = 4) = 5/16 exactly."""
        g = FiniteGraph(4, np.array([[0, 1], [1, 2], [2, 3], [0, 3]]), 2)
        value = exact_expectation(g, 0.5, lambda m: ClusterIndex(g, m).size_of(0) == 4)
        self.assertEqual(value, 5 / 16)
        law = exact_law(4, [tuple(map(int, e)) for e in g.edges], 0.5, lambda lab: lab.count(lab[0]))
        self.assertEqual(law[4], 5 / 16)

    def test_cluster_size_law_matches_oracle(self):
        """The law of |C_o| on a 2x3 grid agrees with brute-force enumeration."""
        g = generate(GraphSpec("zd_box", d=2, side=3))
        sub = FiniteGraph(6, g.edges[(g.edges < 6).all(axis=1)], 4)
        edges = [tuple(map(int, e)) for e in sub.edges]
        law = exact_law(6, edges, 0.3, lambda lab: lab.count(lab[0]))
        for k in range(1, 7):
            value = exact_expectation(sub, 0.3, lambda m, k=k: ClusterIndex(sub, m).size_of(0) == k)
            self.assertAlmostEqual(value, law.get(k, 0.0), places=12)


class TestStats(unittest.TestCase):

    def test_wilson_interval_contains_estimate(self):
        """The interval contains the point estimate and stays within [0, 1]."""
        for k, n in ((0, 10), (10, 10), (3, 17), (500, 1000)):
            lo, hi = wilson_interval(k, n)
            self.assertLessEqual(0.0, lo)
            self.assertLessEqual(lo, k / n + 1e-12)
            self.assertLessEqual(k / n - 1e-12, hi)
            self.assertLessEqual(hi, 1.0)
        self.assertEqual(wilson_interval(0, 0), (0.0, 1.0))

    def test_estimate_fields(self):
        """Estimate reports value, halfwidth and a JSON-ready dict."""
        e = Estimate(25, 100)
        self.assertEqual(e.value, 0.25)
        self.assertGreater(e.halfwidth, 0)
        self.assertEqual(e.to_dict()["samples"], 100)

    def test_replicate_is_ordered_for_any_worker_count(self):
        """Replica results come back in index order regardless of workers."""
        fn = partial(operator.mul, 3)
        serial = replicate(fn, 11, workers=1)
        self.assertEqual(serial, [3 * i for i in range(11)])
        self.assertEqual(replicate(fn, 11, workers=3), serial)


if __name__ == "__main__":
    unittest.main()
