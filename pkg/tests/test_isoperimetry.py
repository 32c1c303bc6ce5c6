# tests/test_isoperimetry.py

import unittest

import numpy as np
from hypothesis import given, settings, strategies as st
from networkx.algorithms.flow import edmonds_karp

from perc_lab.errors import BudgetExhaustedError, PreconditionError
from perc_lab.graphs import GraphSpec, generate, invasion_cluster
from perc_lab.isoperimetry import fit_asymptotic, geometry_check, phi_of_set, phi_profile
from tests.oracles import min_enclosing_boundary

# Minimal edge boundary of n-cell polyominoes: 2 * ceil(2 * sqrt(n)).
Z2_PHI = {1: 4, 2: 6, 3: 8, 4: 8, 5: 10, 6: 10, 7: 12, 8: 12}


class TestPhiProfile(unittest.TestCase):

    def test_square_lattice_values(self):
        """Exact profile on Z^2 matches the polyomino perimeter formula."""
        profile = phi_profile(GraphSpec("zd_box", d=2, side=5), 8)
        self.assertEqual(profile.exact, Z2_PHI)
        self.assertTrue(profile.is_nondecreasing())
        self.assertTrue(profile.doubling_ok())

    def test_tree_values(self):
        """Connected sets of a 3-regular tree have boundary n + 2."""
        profile = phi_profile(GraphSpec("tree", degree=3, depth=1), 5)
        self.assertEqual(profile.exact, {n: n + 2 for n in range(1, 6)})
        self.assertIsNone(profile.dimension)

    def test_cubic_lattice_start(self):
        """On Z^3 a single vertex has boundary 6 and a domino 10."""
        profile = phi_profile(GraphSpec("zd_box", d=3, side=3), 3)
        self.assertEqual(profile.exact[1], 6)
        self.assertEqual(profile.exact[2], 10)

    def test_fit_and_lookup_beyond_table(self):
        """After fitting, Phi beyond n_max comes from a * n^((d-1)/d)."""
        profile = phi_profile(GraphSpec("zd_box", d=2, side=5), 8)
        a = fit_asymptotic(profile, 2)
        self.assertGreater(a, 3.5)
        self.assertLess(a, 4.5)
        self.assertEqual(profile.phi(3.2), 8.0)
        self.assertAlmostEqual(profile.phi(100), a * 10.0)

    def test_lookup_beyond_table_without_fit(self):
        """Without an asymptote, Phi beyond the table is a precondition failure."""
        profile = phi_profile(GraphSpec("tree", degree=3, depth=1), 3)
        with self.assertRaises(PreconditionError):
            profile.phi(10)

    def test_budget_exhaustion(self):
        """A tiny enumeration budget raises BudgetExhaustedError."""
        with self.assertRaises(BudgetExhaustedError):
            phi_profile(GraphSpec("zd_box", d=2, side=5), 8, budget=50)

    def test_n_max_must_be_positive(self):
        """n_max = 0 is rejected."""
        with self.assertRaises(PreconditionError):
            phi_profile(GraphSpec("zd_box", d=2, side=5), 0)


class TestPhiOfSet(unittest.TestCase):

    def setUp(self):
        self.g = generate(GraphSpec("zd_box", d=2, side=21))

    def test_single_vertex(self):
        """The cheapest cutset around one vertex is its 4 incident edges."""
        cert = phi_of_set(self.g, self.g.vertex_mask([self.g.origin]))
        self.assertEqual(cert.value, 4)
        self.assertTrue(cert.stabilized)
        self.assertEqual(int(cert.cutset.sum()), 4)

    def test_square_block(self):
        """A 3x3 block is separated by its own 12 boundary edges."""
        square = np.all(np.abs(self.g.coords) <= 1, axis=1)
        cert = phi_of_set(self.g, square)
        self.assertEqual(cert.value, 12)
        self.assertTrue(np.all(cert.enclosing_set[square]))

    def test_hollow_set_closes_up(self):
        """A ring's cutset is the outer boundary of its filled square, not the ring boundary."""
        ring = (np.abs(self.g.coords).max(axis=1) == 2)
        cert = phi_of_set(self.g, ring)
        self.assertEqual(cert.value, 20)

    def test_flow_algorithms_agree(self):
        """Dinitz and Edmonds-Karp give the same cut value."""
        plus = np.abs(self.g.coords).sum(axis=1) <= 1
        a = phi_of_set(self.g, plus)
        b = phi_of_set(self.g, plus, flow_func=edmonds_karp)
        self.assertEqual(a.value, b.value)
        self.assertEqual(a.value, 12)

    def test_shell_inside_set(self):
        """A schedule radius that does not clear W is rejected."""
        square = np.all(np.abs(self.g.coords) <= 2, axis=1)
        with self.assertRaises(PreconditionError):
            phi_of_set(self.g, square, r_schedule=[3])

    def test_empty_set(self):
        """An empty W is a precondition failure."""
        with self.assertRaises(PreconditionError):
            phi_of_set(self.g, self.g.vertex_mask())


class TestCutsetOracle(unittest.TestCase):

    def setUp(self):
        self.g = generate(GraphSpec("zd_box", d=2, side=9))
        self.dist = np.abs(self.g.coords).sum(axis=1)

    def _oracle(self, w: np.ndarray, radius: int) -> int:
        region = self.dist <= radius
        edges = [tuple(map(int, e)) for e in self.g.edges if region[e[0]] and region[e[1]]]
        free = [int(v) for v in np.flatnonzero((self.dist < radius) & ~w)]
        return min_enclosing_boundary(self.g.vertex_count, edges, np.flatnonzero(w).tolist(), free)

    def test_origin_and_pair(self):
        """Max-flow gives 4 for {o} and 6 for an adjacent pair, as exhaustive search does."""
        o = self.g.vertex_mask([self.g.origin])
        pair = self.g.vertex_mask([self.g.origin, self.g.vertex_at((1, 0))])
        for w, expected in ((o, 4), (pair, 6)):
            self.assertEqual(phi_of_set(self.g, w, r_schedule=[3]).value, expected)
            self.assertEqual(self._oracle(w, 3), expected)

    @settings(max_examples=15, deadline=None)
    @given(bits=st.lists(st.booleans(), min_size=5, max_size=5).filter(any))
    def test_flow_equals_exhaustive_cutset(self, bits):
        """For every W inside B_1 the max-flow value equals the exhaustive minimum at R = 3."""
        inner = np.flatnonzero(self.dist <= 1)
        w = self.g.vertex_mask([int(v) for v, b in zip(inner, bits) if b])
        self.assertEqual(phi_of_set(self.g, w, r_schedule=[3]).value, self._oracle(w, 3))


class TestGeometryCheck(unittest.TestCase):

    def setUp(self):
        self.g = generate(GraphSpec("zd_box", d=2, side=15))

    def test_square_passes(self):
        """A 3x3 square has boundary 12 >= delta * 4."""
        square = np.all(np.abs(self.g.coords) <= 1, axis=1)
        diag = geometry_check(self.g, square, 0.5)
        self.assertEqual(diag.diameter, 4)
        self.assertEqual(diag.boundary_size, 12)
        self.assertTrue(diag.verdict)
        self.assertTrue(diag.chain_ok)
        self.assertAlmostEqual(diag.delta, 0.25 / 192)

    def test_single_vertex(self):
        """Diameter zero is trivially fine."""
        diag = geometry_check(self.g, self.g.vertex_mask([self.g.origin]), 0.5)
        self.assertEqual(diag.diameter, 0)
        self.assertTrue(diag.verdict)

    def test_whole_graph_has_no_boundary(self):
        """A set with empty boundary and positive diameter fails the check."""
        small = generate(GraphSpec("zd_box", d=2, side=3))
        diag = geometry_check(small, small.all_vertices(), 0.5)
        self.assertEqual(diag.boundary_size, 0)
        self.assertFalse(diag.verdict)

    def test_profile_hypothesis(self):
        """A profile below eps*sqrt(n) marks the hypothesis as failed."""
        profile = phi_profile(GraphSpec("zd_box", d=2, side=5), 4)
        square = np.all(np.abs(self.g.coords) <= 1, axis=1)
        self.assertTrue(geometry_check(self.g, square, 0.5, profile).hypothesis_ok)
        self.assertFalse(geometry_check(self.g, square, 5.0, profile).hypothesis_ok)

    def test_levels_start_at_a_diameter_end(self):
        """On a T-shaped set the base is an end of the long bar and every level 0..m is populated."""
        cells = [(-1, 0)] + [(0, y) for y in range(-2, 3)]
        tee = self.g.vertex_mask([self.g.vertex_at(c) for c in cells])
        diag = geometry_check(self.g, tee, 0.5)
        self.assertEqual(diag.diameter, 4)
        self.assertEqual(abs(int(self.g.coords[diag.base_vertex][1])), 2)
        self.assertEqual(diag.f[:, 0].tolist(), [1, 1, 1, 2, 1])
        self.assertTrue(diag.quadratic_growth_ok)
        self.assertTrue(diag.verdict)

    def test_disconnected_rejected(self):
        """Disconnected sets are rejected."""
        two = self.g.vertex_mask([self.g.vertex_at((0, 0)), self.g.vertex_at((3, 0))])
        with self.assertRaises(PreconditionError):
            geometry_check(self.g, two, 0.5)

    @settings(max_examples=20, deadline=None)
    @given(size=st.integers(min_value=2, max_value=40), seed=st.integers(min_value=0, max_value=10 ** 6))
    def test_random_blobs(self, size, seed):
        """Random connected blobs satisfy the bound and the disjoint-family accounting."""
        weights = np.random.default_rng(seed).random(self.g.edge_count)
        blob = invasion_cluster(self.g, weights, size)
        diag = geometry_check(self.g, blob, 0.5)
        self.assertTrue(diag.verdict)
        self.assertTrue(diag.chain_ok)
        self.assertTrue(np.all(diag.f[:, 0] > 0))
        self.assertEqual(int(diag.f[:, 0].sum()), int(blob.sum()))
        covered = set()
        for lo, hi in diag.intervals(diag.cover):
            covered.update(k for k in range(diag.diameter + 1) if lo <= k <= hi)
        self.assertEqual(covered, set(range(diag.diameter + 1)))


if __name__ == "__main__":
    unittest.main()
