# tests/test_renormalization.py

import unittest

import numpy as np

from perc_lab.errors import GeometryError, PreconditionError
from perc_lab.rng import EdgeLabels, stream_id
from perc_lab.renormalization import (
    BlockParams,
    block_connection_prob,
    c_from_delta,
    coarse_grain,
    coarse_indicators,
    coarse_layout,
    gm_density_scan,
    half_space_touch_fraction,
    slab_crossing,
    uniqueness_event_prob,
)


class TestBlockParams(unittest.TestCase):

    def test_c_from_delta(self):
        """C = 2 * ceil(1/delta)."""
        self.assertEqual(c_from_delta(0.5), 4)
        self.assertEqual(c_from_delta(0.3), 8)
        for bad in (0.0, 1.0):
            with self.assertRaises(PreconditionError):
                c_from_delta(bad)

    def test_validation(self):
        """d < 2, C < 2 and short density scans are rejected."""
        with self.assertRaises(PreconditionError):
            BlockParams(1, 1, 3, 2).validate()
        with self.assertRaises(PreconditionError):
            BlockParams(2, 1, 3, 1).validate()
        with self.assertRaises(PreconditionError):
            BlockParams(2, 2, 5, 2).validate(scan=True)
        BlockParams(2, 1, 3, 2).validate(scan=True)

    def test_eta_prime(self):
        """eta' = eps^(C^2) / C and the floor follows from it."""
        params = BlockParams(3, 1, 3, 2, eps=0.5)
        self.assertAlmostEqual(params.eta_prime, 0.5 ** 4 / 2)
        self.assertAlmostEqual(params.connection_floor(), 0.5)
        self.assertIn("eta_prime", params.to_dict())


class TestBlockEvents(unittest.TestCase):

    def test_block_connection_extremes(self):
        """Separated seed boxes connect surely at p = 1 and never at p = 0."""
        self.assertEqual(block_connection_prob(1.0, 1, 3, 2, 2, samples=5, seed=0).value, 1.0)
        self.assertEqual(block_connection_prob(0.0, 1, 3, 2, 2, samples=5, seed=0).value, 0.0)

    def test_block_geometry(self):
        """B_k(n) sticking out of B_{Cn} is a geometry error."""
        with self.assertRaises(GeometryError):
            block_connection_prob(0.5, 5, 2, 2, 2, samples=1, seed=0)

    def test_uniqueness_extremes(self):
        """With everything closed or everything open, at most one cluster crosses."""
        self.assertEqual(uniqueness_event_prob(0.0, 1, 3, samples=3, seed=0, d=2).value, 1.0)
        self.assertEqual(uniqueness_event_prob(1.0, 1, 3, samples=3, seed=0, d=2).value, 1.0)
        with self.assertRaises(GeometryError):
            uniqueness_event_prob(0.5, 3, 3, samples=1, seed=0, d=2)


class TestCoarseField(unittest.TestCase):

    def test_open_field(self):
        """At p = 1 every coarse edge is open and the window is crossed."""
        config = coarse_grain(1.0, 1, 3, 2, 2, samples=2, seed=0, d=2)
        self.assertEqual(config.indicators.shape, (2, 4))
        self.assertEqual(config.min_marginal, 1.0)
        self.assertEqual(config.crossing.value, 1.0)
        self.assertEqual(config.giant_fraction, 1.0)
        self.assertTrue(config.far_covariance_ok())

    def test_closed_field(self):
        """At p = 0 no coarse edge is open and each site is its own cluster."""
        config = coarse_grain(0.0, 1, 3, 2, 2, samples=2, seed=0, d=2)
        self.assertFalse(config.indicators.any())
        self.assertEqual(config.crossing.value, 0.0)
        self.assertAlmostEqual(config.giant_fraction, 0.25)
        snap = config.snapshot(1)
        self.assertEqual(snap["window"], 2)
        self.assertEqual(len(snap["edges"]), 4)
        self.assertTrue(all(e[2] == 0 for e in snap["edges"]))

    def test_layout_support(self):
        """Each coarse indicator reads a nonempty, local set of fine edges."""
        layout = coarse_layout(2, 1, 3, 2, 3)
        support = layout.support(0)
        self.assertTrue(support.any())
        self.assertLess(int(support.sum()), layout.graph.edge_count)

    def test_indicator_is_local(self):
        """Resampling fine edges outside an indicator's support leaves that indicator unchanged."""
        layout = coarse_layout(2, 1, 3, 2, 2)
        m = layout.graph.edge_count
        first = EdgeLabels(m, 1, stream_id("local", 0)).open_below(0.6)
        other = EdgeLabels(m, 1, stream_id("local", 1)).open_below(0.6)
        base = coarse_indicators(layout, first)
        for e in range(layout.coarse.edge_count):
            support = layout.support(e)
            mixed = np.where(support, first, other)
            self.assertEqual(coarse_indicators(layout, mixed)[e], base[e])

    def test_layout_preconditions(self):
        """A one-site window and k >= n0 are rejected."""
        with self.assertRaises(PreconditionError):
            coarse_layout(2, 1, 3, 2, 1)
        with self.assertRaises(GeometryError):
            coarse_layout(2, 3, 3, 2, 2, n0=2)


class TestScans(unittest.TestCase):

    def test_density_scan_has_no_violations(self):
        """All-dense samples always contain two intersecting clusters."""
        rows = gm_density_scan(0.7, 1, [3], 0.5, samples=10, seed=3, d=2)
        row = rows[0]
        self.assertEqual(row.C, 4)
        self.assertEqual(row.densities.shape, (10, 4))
        self.assertEqual(row.violations, 0)
        self.assertEqual(len(row.rows()), 4)

    def test_density_scan_closed(self):
        """At p = 0 each C_i is its seed box, far below density 1/2."""
        row = gm_density_scan(0.0, 1, [3], 0.5, samples=2, seed=0, d=2)[0]
        self.assertEqual(row.all_dense.value, 0.0)
        self.assertTrue(np.all(row.densities < 0.5))

    def test_slab_crossing_extremes(self):
        """Open slabs are always crossed; thin crossings imply thick ones."""
        diag = slab_crossing(3, 1, 1.0, [3, 4], samples=3, seed=0)
        self.assertEqual([e.value for e in diag.crossings], [1.0, 1.0])
        self.assertEqual(diag.verdicts(), ["flat"])
        self.assertEqual(diag.monotone_violations, 0)
        closed = slab_crossing(3, 1, 0.0, [3], samples=3, seed=0)
        self.assertEqual(closed.crossings[0].value, 0.0)

    def test_slab_preconditions(self):
        """Zero thickness and non-increasing lengths are rejected."""
        with self.assertRaises(PreconditionError):
            slab_crossing(3, 0, 0.5, [3], samples=1, seed=0)
        with self.assertRaises(PreconditionError):
            slab_crossing(3, 1, 0.5, [4, 4], samples=1, seed=0)

    def test_half_space_fraction(self):
        """The touched fraction is 1 when open and 0 when closed, in the full ball and the half-space."""
        for half in (False, True):
            self.assertEqual(half_space_touch_fraction(2, 1.0, 2, samples=2, seed=0, half_space=half).mean, 1.0)
            report = half_space_touch_fraction(2, 0.0, 2, samples=2, seed=0, half_space=half)
            self.assertEqual(report.mean, 0.0)
            self.assertEqual(report.above.value, 0.0)
        with self.assertRaises(PreconditionError):
            half_space_touch_fraction(2, 0.5, 0, samples=1, seed=0)


if __name__ == "__main__":
    unittest.main()
