# tests/test_experiments.py

import copy
import json
import os
import shutil
import tempfile
import unittest

from perc_lab.config import PARAM_SCHEMAS, ExperimentConfig
from perc_lab.errors import ConfigError, PreconditionError, ReplayError
from perc_lab.experiments import EXPERIMENTS, RunManifest, replay, resolve_set, run
from perc_lab.explorer import merge_eps
from perc_lab.graphs import GraphSpec, generate

VOLUME = {
    "graph": {"kind": "zd_box", "d": 2, "side": 11},
    "percolation": {"p": 0.5, "seed": 21, "samples": 60},
    "experiment": {"kind": "volume-tail", "params": {"n_grid": [1, 2, 4, 8], "radii": [3, 4]}},
}


class RunDirTestCase(unittest.TestCase):

    def setUp(self):
        self.out = tempfile.mkdtemp(prefix="perc_lab_runs_")
        self.addCleanup(shutil.rmtree, self.out, ignore_errors=True)

    def _run(self, data, workers=1):
        data = copy.deepcopy(data)
        data["output"] = {"directory": self.out}
        return run(ExperimentConfig.from_dict(data), workers=workers)


class TestRegistry(unittest.TestCase):

    def test_every_kind_has_a_runner(self):
        """Each configurable experiment kind dispatches to a registered runner."""
        self.assertEqual(set(EXPERIMENTS), set(PARAM_SCHEMAS))

    def test_resolve_set_shapes(self):
        """Origin, ball, box and id sets resolve to the expected sizes."""
        g = generate(GraphSpec("zd_box", d=2, side=7))
        self.assertEqual(int(resolve_set(g, {"shape": "origin"}).sum()), 1)
        self.assertEqual(int(resolve_set(g, {"shape": "ball", "radius": 1}).sum()), 5)
        self.assertEqual(int(resolve_set(g, {"shape": "box", "side": 3}).sum()), 9)
        self.assertEqual(int(resolve_set(g, {"shape": "ids", "ids": [0, 1]}).sum()), 2)
        with self.assertRaises(PreconditionError):
            resolve_set(g, {"shape": "box", "side": 9})
        with self.assertRaises(PreconditionError):
            resolve_set(g, {"shape": "ids", "ids": [49]})


class TestRunAndReplay(RunDirTestCase):

    def test_outputs_and_manifest(self):
        """A run writes its CSV with the hash header, a summary and a manifest listing both."""
        manifest = self._run(VOLUME)
        self.assertTrue(os.path.basename(manifest.directory).startswith("volume-tail-"))
        self.assertEqual(sorted(manifest.files), ["summary.json", "volume_tail.csv"])
        self.assertEqual(manifest.replicas, 60)
        with open(os.path.join(manifest.directory, "volume_tail.csv"), encoding="utf-8") as fh:
            self.assertEqual(fh.readline().strip(), f"# config_hash={manifest.config_hash}")
        with open(manifest.path, encoding="utf-8") as fh:
            self.assertEqual(json.load(fh)["seed"], 21)

    def test_replay_passes(self):
        """Replaying an untouched run reproduces every file."""
        manifest = self._run(VOLUME)
        report = replay(manifest.path)
        self.assertTrue(report.passed)
        self.assertEqual(set(report.verdicts.values()), {"pass"})

    def test_replay_detects_corruption(self):
        """Editing an output file after the run is reported as corrupted."""
        manifest = self._run(VOLUME)
        with open(os.path.join(manifest.directory, "summary.json"), "a", encoding="utf-8") as fh:
            fh.write("\n")
        report = replay(manifest.path)
        self.assertFalse(report.passed)
        self.assertEqual(report.verdicts["summary.json"], "corrupted")
        self.assertEqual(report.verdicts["volume_tail.csv"], "pass")

    def test_replay_detects_changed_config(self):
        """A manifest whose seed no longer produces its outputs is reported as a mismatch."""
        manifest = self._run(VOLUME)
        with open(manifest.path, encoding="utf-8") as fh:
            data = json.load(fh)
        data["seed"] = 22
        with open(manifest.path, "w", encoding="utf-8") as fh:
            json.dump(data, fh)
        report = replay(manifest.path)
        self.assertEqual(report.verdicts["volume_tail.csv"], "mismatch")

    def test_replay_missing_files(self):
        """Missing manifests or output files raise ReplayError."""
        with self.assertRaises(ReplayError):
            replay(os.path.join(self.out, "nothing.json"))
        manifest = self._run(VOLUME)
        os.remove(os.path.join(manifest.directory, "volume_tail.csv"))
        with self.assertRaises(ReplayError):
            replay(manifest.path)

    def test_workers_give_identical_files(self):
        """Output checksums do not depend on the worker count."""
        serial = self._run(VOLUME, workers=1)
        data = copy.deepcopy(VOLUME)
        out = tempfile.mkdtemp(prefix="perc_lab_parallel_")
        self.addCleanup(shutil.rmtree, out, ignore_errors=True)
        data["output"] = {"directory": out}
        parallel = run(ExperimentConfig.from_dict(data), workers=2)
        self.assertEqual(serial.files, parallel.files)

    def test_manifest_load_rejects_garbage(self):
        """An unreadable manifest raises ReplayError."""
        path = os.path.join(self.out, "manifest.json")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("{not json")
        with self.assertRaises(ReplayError):
            RunManifest.load(path)


class TestExperimentKinds(RunDirTestCase):

    def _summary(self, manifest):
        with open(os.path.join(manifest.directory, "summary.json"), encoding="utf-8") as fh:
            return json.load(fh)["result"]

    def test_phi_profile(self):
        """The profile experiment tabulates exact values of the square lattice."""
        manifest = self._run({
            "graph": {"kind": "zd_box", "d": 2, "side": 5},
            "experiment": {"kind": "phi-profile", "params": {"n_max": 4}},
        })
        self.assertEqual(self._summary(manifest)["exact"], {"1": 4, "2": 6, "3": 8, "4": 8})

    def test_crossing_sweep(self):
        """The sweep runs without a graph section and is monotone in p."""
        manifest = self._run({
            "percolation": {"seed": 1, "samples": 20},
            "experiment": {"kind": "crossing-sweep", "params": {"side": 5, "ps": [0.0, 0.5, 1.0]}},
        })
        self.assertTrue(self._summary(manifest)["monotone_in_p"])

    def test_v_n_with_power_law(self):
        """v_n with a power-law Phi reports a small solver residual."""
        manifest = self._run({
            "experiment": {"kind": "v-n", "params": {"size_s": 1, "n_max": 5, "c": 0.1,
                                                     "phi": {"source": "power", "coefficient": 2.0,
                                                             "exponent": 0.5}}},
        })
        self.assertLess(self._summary(manifest)["max_residual"], 1e-8)

    def test_layers_check(self):
        """The layer union matches q per edge and exactly on a few edges."""
        manifest = self._run({
            "graph": {"kind": "zd_box", "d": 2, "side": 3},
            "percolation": {"p": 0.4, "q": 0.7, "seed": 5},
            "experiment": {"kind": "layers-check", "params": {"samples": 2000, "exact_edges": 2}},
        })
        summary = self._summary(manifest)
        self.assertLess(summary["exact_residual"], 1e-12)
        self.assertEqual(summary["samples"], 2000)

    def test_merge_bound_with_exact(self):
        """The merge experiment adds the exact enumeration on a four-edge domain."""
        manifest = self._run({
            "graph": {"kind": "zd_box", "d": 2, "side": 7},
            "percolation": {"p": 0.7, "q": 0.5, "seed": 2, "samples": 50},
            "experiment": {"kind": "merge-bound", "params": {"set": {"shape": "origin"}, "t": 1,
                                                             "radius": 0, "exact": True}},
        })
        summary = self._summary(manifest)
        self.assertLess(summary["exact"]["identity_residual"], 1e-12)
        self.assertAlmostEqual(summary["bound"], 1 - merge_eps(0.7, 0.5))

    def test_explore(self):
        """A practical exploration records transcripts without invariant violations."""
        manifest = self._run({
            "graph": {"kind": "zd_box", "d": 2, "side": 11},
            "percolation": {"p": 0.9, "q": 0.99, "eps": 0.5, "seed": 4},
            "experiment": {"kind": "explore", "params": {"set": {"shape": "origin"}, "t": 1, "radius": 3,
                                                         "mode": "practical", "r": 1, "ell": 1,
                                                         "estimator_samples": 20, "samples": 3}},
        })
        self.assertIn("transcripts.json", manifest.files)
        self.assertEqual(self._summary(manifest)["invariant_violations"], 0)

    def test_coarse_grain(self):
        """The coarse field at p = 1 is fully open and its snapshot is written."""
        manifest = self._run({
            "percolation": {"p": 1.0, "seed": 0},
            "experiment": {"kind": "coarse-grain", "params": {"k": 1, "n": 3, "C": 2, "window": 2, "d": 2,
                                                              "samples": 2}},
        })
        self.assertIn("coarse_snapshot.json", manifest.files)
        self.assertEqual(self._summary(manifest)["min_marginal"], 1.0)

    def test_missing_density_is_reported(self):
        """An experiment that needs q fails with a config error when it is absent."""
        with self.assertRaises(ConfigError):
            self._run({
                "graph": {"kind": "zd_box", "d": 2, "side": 7},
                "percolation": {"p": 0.5},
                "experiment": {"kind": "psi", "params": {"set": {"shape": "origin"}, "radii": [1]}},
            })


if __name__ == "__main__":
    unittest.main()
