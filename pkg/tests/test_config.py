# tests/test_config.py

import glob
import os
import tempfile
import unittest

import yaml

from perc_lab.config import ExperimentConfig, load_config
from perc_lab.errors import ConfigError

BASE = {
    "graph": {"kind": "zd_box", "d": 2, "side": 15},
    "percolation": {"p": 0.6, "seed": 3, "samples": 200},
    "experiment": {"kind": "volume-tail", "params": {"n_grid": [1, 2, 4], "radii": [5]}},
    "output": {"directory": "runs", "formats": ["csv", "json"]},
}


class TestExperimentConfig(unittest.TestCase):

    def _write(self, data) -> str:
        fd, path = tempfile.mkstemp(suffix=".yaml")
        with os.fdopen(fd, "w") as fh:
            fh.write(data if isinstance(data, str) else yaml.safe_dump(data))
        self.addCleanup(os.remove, path)
        return path

    def test_load_valid_config(self):
        """A well-formed YAML file yields the expected fields."""
        cfg = load_config(self._write(BASE))
        self.assertEqual(cfg.kind, "volume-tail")
        self.assertEqual(cfg.seed, 3)
        self.assertEqual(cfg.samples(), 200)
        self.assertEqual(cfg.graph_spec().side, 15)
        self.assertEqual(cfg.prob("p"), 0.6)

    def test_unknown_keys_are_rejected(self):
        """Unknown keys at the top level, in a section, or in params raise ConfigError."""
        for patch in (
            {"extra": 1},
            {"percolation": {"p": 0.5, "temperature": 2}},
            {"experiment": {"kind": "volume-tail", "params": {"n_grid": [1], "radii": [5], "bogus": 1}}},
        ):
            with self.assertRaises(ConfigError):
                ExperimentConfig.from_dict({**BASE, **patch})

    def test_missing_and_out_of_range_values(self):
        """Missing required params, unknown kinds and p > 1 are rejected."""
        for patch in (
            {"experiment": {"kind": "volume-tail", "params": {"n_grid": [1]}}},
            {"experiment": {"kind": "teleport"}},
            {"percolation": {"p": 1.5}},
        ):
            with self.assertRaises(ConfigError):
                ExperimentConfig.from_dict({**BASE, **patch})

    def test_bad_files(self):
        """Missing files, invalid YAML and non-mapping documents raise ConfigError."""
        with self.assertRaises(ConfigError):
            load_config("/nonexistent/config.yaml")
        with self.assertRaises(ConfigError):
            load_config(self._write("graph: [unclosed\n"))
        with self.assertRaises(ConfigError):
            load_config(self._write("- just\n- a list\n"))

    def test_hash_ignores_output_directory(self):
        """Changing the output directory keeps the hash; changing the seed does not."""
        cfg = ExperimentConfig.from_dict(BASE)
        self.assertEqual(cfg.config_hash, cfg.with_overrides(out="/tmp/elsewhere").config_hash)
        self.assertNotEqual(cfg.config_hash, cfg.with_overrides(seed=4).config_hash)
        self.assertEqual(len(cfg.config_hash), 64)

    def test_fast_mode(self):
        """Fast mode divides samples by ten and keeps every other grid point."""
        cfg = ExperimentConfig.from_dict(BASE).with_overrides(fast=True)
        self.assertEqual(cfg.samples(), 20)
        self.assertEqual(cfg.grid([1, 2, 4, 8, 16]), [1, 4, 16])
        self.assertEqual(cfg.grid([1, 2]), [1, 2])

    def test_shipped_configs_validate(self):
        """Every example under configs/ passes schema validation."""
        root = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "configs")
        paths = sorted(glob.glob(os.path.join(root, "*.yaml")))
        self.assertTrue(paths)
        for path in paths:
            with self.subTest(config=os.path.basename(path)):
                load_config(path)

    def test_missing_sections(self):
        """Experiments that need a graph or a density report which one is absent."""
        cfg = ExperimentConfig.from_dict({"experiment": {"kind": "crossing-sweep",
                                                         "params": {"side": 5, "ps": [0.5]}}})
        with self.assertRaises(ConfigError):
            cfg.graph_spec()
        with self.assertRaises(ConfigError):
            cfg.prob("q")


if __name__ == "__main__":
    unittest.main()
