# tests/test_library_mode.py

import logging
import os
import shutil
import tempfile
import unittest
from unittest.mock import patch

from perc_lab import EdgeLabels, ExperimentConfig, GraphSpec, configure_logging, generate, run, sample_config, stream_id


class TestLibraryMode(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.mkdtemp(prefix="perc_lab_lib_")
        self.addCleanup(shutil.rmtree, self.tmp, ignore_errors=True)

    def tearDown(self):
        root = logging.getLogger()
        for handler in list(root.handlers):
            handler.close()
            root.removeHandler(handler)

    def test_library_usage_in_script(self):
        """
        Illustrates how a user might drive an experiment from their own script,
        without the CLI. The runner is called with the worker count given.
        """
        configure_logging(json_file_path=os.path.join(self.tmp, "lib_mode.log"), verbose=True)
        cfg = ExperimentConfig.from_dict({
            "graph": {"kind": "zd_box", "d": 2, "side": 9},
            "percolation": {"p": 0.6, "seed": 1, "samples": 30},
            "experiment": {"kind": "radius-tail", "params": {"ns": [1, 2, 3], "radius": 4}},
            "output": {"directory": self.tmp, "formats": ["json"]},
        })
        manifest = run(cfg, workers=1)
        self.assertEqual(list(manifest.files), ["summary.json"])
        self.assertTrue(os.path.isfile(manifest.path))

    def test_sampling_primitives(self):
        """The top-level exports are enough to sample a configuration by hand."""
        g = generate(GraphSpec("zd_box", d=2, side=5))
        labels = EdgeLabels(g.edge_count, 7, stream_id("script"))
        config = sample_config(labels, 0.5)
        self.assertEqual(config.open.shape, (g.edge_count,))

    def test_runner_receives_workers(self):
        """run passes the worker count through to the registered runner."""
        cfg = ExperimentConfig.from_dict({
            "percolation": {"seed": 0, "samples": 5},
            "experiment": {"kind": "crossing-sweep", "params": {"side": 3, "ps": [0.5]}},
            "output": {"directory": self.tmp},
        })
        with patch("perc_lab.experiments.crossing_sweep", return_value=[]) as mock_sweep:
            run(cfg, workers=3)
        self.assertEqual(mock_sweep.call_args[0][-1], 3)


if __name__ == "__main__":
    unittest.main()
