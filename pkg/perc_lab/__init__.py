# perc_lab/__init__.py

from .constants import VERSION
from .config import ExperimentConfig, load_config
from .errors import (
    BudgetExhaustedError,
    ConfigError,
    GeometryError,
    GraphSpecError,
    MidBallNotFoundError,
    PercLabError,
    PreconditionError,
    ReplayError,
)
from .experiments import EXPERIMENTS, RunManifest, replay, run
from .graphs import FiniteGraph, GraphSpec, generate, read_edge_list, write_edge_list
from .logging_config import configure_logging
from .percolation import eta_for, sample_config, sample_layers
from .rng import EdgeLabels, stream_id
from .stats import Estimate, wilson_interval

__version__ = VERSION

__all__ = [
    "BudgetExhaustedError",
    "ConfigError",
    "EXPERIMENTS",
    "EdgeLabels",
    "Estimate",
    "ExperimentConfig",
    "FiniteGraph",
    "GeometryError",
    "GraphSpec",
    "GraphSpecError",
    "MidBallNotFoundError",
    "PercLabError",
    "PreconditionError",
    "ReplayError",
    "RunManifest",
    "configure_logging",
    "eta_for",
    "generate",
    "load_config",
    "read_edge_list",
    "replay",
    "run",
    "sample_config",
    "sample_layers",
    "stream_id",
    "wilson_interval",
    "write_edge_list",
]
