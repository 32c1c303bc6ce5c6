# perc_lab/constants.py

# Fixed-point scale of the per-edge uniform labels (64-bit fractions).
LABEL_SCALE = 2 ** 64

# SplitMix64 finalizer constants.
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
MIX_MULT_1 = 0xBF58476D1CE4E5B9
MIX_MULT_2 = 0x94D049BB133111EB

# Two-sided 95% normal quantile used for Wilson intervals.
WILSON_Z = 1.959963984540054

# Tolerances
ETA_TOLERANCE = 1e-12
MASS_RESIDUAL_TOLERANCE = 1e-8

# Slope standard errors on each side of the fitted decay rate.
DECAY_ENVELOPE_SIGMAS = 3.0

# Largest edge set the exact enumeration harness accepts.
EXACT_ENUMERATION_MAX_EDGES = 16

# Default budgets
DEFAULT_ENUMERATION_BUDGET = 5_000_000
DEFAULT_RADIUS_SEARCH_MAX = 64
DEFAULT_ESTIMATOR_SAMPLES = 400

# Connected-set enumeration is exact and cheap up to this size on Z^2.
PHI_EXACT_NMAX_Z2 = 12
# Tier-one (all subsets of a ball) is used up to this n as a cross-check.
PHI_TIER1_NMAX = 4

# Environment variables read as CLI defaults (a .env file is honoured).
ENV_WORKERS = "PERC_LAB_WORKERS"
ENV_OUT_DIR = "PERC_LAB_OUT"
ENV_LOG_FILE = "PERC_LAB_LOG_FILE"

DEFAULT_LOG_FILE = "perc_lab.log"
DEFAULT_OUT_DIR = "runs"

# CLI exit codes
EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_PRECONDITION = 3
EXIT_BUDGET = 4

MANIFEST_NAME = "manifest.json"

# Largest fine lattice the renormalization experiments will allocate.
MAX_FINE_VERTICES = 4_000_000

VERSION = "1.0.0"

# Samples per task when a Monte Carlo count is split into blocks.
SAMPLE_BLOCK = 1000
