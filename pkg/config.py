"""
Configuration file for the mixture-of-DAGs causal discovery toolkit
"""
import os
from dotenv import load_dotenv

load_dotenv()

# Reproducibility
RANDOM_SEED = int(os.getenv("CIM_SEED", "42"))  # default seed for every subcommand

# Conditional independence testing
ALPHA = float(os.getenv("CIM_ALPHA", "0.01"))
CI_TEST = os.getenv("CIM_CI_TEST", "fisher-z")  # Options: oracle, fisher-z, gcm-linear, gcm-kernel
MAX_COND_SIZE = int(os.getenv("CIM_MAX_COND_SIZE", "3"))  # statistical mode only; oracle mode is unbounded
KERNEL_RIDGE_PENALTY = 1e-3  # multiplied by n
BANDWIDTH_MAX_POINTS = int(os.getenv("CIM_BANDWIDTH_MAX_POINTS", "1000"))  # rows used for the median-distance bandwidth
GCM_MIN_SAMPLES = 50
EXACT_TOLERANCE = 1e-9

# Parallelism (joblib convention: -1 = all cores)
N_JOBS = int(os.getenv("CIM_JOBS", "-1"))

# Logging
LOG_LEVEL = os.getenv("CIM_LOG_LEVEL", "INFO")

# Paths
DATA_DIR = os.getenv("CIM_DATA_DIR", "data")
REPORTS_DIR = os.getenv("CIM_REPORTS_DIR", "reports")
FIXTURES_DIR = os.getenv("CIM_FIXTURES_DIR", "fixtures")

# Evaluation
BOOTSTRAP_REPLICATES = 50
METRIC_MIN_WAVE = 2  # score endpoints at vertices in waves 2 and later

# Synthetic benchmark defaults
SYNTH_DEFAULTS = {
    "p": 24,
    "n_waves": 3,
    "expected_neighborhood": 2.0,
    "q_range": (5, 15),
    "coeff_range": (0.25, 1.0),
    "n_samples": 2000,
    "n_latents_range": (0, 2),
    "n_selection_range": (0, 2),
    "truncation_percentile_range": (10.0, 50.0),
}
