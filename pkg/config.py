"""
Configuration file for the tile streaming simulator.

This file contains the default settings used across the simulator: model
parameter defaults, experiment defaults and runtime knobs.
You can modify this file directly or use environment variables / .env file.
"""
import os
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

# Logging
# Priority: 1. Environment variable 2. Value in this file
LOG_LEVEL = os.getenv("TILESTREAM_LOG_LEVEL", "INFO").upper()

# Experiment runner configuration
DEFAULT_SEED = int(os.getenv("TILESTREAM_SEED", 2020))
DEFAULT_JOBS = int(os.getenv("TILESTREAM_JOBS", 1))
DEFAULT_OUTPUT_DIR = os.getenv("TILESTREAM_OUTPUT_DIR", "results")
DEFAULT_REPLICATES = int(os.getenv("TILESTREAM_REPLICATES", 10))
DEFAULT_SEGMENTS = int(os.getenv("TILESTREAM_SEGMENTS", 100))
DEFAULT_SWITCH_PROBABILITIES = (0.0, 0.05, 0.10, 0.20)
CSV_FLOAT_FORMAT = os.getenv("TILESTREAM_CSV_FLOAT_FORMAT", "%.6f")

# Content model: 4x6 tile grid, 2 s segments, 16-level ladder 150..2400 kbps
GRID_ROWS = 4
GRID_COLS = 6
SEGMENT_DURATION_S = 2.0
DEFAULT_BITRATES_KBPS = tuple(float(150 * u) for u in range(1, 17))

# R-D synthesis ranges (calibrated stand-in for encoder regression results)
ALPHA_RANGE = (2000.0, 20000.0)
BETA_RANGE = (0.8, 1.2)

# Channel defaults
FIXED_BANDWIDTH_KBPS = 10000.0
MARKOV_STATES_KBPS = (10000.0, 4000.0)
MARKOV_TRANSITION_PROBABILITY = 0.5
CHANNEL_JITTER = float(os.getenv("TILESTREAM_CHANNEL_JITTER", 0.0))

# Rate adaptation (buffer thresholds in seconds)
STARTUP_BUFFER_S = 2.0
BUFFER_MIN_S = 10.0
BUFFER_MAX_S = 20.0
THROUGHPUT_WINDOW = 1
# the standalone rate-adaptation comparison runs with a tighter upper threshold
RATE_DEMO_BUFFER_MAX_S = 12.0
RATE_DEMO_SEGMENTS = 200

# FoV model: Gaussian over 20 patterns, mu=11, sigma^2=4 (9 without camera motion)
FOV_PATTERN_COUNT = 20
FOV_MU = 11.0
FOV_SIGMA2 = 4.0

# Fine bit allocation
FINE_THETA = (0.2, 0.3, 0.5)
FINE_D_TH = 0.4
FINE_R_TH_KBPS = 2000.0
FINE_CANDIDATE_CAP = int(os.getenv("TILESTREAM_FINE_CANDIDATE_CAP", 50000))
FINE_LATTICE_LIMIT = int(os.getenv("TILESTREAM_FINE_LATTICE_LIMIT", 1 << 18))

# Evaluation
D_MISSING = float(os.getenv("TILESTREAM_D_MISSING", 3000.0))
QOE_GAMMA = 6.0
QOE_DELTA = 500.0
QOE_ETA = 0.1
QOE_B_REF_S = 15.0
