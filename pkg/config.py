"""
HierSAIL - Configuration Module
Contains all default constants and settings.
"""

import os
from pathlib import Path

from dotenv import load_dotenv

load_dotenv()

TOOLKIT_NAME = "hiersail"
TOOLKIT_VERSION = "0.3.0"
APP_DIR = Path(__file__).resolve().parent
CONFIG_DIR = APP_DIR / "configs"

# ================= RUN OUTPUT CONFIG =================
OUT_DIR = Path(os.environ.get("HIERSAIL_OUT_DIR", "./runs"))
WORKERS = int(os.environ.get("HIERSAIL_WORKERS", "1"))
MANIFEST_FILE = "manifest.json"
TIMINGS_FILE = "timings.json"
DEFAULT_SEED = 0

# ================= DOMAIN / MUTATION CONFIG =================
SIGMA_FRAC = 0.1
INIT_STRATEGY = "stratified"          # stratified | uniform

# ================= ILLUMINATION CONFIG =================
RESOLUTION = (32, 32)
INIT_COUNT = 100
TOTAL_EVALUATIONS = 10000
ILLUMINATION_BATCH = 1
HISTORY_POINTS = 200

# ================= HILL CLIMBER CONFIG =================
HILL_STEP_FRAC = 0.05
HILL_MAX_ITERS = 1000
HILL_MIN_STEP_FRAC = 1e-6

# ================= GP CONFIG =================
GP_JITTER = 1e-8
GP_MAX_JITTER = 1e-4
GP_LENGTH_SCALE = 0.3                 # unit-cube inputs
GP_SIGNAL_VARIANCE = 1.0
GP_NOISE_VARIANCE = 1e-4
GP_MIN_NOISE = 1e-6
GP_SEARCH_STARTS = 4
GP_SEARCH_MAX_EVALS = 400
GP_SEARCH_STEP = 1.0                  # natural-log units
GP_SEARCH_MIN_STEP = 0.05
GP_LOG_BOUNDS = (-7.0, 5.0)
GP_MAX_FIT_SAMPLES = 200

# ================= ANN / BANN CONFIG =================
ANN_HIDDEN = 10
BANN_MEMBERS = 16
LM_LAMBDA0 = 1e-2
LM_UP = 10.0
LM_DOWN = 0.1
LM_MAX_ITERS = 200
LM_TOL = 1e-9
LM_MAX_LAMBDA = 1e10

# ================= HIERARCHY CONFIG =================
HIER_DEPTH = 2
HIER_BRANCHING = 4
HIER_MIN_LEAF = 8
HIER_RESTARTS = 10
HIER_GAMMA = 0.5
HIER_MODE = "residual"                # residual | independent-subsets
HIER_CONFIDENCE = "flat-variance"     # flat-variance | depth-weighted
HIER_NODE_KIND = "gp"
PCA_CUTOFF = 0.01
KMEANS_MAX_ITERS = 100

# ================= ACQUISITION / SAIL CONFIG =================
UCB_KAPPA = 2.0
SAIL_BATCH = 10
SAIL_ROUNDS = 20
SAIL_SURROGATE = "gp"
SAIL_ACQ_EVALUATIONS = 4096
SAIL_PREDICTION_EVALUATIONS = 8192
SAIL_ACQ_BATCH = 64

# ================= BENCHMARK CONFIG =================
ACKLEY_A = 20.0
ACKLEY_B = 0.2
ACKLEY_BOUND = 32.768
RASTRIGIN_BOUND = 5.12
FOIL_DIM = 15
FOIL_LATENT_DIM = 4
FOIL_SEED = 20170801
FOIL_SHAPE_WAVES = 2                  # shape-drag periods across a parameter block
FOIL_LOAD_DIRECTION = (0.8, 0.6)      # unit vector in the two seeded latent coordinates

# ================= STUDY CONFIG =================
FIG5_REPLICATES = 100
FIG5_STARTS = 10
FIG5_TRAIN_SIZE = 10
FIG6_SEGMENTS = 16
FIG6_EVALUATIONS = 50000
FIG6_MIN_SEGMENT = 6
FIG6_MEMBERS = 8
FIG6_MODEL = "bann"
FIG6_SAMPLES_PER_WEIGHT = 2.0
HOLDOUT_FRACTION = 0.2
BAKEOFF_GRID = (50, 100, 200, 400, 800)
BAKEOFF_HOLDOUT = 200
SURFACE_POINTS = 2001
