# ============================
# 📁 BreatherLab Configuration
# ============================

import math

# Linear solve for the dressing coefficients
CONDITION_CEILING = 1e12        # beyond this the discrete data is treated as degenerate
OVERFLOW_GUARD = 300.0          # |x| * max(Im lambda) above which the tail is used
RESIDUAL_TOLERANCE = 1e-10

# Commensurability search
MAX_DENOMINATOR = 1000
COMMENSURATE_TOL = 1e-10

# Continuum quadrature (composite Gauss-Legendre)
SPECTRAL_PANELS = 24
NODES_PER_PANEL = 16
LAMBDA_MAX_FACTOR = 4.0         # lambda_max >= 4 * rho2
RESONANCE_LAMBDA_FACTOR = 1.5   # lambda_max >= 1.5 * sqrt(sigma_nmax)
SPECTRAL_TAIL = 1e-12           # outermost panel share of ||f||^2 before analyze widens the range
WIDEN_PANELS = 8
LAMBDA_NYQUIST_FRACTION = 0.75  # widening stops at this share of pi / (2 dx)

# Temporal Fourier analysis
K_MAX = 32
K_MAX_LIMIT = 256
SAMPLES_PER_HARMONIC = 4        # N_t >= 4 * K_max
ALIASING_THRESHOLD = 1e-10
TRUNCATION_THRESHOLD = 1e-12    # last retained resonance vs Gamma
TERM_CUTOFF = 1e-14             # per-term contribution vs Gamma
ORACLE_TOLERANCE = 1e-6
ORACLE_RELEVANCE = 1e-10        # resonances below this share of Gamma skip the oracle gate
QUADRATURE_TAIL_LIMIT = 1e-8
QUADRATURE_STEP = 0.05          # spatial trapezoid step, divided by max(1, rho2)
QUADRATURE_EXTENT = 10.0        # half-line extent in units of 1 / rho1
QUADRATURE_TAIL_FRACTION = 0.1  # outermost share of nodes used for the tail estimate

# Coupled-mode reduced model (coarse continuum grid)
KERNEL_PANELS = 8
KERNEL_NODES = 8

# Resonance guards
SIGMA_FLOOR = 1e-3
ZERO_RESONANCE_TOL = 1e-12
PREDICTOR_HORIZON = 10.0        # warn when |t| > PREDICTOR_HORIZON / Gamma

# Convergence gate
GATE_TOLERANCE = 0.005

# Time-domain oracle
ORACLE_PERIODS = 200

# Split-step solver
DEFAULT_POINTS = 1024
MIN_POINTS = 256
RECORD_EVERY = 16
DEFAULT_PERIODS = 50
DT_MAX_FRACTION = 1.0 / 64      # dt_max = L / 64
DT_MIN_FRACTION = 1.0 / 4096
POTENTIAL_CHANGE_PER_STEP = 0.02
STEP_TOLERANCE = 1e-6
MAX_STEP_RETRIES = 6
TIME_QUADRATURE_NODES = 4
SPONGE_DAMPING = 1.0
SPONGE_WIDTH_FRACTION = 1.0 / 16
SPONGE_MARGIN = 0.0
SPONGE_ACTIVE = 1e-3            # weight above which a node counts as sponge
POTENTIAL_SUPPORT = 1e-10       # |V0| below this counts as outside the well

# Domain presets from the reference parameter sets
DOMAIN_PRESETS = {
    (0.25, 0.75): (-80.0, 80.0),
    (round(1 / math.sqrt(2), 12), 1.0): (-40.0, 40.0),
}
DEFAULT_DOMAIN = (-80.0, 80.0)

# Comparison protocol
FIT_WINDOW_START = 0.2          # fit over [0.2 T, T]
DISPERSIVE_FLOOR = 1e-3
SLOPE_TOLERANCE = 0.2
EVEN_SLOPE_TOLERANCE = 0.25
RENORMALIZED_SLOPE_TOLERANCE = 0.35
SCALING_TOLERANCE = 0.1
SMALL_TIME_RECORDS = 640        # samples per period in the dedicated small-time run
SMALL_TIME_WINDOW = 0.05        # fraction of the period
SMALL_TIME_TOLERANCE = 0.05
FIDELITY_TOLERANCE = 1e-6       # max ||B_b| - 1| of an unperturbed run

# Local decay probe
DECAY_WEIGHT_EXPONENT = 3.5
DECAY_WINDOW = (5, 50)          # in periods
DECAY_SAMPLES = 24
DECAY_LAMBDA_TAIL = 1e-8
DECAY_NODE_CHUNK = 512         # continuum nodes per synthesis block

# Chart settings
CHART_COLORS = {
    "simulation": "tab:blue",
    "prediction": "black",
    "phase": "tab:green",
}
CHARTS_DIR = "charts"
POTENTIAL_TIME_SAMPLES = 64     # rows of the potential table over one period
SVG_HASH_SALT = "breather-lab"

# Exit codes
EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_CONVERGENCE = 4

# Environment
THREADS_ENV = "BREATHER_LAB_THREADS"
SLOW_TESTS_ENV = "BREATHER_LAB_SLOW"

# Project meta
APP_NAME = "BreatherLab"
VERSION = "1.0"
