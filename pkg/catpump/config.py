"""This module contains configuration constants used across the framework"""

# The number of times the runner retries on an error before terminating.
MAX_RETRY_COUNT = 3

# Number of attempts per task (1 is no retry, 2 is 2 total attempts and so on)
QUEUE_ATTEMPTS = 2

# Whether the run should exit with an error if MAX_RETRY_COUNT is reached.
FAIL_ON_TOO_MANY_ERRORS = False

# Wall-clock limit for a single experiment task in seconds.
TASK_TIMEOUT = 6 * 3600

# Name of the error report written next to the task output.
ERROR_REPORT_NAME = "error_report.html"

# Name of the log file written in the output directory.
LOG_FILE_NAME = "run.log"


# Queue specific configs
# ----------------------

# The name of the task queue
QUEUE_NAME = "catpump"

# The limit on how many tasks to process
MAX_TASK_COUNT = 100

# ----------------------


# Numerics
# ----------------------

# Largest Hamiltonian dimension diagonalized in full.
SPECTRAL_CAP = 8192

# Lanczos subspace dimension and per-step tolerance.
KRYLOV_DIM = 30
KRYLOV_TOL = 1e-9

# Largest Krylov time step in units of T1.
KRYLOV_MAX_STEP = 1 / 200

# Boundary mass above which a warning, resp. an error, is raised.
BOUNDARY_WARN = 1e-4
BOUNDARY_ERROR = 1e-2

# Sites within this lattice distance of a missing site count as boundary.
BOUNDARY_WIDTH = 2

# |h| below this fraction of the gap is treated as a gap closing.
GAPLESS_TOL = 1e-12

# Eigenvalues closer than this fraction of the gap to a band cut are ambiguous.
DEGENERATE_CUT_TOL = 1e-6

# Finite-difference step for point evaluations.
POINT_FD_STEP = 1e-4

# Simpson step for classical trajectories in units of T1.
SIMPSON_STEP = 1 / 400

# Bhattacharyya overlap below which the two cat components count as separated.
SEPARATION_OVERLAP = 1e-3

# Separation time used when no separation is detected, in units of T1.
FALLBACK_T_SEP = 8.0

# Relative mass allowed outside a mode's support, and outside the lattice.
MODE_MASS_LOSS = 1e-8
LATTICE_MASS_LOSS = 1e-6

# Phase widths above this are outside the small-width expansions.
SMALL_WIDTH_LIMIT = 0.15 * 3.141592653589793

# Significant digits for every number written to disk.
OUTPUT_DIGITS = 12

# ----------------------


# Desk-scale truncation
# ----------------------

DESK_BOX = (-34, 34, -30, 30)
DESK_N_E_MAX = 16.0
DESK_N_PERP_MAX = 28.0

FULL_BOX = (-59, 59, -52, 52)
FULL_N_E_MAX = 30.0
FULL_N_PERP_MAX = 50.0

# ----------------------
