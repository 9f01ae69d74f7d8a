"""
Configuration settings for the design application.
This file centralizes the numeric defaults and tolerances used across services.
"""

# Simplex and region tolerances
SIMPLEX_TOL = 1e-10  # Accepted deviation of sum(x) from 1 without touching the row
RENORMALIZE_TOL = 1e-6  # Deviations up to this are renormalized on ingestion, larger ones rejected
VERTEX_TOL = 1e-12  # x_i closer than this to 1 is treated as a simplex vertex by the Cox move

# Linear algebra
SINGULAR_RCOND = 1e-12  # Reciprocal condition below this counts as singular information
PSD_TOL = 1e-8  # Eigenvalues >= -PSD_TOL * trace are accepted as PSD
SYMMETRY_TOL = 1e-10

# Exact moments
MAX_FACTORIAL_ARG = 170  # Largest factorial whose value still converts to a float

# Prior draws
HALTON_MAX_DIM = 50  # Size of the prime-base table
DEFAULT_DRAWS = 128
DEFAULT_HALTON_SKIP = 0

# Coordinate exchange
OPTIMIZER_DEFAULTS = {
    "n_starts": 10,
    "max_passes": 25,
    "rel_tol": 1e-6,
    "brent_tol": 1e-4,
    "brent_max_iter": 50,
    "seed": 20221018,
    "workers": 1,
}

# Fraction of design space
DEFAULT_FDS_POINTS = 10_000
MIN_FDS_POINTS = 100
DEFAULT_FDS_SEED = 1

# Files
CSV_SIGNIFICANT_DIGITS = 12
CSV_FLOAT_FORMAT = f"%.{CSV_SIGNIFICANT_DIGITS}g"

# Exit codes
EXIT_OK = 0
EXIT_INPUT_ERROR = 2
EXIT_NUMERICAL_FAILURE = 3
