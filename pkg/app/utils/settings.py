"""
Configuration constants shared across the package.
"""

import os

# Hypotheses scored together in one vectorized planner pass
CHUNK_SIZE = 1024

# Worker processes for hypothesis scoring
DEFAULT_JOBS = os.cpu_count() or 1

# Restaurants within this Manhattan distance are observed
SENSING_RADIUS = 1

# Decimal places kept in belief memo keys
FINGERPRINT_DECIMALS = 12

# Significant digits for reals in scenario files
FLOAT_DIGITS = 12

# Significant digits for posterior tables
CSV_FLOAT_FORMAT = "%.17g"

NORMALIZATION_TOL = 1e-9

LOG_FORMAT = "%(levelname)s %(name)s: %(message)s"

# Minimum expected-utility lead of the chosen action in argmax parameter search
SEARCH_MARGIN = 1e-6
