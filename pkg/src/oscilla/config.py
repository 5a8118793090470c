"""
Runtime configuration for the oscilla toolkit.

Defaults can be overridden through environment variables or a .env file.
"""

import os
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

# Logging level for the pipeline
LOG_LEVEL = os.getenv("OSCILLA_LOG_LEVEL", "INFO")

# Relative residual requested from the conjugate gradient solver
CG_TOL = float(os.getenv("OSCILLA_CG_TOL", "1e-10"))

# Relative mean |sum b| / sum |b| tolerated in a pure-Neumann load
COMPAT_TOL = float(os.getenv("OSCILLA_COMPAT_TOL", "1e-8"))

# Largest triangulation any builder will produce
MAX_TRIANGLES = int(os.getenv("OSCILLA_MAX_TRIANGLES", "2000000"))


def cache_dir():
    """Return the solution cache directory, or None when caching is off."""
    return os.getenv("OSCILLA_CACHE_DIR") or None
