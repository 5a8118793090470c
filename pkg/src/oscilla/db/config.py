"""
Cache database configuration for oscilla.

The cache lives in OSCILLA_CACHE_DIR; without it caching is disabled.
"""

import os
from typing import Optional

from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

CACHE_FILENAME = "oscilla-cache.db"

# Get database logging level from environment variable or use default
DATABASE_LOG_LEVEL = os.getenv("OSCILLA_DB_LOG_LEVEL", "WARNING")


def cache_url(cache_dir: Optional[str] = None) -> Optional[str]:
    """SQLite URL of the cache file, or None when no cache directory is configured."""
    directory = cache_dir or os.getenv("OSCILLA_CACHE_DIR")
    if not directory:
        return None
    return f"sqlite:///{os.path.join(directory, CACHE_FILENAME)}"
