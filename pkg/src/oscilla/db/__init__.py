"""
Result cache for the oscilla toolkit.

This package stores cell summaries and convergence reports keyed by the
hash of the configuration that produced them.
"""

from oscilla.db.models import (
    Base,
    CellRecord,
    SweepRecord,
    SweepRowRecord
)
from oscilla.db.manager import CacheManager
from oscilla.db.config import cache_url

__all__ = [
    'Base',
    'CellRecord',
    'SweepRecord',
    'SweepRowRecord',
    'CacheManager',
    'cache_url'
]
