"""
Cache manager for oscilla.

This module provides a manager class storing and retrieving cell summaries
and convergence reports keyed by configuration hash.
"""

import json
import logging
import math
import os
from typing import Any, Dict, Optional

from sqlalchemy import create_engine
from sqlalchemy.orm import Session, sessionmaker

from oscilla.db.config import DATABASE_LOG_LEVEL, cache_url
from oscilla.db.models import Base, CellRecord, SweepRecord, SweepRowRecord

# Cache messages follow their own level
logger = logging.getLogger(__name__)
logger.setLevel(getattr(logging, DATABASE_LOG_LEVEL.upper(), logging.WARNING))


def _finite(value: Any) -> Optional[float]:
    return None if value is None or (isinstance(value, float) and math.isnan(value)) else value


class CacheManager:
    """Result cache backed by SQLite through SQLAlchemy."""

    def __init__(self, connection_string: Optional[str] = None):
        """Initialize the cache with a connection string.

        Args:
            connection_string: Optional database URL. If not provided, the
                SQLite file inside OSCILLA_CACHE_DIR is used.

        Raises:
            ValueError: if no cache location is configured.
        """
        self.connection_string = connection_string or cache_url()
        if not self.connection_string:
            raise ValueError("no cache configured; set OSCILLA_CACHE_DIR")
        if self.connection_string.startswith("sqlite:///"):
            directory = os.path.dirname(self.connection_string[len("sqlite:///"):])
            if directory and not os.path.exists(directory):
                os.makedirs(directory)
        logger.info(f"Initializing cache with connection string: {self.connection_string}")

        # Create engine and session factory
        self.engine = create_engine(self.connection_string)
        self.Session = sessionmaker(bind=self.engine)
        self.create_tables()

    @classmethod
    def from_environment(cls) -> Optional['CacheManager']:
        """Return a manager when OSCILLA_CACHE_DIR is set, otherwise None."""
        url = cache_url()
        return cls(url) if url else None

    def create_tables(self) -> None:
        """Create all cache tables if they don't exist."""
        Base.metadata.create_all(self.engine)

    def get_session(self) -> Session:
        """Get a new database session.

        Returns:
            A new SQLAlchemy session.
        """
        return self.Session()

    def store_cell(self, config_hash: str, summary: Dict[str, Any]) -> None:
        """Store a cell-solve summary (the cell-solve JSON document).

        Args:
            config_hash: Hash of the configuration.
            summary: Output of CellSolution.summary().
        """
        with self.get_session() as session:
            record = session.get(CellRecord, config_hash) or CellRecord(config_hash=config_hash)
            record.q0 = summary['q0']
            record.q0_energy = summary['q0_energy']
            record.grad_energy = summary['grad_energy']
            record.cell_area = summary['cell_area']
            record.ny = summary['mesh']['ny']
            record.nz = summary['mesh']['nz']
            record.h = summary['mesh']['h']
            record.payload = json.dumps(summary)
            session.add(record)
            session.commit()
            logger.info(f"Cached cell result {config_hash[:12]}")

    def get_cell(self, config_hash: str) -> Optional[Dict[str, Any]]:
        """Return the cached cell summary or None."""
        with self.get_session() as session:
            record = session.get(CellRecord, config_hash)
            if record is None:
                return None
            try:
                return json.loads(record.payload)
            except (TypeError, ValueError) as e:
                logger.warning(f"Ignoring corrupt cell cache entry {config_hash[:12]}: {e}")
                return None

    def store_report(self, config_hash: str, report: Dict[str, Any]) -> None:
        """Store a convergence report (ConvergenceReport.to_dict()) and its rows."""
        with self.get_session() as session:
            record = session.get(SweepRecord, config_hash)
            if record is None:
                record = SweepRecord(config_hash=config_hash)
                session.add(record)
            record.q0 = report['q0']
            record.payload = json.dumps(report)
            record.rows = [
                SweepRowRecord(m=row['m'], eps=row['eps'], status=row['status'], dofs=row['dofs'],
                               e0=_finite(row['e0']), e1=_finite(row['e1']), e2=_finite(row['e2']),
                               residual=_finite(row['residual']))
                for row in report['rows']
            ]
            session.commit()
            logger.info(f"Cached sweep report {config_hash[:12]} ({len(report['rows'])} rows)")

    def get_report(self, config_hash: str) -> Optional[Dict[str, Any]]:
        """Return the cached report payload or None."""
        with self.get_session() as session:
            record = session.get(SweepRecord, config_hash)
            if record is None:
                return None
            try:
                return json.loads(record.payload)
            except (TypeError, ValueError) as e:
                logger.warning(f"Ignoring corrupt sweep cache entry {config_hash[:12]}: {e}")
                return None
