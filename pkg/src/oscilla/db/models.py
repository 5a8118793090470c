"""
Database models for the oscilla result cache.

Cell-problem summaries and sweep reports are stored under the hash of the
configuration that produced them.
"""

import datetime
from sqlalchemy import Column, DateTime, Float, ForeignKey, Integer, String, Text
from sqlalchemy.orm import declarative_base, relationship

Base = declarative_base()


def _now() -> datetime.datetime:
    return datetime.datetime.now(datetime.timezone.utc)


class CellRecord(Base):
    """Summary of a solved cell problem."""

    __tablename__ = 'cell_results'

    config_hash = Column(String, primary_key=True)
    q0 = Column(Float)
    q0_energy = Column(Float)
    grad_energy = Column(Float)
    cell_area = Column(Float)
    ny = Column(Integer)
    nz = Column(Integer)
    h = Column(Float)
    payload = Column(Text)
    created_at = Column(DateTime, default=_now)

    def __repr__(self) -> str:
        return f"<CellRecord(config_hash='{self.config_hash[:12]}', q0={self.q0})>"


class SweepRecord(Base):
    """A full convergence report."""

    __tablename__ = 'sweeps'

    config_hash = Column(String, primary_key=True)
    q0 = Column(Float)
    payload = Column(Text)
    created_at = Column(DateTime, default=_now)

    # Relationships
    rows = relationship("SweepRowRecord", back_populates="sweep", cascade="all, delete-orphan",
                        order_by="SweepRowRecord.m")

    def __repr__(self) -> str:
        return f"<SweepRecord(config_hash='{self.config_hash[:12]}', rows={len(self.rows)})>"


class SweepRowRecord(Base):
    """One epsilon of a sweep, queryable without decoding the payload."""

    __tablename__ = 'sweep_rows'

    id = Column(Integer, primary_key=True, autoincrement=True)
    config_hash = Column(String, ForeignKey('sweeps.config_hash'))
    m = Column(Integer)
    eps = Column(Float)
    status = Column(String)
    dofs = Column(Integer)
    e0 = Column(Float, nullable=True)
    e1 = Column(Float, nullable=True)
    e2 = Column(Float, nullable=True)
    residual = Column(Float, nullable=True)

    # Relationships
    sweep = relationship("SweepRecord", back_populates="rows")

    def __repr__(self) -> str:
        return f"<SweepRowRecord(eps={self.eps}, status='{self.status}')>"
