#!/usr/bin/env python3
"""
Run Ledger Models for compverify
One row per verification run: what was checked, the verdict, the sizes and
cost of the construction, and where the artifacts were written.
"""

from sqlalchemy import create_engine, Column, Integer, String, Float, DateTime, Text, Enum as SQLEnum
from sqlalchemy.orm import declarative_base, sessionmaker
import os
from datetime import datetime
import uuid
import enum
import logging
from typing import Optional

import pandas as pd
from dotenv import load_dotenv

load_dotenv()

logger = logging.getLogger(__name__)

Base = declarative_base()

DEFAULT_DATABASE_URL = 'sqlite:///compverify_runs.db'


# Enums
class RunKind(enum.Enum):
    CHECK = "check"
    ASSUME = "assume"
    LOCALSPEC = "localspec"
    TAXINET_GEN = "taxinet-gen"
    MONITOR = "monitor"
    MONITOR_PROB = "monitor-prob"
    EXPORT = "export"


class Verdict(enum.Enum):
    SAFE = "safe"
    UNSAFE = "unsafe"
    EMPTY = "empty"
    OK = "ok"
    ERROR = "error"
    ABORT = "abort"


# Verification Runs
class VerificationRun(Base):
    __tablename__ = 'verification_runs'

    id = Column(String(36), primary_key=True, default=lambda: str(uuid.uuid4()))

    # Run Details
    kind = Column(SQLEnum(RunKind), nullable=False)
    model_name = Column(String(200))
    max_cte = Column(Integer)
    alphabet = Column(String(20))  # est, est+act
    verdict = Column(SQLEnum(Verdict), nullable=False)

    # Construction Metrics
    states = Column(Integer)
    transitions = Column(Integer)
    wall_time_ms = Column(Float)
    peak_mem_kb = Column(Integer)

    # Outputs
    artifact_path = Column(String(500))
    detail = Column(Text)  # counterexample, stats line, final probability

    # Timestamps
    created_at = Column(DateTime, default=datetime.utcnow)

    def to_dict(self) -> dict:
        return {
            'id': self.id,
            'kind': self.kind.value if self.kind else None,
            'model_name': self.model_name,
            'max_cte': self.max_cte,
            'alphabet': self.alphabet,
            'verdict': self.verdict.value if self.verdict else None,
            'states': self.states,
            'transitions': self.transitions,
            'wall_time_ms': self.wall_time_ms,
            'peak_mem_kb': self.peak_mem_kb,
            'artifact_path': self.artifact_path,
            'detail': self.detail,
            'created_at': self.created_at,
        }


# Database Connection and Session Management
class DatabaseManager:
    def __init__(self, database_url: Optional[str] = None):
        self.database_url = database_url or os.getenv('DATABASE_URL')
        if not self.database_url:
            # Fallback to SQLite for local runs
            self.database_url = DEFAULT_DATABASE_URL

        self.engine = create_engine(self.database_url)
        self.SessionLocal = sessionmaker(autocommit=False, autoflush=False, bind=self.engine)

    def create_tables(self):
        """Create all database tables"""
        Base.metadata.create_all(bind=self.engine)

    def get_session(self):
        """Get a database session"""
        return self.SessionLocal()

    def close_session(self, session):
        """Close a database session"""
        session.close()

    def record_run(self, kind: RunKind, verdict: Verdict, **fields) -> str:
        """Insert one run and return its id"""
        session = self.get_session()
        try:
            run = VerificationRun(kind=kind, verdict=verdict, **fields)
            session.add(run)
            session.commit()
            logger.info(f"recorded {kind.value} run {run.id}: {verdict.value}")
            return run.id
        except Exception:
            session.rollback()
            raise
        finally:
            self.close_session(session)

    def recent_runs(self, limit: int = 20, kind: Optional[RunKind] = None) -> pd.DataFrame:
        """Most recent runs first"""
        session = self.get_session()
        try:
            query = session.query(VerificationRun)
            if kind is not None:
                query = query.filter(VerificationRun.kind == kind)
            runs = query.order_by(VerificationRun.created_at.desc()).limit(limit).all()
            columns = list(VerificationRun.__table__.columns.keys())
            return pd.DataFrame([run.to_dict() for run in runs], columns=columns)
        finally:
            self.close_session(session)


_db_manager: Optional[DatabaseManager] = None


def get_db_manager(database_url: Optional[str] = None) -> DatabaseManager:
    """Shared manager with its tables created, built on first use"""
    global _db_manager
    if _db_manager is None or (database_url and database_url != _db_manager.database_url):
        _db_manager = DatabaseManager(database_url)
        _db_manager.create_tables()
    return _db_manager
