"""
Run catalog for the Ratchet PGD toolkit.
Uses SQLAlchemy with SQLite for simple, file-based storage.
"""

from datetime import datetime
from typing import Any, Dict, List, Optional

from sqlalchemy import JSON, Column, DateTime, Float, Integer, String, Text, create_engine, func
from sqlalchemy.ext.declarative import declarative_base
from sqlalchemy.orm import Session, sessionmaker

from .config import DATABASE_URL

engine = create_engine(DATABASE_URL, echo=False, connect_args={"check_same_thread": False} if DATABASE_URL.startswith("sqlite") else {})
SessionLocal = sessionmaker(autocommit=False, autoflush=False, bind=engine)
Base = declarative_base()

RUN_STATUSES = ("running", "completed", "failed")


class RunModel(Base):
    """Database model for solver runs."""
    __tablename__ = "runs"

    id = Column(Integer, primary_key=True, index=True)
    scenario = Column(String, nullable=False, index=True)
    kind = Column(String, nullable=False)
    solver = Column(String, nullable=False, index=True)
    modes = Column(Integer, nullable=True)  # PGD runs only
    cycles = Column(Integer, nullable=False)
    status = Column(String, nullable=False, default="running", index=True)
    config_hash = Column(String, nullable=False)
    output_path = Column(String, nullable=True)
    dof_counts = Column(JSON, default=dict)  # {"incremental": ..., "pgd": ...}
    wall_time = Column(Float, nullable=True)  # in seconds
    summary = Column(JSON, default=dict)
    error = Column(Text, nullable=True)
    created_at = Column(DateTime, default=datetime.utcnow)
    updated_at = Column(DateTime, default=datetime.utcnow, onupdate=datetime.utcnow)

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary for API responses."""
        return {
            "id": self.id,
            "scenario": self.scenario,
            "kind": self.kind,
            "solver": self.solver,
            "modes": self.modes,
            "cycles": self.cycles,
            "status": self.status,
            "config_hash": self.config_hash,
            "output_path": self.output_path,
            "dof_counts": self.dof_counts if self.dof_counts else {},
            "wall_time": self.wall_time,
            "summary": self.summary if self.summary else {},
            "error": self.error,
            "created_at": self.created_at.isoformat() if self.created_at else None,
            "updated_at": self.updated_at.isoformat() if self.updated_at else None
        }


class DatabaseManager:
    """Database management utilities."""

    def __init__(self, engine=engine):
        self.engine = engine
        self.SessionLocal = sessionmaker(autocommit=False, autoflush=False, bind=engine)

    def create_tables(self):
        """Create all database tables."""
        Base.metadata.create_all(bind=self.engine)

    def get_session(self) -> Session:
        """Get a database session."""
        return self.SessionLocal()

    def add_run(self, run_data: Dict[str, Any]) -> Dict[str, Any]:
        """Add a new run to the catalog."""
        session = self.get_session()
        try:
            run = RunModel(**run_data)
            session.add(run)
            session.commit()
            session.refresh(run)  # Get the ID
            return run.to_dict()
        except Exception as e:
            session.rollback()
            raise e
        finally:
            session.close()

    def update_run(self, run_id: int, run_data: Dict[str, Any]) -> Optional[Dict[str, Any]]:
        """Update an existing run."""
        session = self.get_session()
        try:
            run = session.query(RunModel).filter(RunModel.id == run_id).first()
            if run is None:
                return None
            for key, value in run_data.items():
                setattr(run, key, value)
            run.updated_at = datetime.utcnow()
            session.commit()
            session.refresh(run)
            return run.to_dict()
        except Exception as e:
            session.rollback()
            raise e
        finally:
            session.close()

    def get_run(self, run_id: int) -> Optional[Dict[str, Any]]:
        """Get a specific run by ID."""
        session = self.get_session()
        try:
            run = session.query(RunModel).filter(RunModel.id == run_id).first()
            return run.to_dict() if run else None
        finally:
            session.close()

    def list_runs(
        self,
        scenario: Optional[str] = None,
        solver: Optional[str] = None,
        status: Optional[str] = None,
        limit: int = 100,
    ) -> List[Dict[str, Any]]:
        """Runs newest first, optionally filtered."""
        session = self.get_session()
        try:
            query = session.query(RunModel)
            if scenario:
                query = query.filter(RunModel.scenario == scenario)
            if solver:
                query = query.filter(RunModel.solver == solver)
            if status:
                query = query.filter(RunModel.status == status)
            return [r.to_dict() for r in query.order_by(RunModel.id.desc()).limit(limit).all()]
        finally:
            session.close()

    def delete_run(self, run_id: int) -> bool:
        """Delete a run from the catalog (output files are left in place)."""
        session = self.get_session()
        try:
            run = session.query(RunModel).filter(RunModel.id == run_id).first()
            if run:
                session.delete(run)
                session.commit()
                return True
            return False
        except Exception as e:
            session.rollback()
            raise e
        finally:
            session.close()

    def get_stats(self) -> Dict[str, Any]:
        """Get catalog statistics."""
        session = self.get_session()
        try:
            total = session.query(RunModel).count()
            by_status = dict(session.query(RunModel.status, func.count(RunModel.id)).group_by(RunModel.status).all())
            by_solver = dict(session.query(RunModel.solver, func.count(RunModel.id)).group_by(RunModel.solver).all())
            scenarios = [r[0] for r in session.query(RunModel.scenario).distinct().all()]
            total_time = session.query(func.sum(RunModel.wall_time)).scalar() or 0.0
            return {
                "total_runs": total,
                "runs_by_status": by_status,
                "runs_by_solver": by_solver,
                "scenarios": sorted(scenarios),
                "total_wall_time": float(total_time)
            }
        finally:
            session.close()


# Global database manager instance
db_manager = DatabaseManager()


def get_database():
    """Get the database manager instance."""
    return db_manager


def init_database():
    """Initialize the database and create tables."""
    db_manager.create_tables()
