"""
FastAPI backend for Ratchet PGD - read-only results service.
Serves the run catalog, built-in scenarios, scenario validation and dof counts.
Solvers are never run from the service.
"""

import json
import logging
from typing import Any, Dict, List, Optional

from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel, Field

from app.config import APP_DESCRIPTION, APP_NAME, APP_VERSION
from app.database import DatabaseManager, init_database
from app.errors import ConfigError, SolverError
from app.models.scenario import parse_scenario
from app.services.pgd import TimeGrid, dof_counts
from app.services.scenarios import BUILTIN_SCENARIOS, builtin_names, get_builtin

# Configure logging
logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)

# Initialize FastAPI app
app = FastAPI(title=APP_NAME, description=APP_DESCRIPTION, version=APP_VERSION)

# CORS middleware for dashboards reading the catalog
app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["GET", "POST", "DELETE"],
    allow_headers=["*"],
)

# Initialize database
init_database()
db_manager = DatabaseManager()


# Pydantic models for API
class DofCountRequest(BaseModel):
    n_dofs: int = Field(..., ge=1)
    n_tau: int = Field(..., ge=2)
    scales: List[int] = Field(..., min_items=1)
    modes: int = Field(..., ge=0)


class ValidateRequest(BaseModel):
    scenario: Dict[str, Any]


# API Routes

@app.get("/api")
async def api_info():
    """API information endpoint."""
    return {"message": f"{APP_NAME} results API", "version": APP_VERSION}


@app.get("/health")
async def health_check():
    """Health check endpoint."""
    return {"status": "healthy", "database": "connected"}


# Run catalog endpoints

@app.get("/api/runs", response_model=List[Dict[str, Any]])
async def list_runs(scenario: Optional[str] = None, solver: Optional[str] = None, status: Optional[str] = None, limit: int = 100):
    """List catalogued runs, newest first."""
    try:
        return db_manager.list_runs(scenario=scenario, solver=solver, status=status, limit=limit)
    except Exception as e:
        logger.error(f"Error listing runs: {e}")
        raise HTTPException(status_code=500, detail="Failed to list runs")


@app.get("/api/runs/{run_id}")
async def get_run(run_id: int):
    """Get a specific run by ID."""
    run = db_manager.get_run(run_id)
    if not run:
        raise HTTPException(status_code=404, detail="Run not found")
    return run


@app.delete("/api/runs/{run_id}")
async def delete_run(run_id: int):
    """Remove a run from the catalog."""
    try:
        deleted = db_manager.delete_run(run_id)
    except Exception as e:
        logger.error(f"Error deleting run {run_id}: {e}")
        raise HTTPException(status_code=500, detail="Failed to delete run")
    if not deleted:
        raise HTTPException(status_code=404, detail="Run not found")
    return {"message": "Run deleted successfully"}


@app.get("/api/stats")
async def get_stats():
    """Catalog statistics."""
    try:
        return db_manager.get_stats()
    except Exception as e:
        logger.error(f"Error getting stats: {e}")
        raise HTTPException(status_code=500, detail="Failed to get statistics")


# Scenario endpoints

@app.get("/api/scenarios")
async def list_scenarios():
    """Built-in scenarios with their descriptions."""
    return [
        {"name": name, "kind": BUILTIN_SCENARIOS[name]["kind"], "description": BUILTIN_SCENARIOS[name]["description"]}
        for name in builtin_names()
    ]


@app.get("/api/scenarios/{name}")
async def get_scenario(name: str):
    """Full configuration of a built-in scenario."""
    if name not in BUILTIN_SCENARIOS:
        raise HTTPException(status_code=404, detail="Scenario not found")
    try:
        return json.loads(get_builtin(name).json())
    except ConfigError as e:
        logger.error(f"Built-in scenario {name} failed its self-check: {e}")
        raise HTTPException(status_code=500, detail=str(e))


@app.post("/api/validate")
async def validate_scenario(request: ValidateRequest):
    """Validate a posted scenario configuration."""
    try:
        scenario = parse_scenario(request.scenario)
    except ConfigError as e:
        raise HTTPException(status_code=422, detail={"message": str(e), "field": e.field, "line": e.line})
    return {"valid": True, "scenario": json.loads(scenario.json())}


@app.post("/api/dof-counts")
async def compute_dof_counts(request: DofCountRequest):
    """Unknown counts of the incremental and the PGD representation."""
    try:
        grid = TimeGrid(n_tau=request.n_tau, scales=tuple(request.scales))
    except SolverError as e:
        raise HTTPException(status_code=422, detail=str(e))
    incremental, pgd = dof_counts(grid, request.n_dofs, request.modes)
    return {"incremental": incremental, "pgd": pgd, "n_cycles": grid.n_cycles, "n_steps": grid.n_steps}
