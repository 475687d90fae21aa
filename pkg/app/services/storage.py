"""
Output bundle I/O.

A bundle directory holds:

* ``history.json``: sidecar metadata (schema version, tool version, config
  hash, dof counts, timings, completeness flag, chunk list)
* ``history_0000.npz`` ...: per-step arrays in chunks of ``CHUNK_STEPS`` rows
* ``states.npz``: internal-variable snapshots at cycle boundaries
* ``decomposition.npz`` / ``decomposition.json``: PGD modes and convergence log
* CSV traces written with pandas
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Union

import numpy as np
import pandas as pd

from app import config
from app.errors import InvalidInput
from app.models.history import HistoryRecord
from app.services.pgd import Decomposition, Mode, TimeGrid

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, float) and not np.isfinite(value):
        return None
    return value


def write_json(path: PathLike, data: Dict[str, Any]) -> None:
    Path(path).write_text(json.dumps(_jsonable(data), indent=2))


def read_json(path: PathLike) -> Dict[str, Any]:
    return json.loads(Path(path).read_text())


def _step_arrays(record: HistoryRecord) -> Dict[str, np.ndarray]:
    arrays = {"displacements": record.displacements, "load_factors": record.load_factors}
    for key, trace in record.energy.items():
        arrays[f"energy/{key}"] = trace
    for key, trace in record.probes.items():
        arrays[f"probe/{key}"] = trace
    for key in ("iterations", "residuals", "bisections"):
        value = getattr(record, key)
        if value is not None:
            arrays[key] = value
    return arrays


def save_history(
    record: HistoryRecord, out_dir: PathLike, metadata: Optional[Dict[str, Any]] = None, chunk_steps: int = config.CHUNK_STEPS
) -> Path:
    """Write ``record`` as a chunked bundle and return the sidecar path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    arrays = _step_arrays(record)
    chunks: List[str] = []
    for k, start in enumerate(range(0, record.n_steps, chunk_steps)):
        name = f"history_{k:04d}.npz"
        np.savez_compressed(out / name, **{key: a[start:start + chunk_steps] for key, a in arrays.items()})
        chunks.append(name)
    if record.cycle_states:
        flat = {f"{row}/{name}": a for row, state in record.cycle_states.items() for name, a in state.items()}
        np.savez_compressed(out / "states.npz", **flat)
    if record.boundary_jumps is not None:
        np.save(out / "boundary_jumps.npy", record.boundary_jumps)

    sidecar = {
        "schema_version": config.SCHEMA_VERSION,
        "tool": config.APP_NAME,
        "tool_version": config.APP_VERSION,
        "n_steps": record.n_steps,
        "n_dofs": record.n_dofs,
        "steps_per_cycle": record.steps_per_cycle,
        "chunk_steps": chunk_steps,
        "chunks": chunks,
        "arrays": sorted(arrays),
        "complete": record.complete,
        "summary": record.summary(),
        **record.metadata,
        **(metadata or {}),
    }
    path = out / "history.json"
    write_json(path, sidecar)
    logger.info(f"History written to {out} ({len(chunks)} chunks, {record.n_steps} steps)")
    return path


def load_history(bundle: PathLike) -> HistoryRecord:
    """Read a bundle directory (or its ``history.json``) back to a HistoryRecord."""
    path = Path(bundle)
    out = path.parent if path.is_file() else path
    sidecar_path = out / "history.json"
    if not sidecar_path.exists():
        raise InvalidInput(f"no history bundle at {out}")
    meta = read_json(sidecar_path)
    if meta.get("schema_version") != config.SCHEMA_VERSION:
        raise InvalidInput(f"unsupported bundle schema version {meta.get('schema_version')}")

    parts: Dict[str, List[np.ndarray]] = {}
    for name in meta["chunks"]:
        with np.load(out / name) as data:
            for key in data.files:
                parts.setdefault(key, []).append(data[key])
    arrays = {k: np.concatenate(v, axis=0) for k, v in parts.items()}

    cycle_states: Dict[int, Dict[str, np.ndarray]] = {}
    if (out / "states.npz").exists():
        with np.load(out / "states.npz") as data:
            for key in data.files:
                row, name = key.split("/", 1)
                cycle_states.setdefault(int(row), {})[name] = data[key]
    jumps = np.load(out / "boundary_jumps.npy") if (out / "boundary_jumps.npy").exists() else None

    reserved = {"chunks", "arrays", "chunk_steps", "n_steps", "n_dofs", "steps_per_cycle", "complete", "summary"}
    return HistoryRecord(
        displacements=arrays["displacements"],
        load_factors=arrays["load_factors"],
        steps_per_cycle=int(meta["steps_per_cycle"]),
        energy={k.split("/", 1)[1]: v for k, v in arrays.items() if k.startswith("energy/")},
        probes={k.split("/", 1)[1]: v for k, v in arrays.items() if k.startswith("probe/")},
        iterations=arrays.get("iterations"),
        residuals=arrays.get("residuals"),
        bisections=arrays.get("bisections"),
        cycle_states=cycle_states,
        boundary_jumps=jumps,
        metadata={k: v for k, v in meta.items() if k not in reserved},
        complete=bool(meta.get("complete", True)),
    )


def save_decomposition(decomposition: Decomposition, out_dir: PathLike, settings: Optional[Dict[str, Any]] = None) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    arrays: Dict[str, np.ndarray] = {}
    for i, mode in enumerate(decomposition.modes):
        arrays[f"phi_{i}"] = mode.phi
        for j, theta in enumerate(mode.thetas):
            arrays[f"theta_{i}_{j}"] = theta
    arrays["zeta"] = decomposition.zetas
    np.savez_compressed(out / "decomposition.npz", **arrays)
    path = out / "decomposition.json"
    write_json(
        path,
        {
            "schema_version": config.SCHEMA_VERSION,
            "grid": decomposition.grid.to_dict(),
            "n_modes": decomposition.n_modes,
            "zeta": decomposition.zetas,
            "settings": settings or {},
            "log": decomposition.log,
        },
    )
    return path


def load_decomposition(bundle: PathLike) -> Decomposition:
    out = Path(bundle)
    meta = read_json(out / "decomposition.json")
    grid_meta = meta["grid"]
    grid = TimeGrid(n_tau=grid_meta["n_tau"], scales=tuple(grid_meta["scales"]), period=grid_meta["period"])
    modes = []
    with np.load(out / "decomposition.npz") as data:
        zeta = data["zeta"]
        for i in range(meta["n_modes"]):
            thetas = [data[f"theta_{i}_{j}"] for j in range(grid.n_scales)]
            modes.append(Mode(phi=data[f"phi_{i}"], thetas=thetas, zeta=float(zeta[i])))
    return Decomposition(grid=grid, modes=modes, log=meta.get("log", []))


def trace_frame(record: HistoryRecord, columns: Optional[Iterable[str]] = None) -> pd.DataFrame:
    """One row per step: step, cycle, load factor, probes and energies."""
    rows = np.arange(record.n_steps)
    frame = pd.DataFrame(
        {
            "step": rows,
            "cycle": np.minimum(rows // (record.steps_per_cycle - 1), max(record.n_cycles - 1, 0)),
            "load_factor": record.load_factors,
        }
    )
    for key, trace in record.probes.items():
        frame[key] = trace
    for key, trace in record.energy.items():
        frame[key] = trace
    if columns:
        wanted = ["step", "cycle", "load_factor"] + [c for c in columns if c not in ("step", "cycle", "load_factor")]
        missing = [c for c in wanted if c not in frame.columns]
        if missing:
            raise InvalidInput(f"unknown trace columns: {missing}")
        frame = frame[wanted]
    return frame


def export_trace_csv(record: HistoryRecord, path: PathLike, columns: Optional[Iterable[str]] = None) -> Path:
    path = Path(path)
    trace_frame(record, columns).to_csv(path, index=False)
    return path


def export_dofs_csv(record: HistoryRecord, path: PathLike, dofs: Iterable[int]) -> Path:
    """Displacement traces of selected dofs, one row per step."""
    dofs = list(dofs)
    if any(d < 0 or d >= record.n_dofs for d in dofs):
        raise InvalidInput(f"dof index outside 0..{record.n_dofs - 1}")
    frame = pd.DataFrame({"step": np.arange(record.n_steps)})
    for d in dofs:
        frame[f"u_{d}"] = record.displacements[:, d]
    frame.to_csv(path, index=False)
    return Path(path)


def export_theta_csv(decomposition: Decomposition, path: PathLike) -> Path:
    records = []
    for i, mode in enumerate(decomposition.modes):
        for j, theta in enumerate(mode.thetas):
            for n, value in enumerate(theta, start=1):
                records.append({"mode": i + 1, "scale": j + 1, "index": n, "theta": float(value)})
    pd.DataFrame(records, columns=["mode", "scale", "index", "theta"]).to_csv(path, index=False)
    return Path(path)


def export_zeta_csv(decomposition: Decomposition, path: PathLike) -> Path:
    frame = pd.DataFrame({"mode": np.arange(1, decomposition.n_modes + 1), "zeta": decomposition.zetas})
    frame.to_csv(path, index=False)
    return Path(path)


def export_report_csv(report: Dict[str, Any], path: PathLike) -> Path:
    """Flatten a comparison report to (quantity, metric, value) rows."""
    rows = []
    for quantity, metrics in report.items():
        if isinstance(metrics, dict):
            for metric, value in metrics.items():
                if np.isscalar(value):
                    rows.append({"quantity": quantity, "metric": metric, "value": value})
        elif np.isscalar(metrics):
            rows.append({"quantity": quantity, "metric": "value", "value": metrics})
    pd.DataFrame(rows, columns=["quantity", "metric", "value"]).to_csv(path, index=False)
    return Path(path)
