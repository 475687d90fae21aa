"""
Error reports between two histories on the same step grid.

History A is the reference (usually the incremental oracle); every relative
error is normalized by A.
"""

import logging
from typing import Any, Dict, Iterable, Optional, Sequence, Union

import numpy as np

from app.errors import InvalidInput
from app.models.history import HistoryRecord

logger = logging.getLogger(__name__)

Selection = Union[None, str, Sequence[int]]


def _errors(ref: np.ndarray, other: np.ndarray) -> Dict[str, float]:
    diff = other - ref
    ref_norm = float(np.linalg.norm(ref))
    diff_norm = float(np.linalg.norm(diff))
    if ref_norm > 0.0:
        rel = diff_norm / ref_norm
    else:
        rel = 0.0 if diff_norm == 0.0 else float("inf")
    scale = float(np.abs(ref).max()) if ref.size else 0.0
    max_abs = float(np.abs(diff).max()) if diff.size else 0.0
    return {
        "relative_l2": rel,
        "max_abs": max_abs,
        "max_relative": max_abs / scale if scale > 0.0 else (0.0 if max_abs == 0.0 else float("inf")),
    }


def _select(record: HistoryRecord, selection: Selection) -> np.ndarray:
    if selection is None or selection == "displacements":
        return record.displacements
    if isinstance(selection, str):
        if selection not in record.probes:
            raise InvalidInput(f"unknown probe '{selection}'")
        return record.probes[selection]
    dofs = np.asarray(list(selection), dtype=int)
    if np.any(dofs < 0) or np.any(dofs >= record.n_dofs):
        raise InvalidInput(f"dof index outside 0..{record.n_dofs - 1}")
    return record.displacements[:, dofs]


def compare(
    a: HistoryRecord,
    b: HistoryRecord,
    selection: Selection = None,
    problem=None,
    depths: Optional[Iterable[float]] = None,
) -> Dict[str, Any]:
    """Compare B against reference A.

    ``selection`` picks the displacement field (default), a probe name, or a
    list of dof indices. With a beam ``problem`` and sample ``depths`` the
    final-step displacement, shear and moment profiles are compared too.
    """
    if a.n_dofs != b.n_dofs:
        raise InvalidInput(f"dof counts differ: {a.n_dofs} vs {b.n_dofs}")
    if a.n_steps != b.n_steps or a.steps_per_cycle != b.steps_per_cycle:
        raise InvalidInput(
            f"time grids differ: {a.n_steps} steps / {a.steps_per_cycle} per cycle vs "
            f"{b.n_steps} steps / {b.steps_per_cycle} per cycle"
        )

    report: Dict[str, Any] = {"selection": _errors(_select(a, selection), _select(b, selection))}
    report["displacement"] = _errors(a.displacements, b.displacements)

    for key in sorted(set(a.probes) & set(b.probes)):
        if key.startswith("cycle_"):
            continue
        report[key] = _errors(a.probes[key], b.probes[key])
    if "dissipation" in a.energy and "dissipation" in b.energy:
        report["dissipation"] = _errors(a.energy["dissipation"], b.energy["dissipation"])

    per_cycle = np.array(
        [_errors(a.displacements[a.cycle_rows(c)], b.displacements[b.cycle_rows(c)])["relative_l2"] for c in range(a.n_cycles)]
    )
    report["per_cycle"] = {"max_relative_l2": float(per_cycle.max()) if per_cycle.size else 0.0, "values": per_cycle}

    jumps = b.boundary_jumps if b.boundary_jumps is not None and b.boundary_jumps.size else None
    report["jumps"] = {
        "mean": float(jumps.mean()) if jumps is not None else 0.0,
        "max": float(jumps.max()) if jumps is not None else 0.0,
        "values": jumps if jumps is not None else np.zeros(0),
    }

    if problem is not None and hasattr(problem, "profiles"):
        depths = np.asarray(list(depths) if depths is not None else [], dtype=float)
        if depths.size:
            pa = problem.profiles(a.displacements[-1], depths)
            pb = problem.profiles(b.displacements[-1], depths)
            for quantity in ("displacement", "shear", "moment"):
                report[f"final_{quantity}"] = _errors(pa[quantity], pb[quantity])

    logger.info(
        f"Comparison: displacement relative L2 {report['displacement']['relative_l2']:.3e}, "
        f"max abs {report['displacement']['max_abs']:.3e}"
    )
    return report
