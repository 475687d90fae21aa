"""
Full-time solution archive shared by the incremental and PGD solvers.

Row k of every per-step array is pseudo-time step k (0-based); a history of
C cycles with N_tau nodes per cycle has (N_tau - 1) * C + 1 rows, the first
row being the initial load level of cycle 1.
"""

from collections import deque
from dataclasses import dataclass, field
from typing import Any, Deque, Dict, List, Optional, Tuple

import numpy as np

ENERGY_KEYS = ("external_work", "elastic_energy", "hardening_energy", "dissipation", "numerical_dissipation")


@dataclass
class HistoryRecord:
    displacements: np.ndarray  # (N_t, N_d)
    load_factors: np.ndarray  # (N_t,)
    steps_per_cycle: int  # N_tau
    energy: Dict[str, np.ndarray] = field(default_factory=dict)
    probes: Dict[str, np.ndarray] = field(default_factory=dict)
    iterations: Optional[np.ndarray] = None
    residuals: Optional[np.ndarray] = None
    bisections: Optional[np.ndarray] = None
    cycle_states: Dict[int, Dict[str, np.ndarray]] = field(default_factory=dict)
    recent_states: Deque[Tuple[int, Dict[str, np.ndarray]]] = field(default_factory=deque)
    boundary_jumps: Optional[np.ndarray] = None
    metadata: Dict[str, Any] = field(default_factory=dict)
    complete: bool = True

    @property
    def n_steps(self) -> int:
        return self.displacements.shape[0]

    @property
    def n_dofs(self) -> int:
        return self.displacements.shape[1]

    @property
    def n_cycles(self) -> int:
        return (self.n_steps - 1) // (self.steps_per_cycle - 1)

    def cycle_rows(self, cycle: int) -> np.ndarray:
        """Rows of cycle ``cycle`` (0-based), both endpoints included."""
        start = cycle * (self.steps_per_cycle - 1)
        return np.arange(start, start + self.steps_per_cycle)

    def cycle_boundaries(self) -> np.ndarray:
        return np.arange(0, self.n_steps, self.steps_per_cycle - 1)

    def energy_balance(self) -> np.ndarray:
        """W_ext - (psi + D + D_num) per step; zero up to solver tolerance."""
        e = self.energy
        return e["external_work"] - (
            e["elastic_energy"] + e["hardening_energy"] + e["dissipation"] + e["numerical_dissipation"]
        )

    def per_cycle_increment(self, key: str) -> np.ndarray:
        """Change of a probe trace over each cycle."""
        trace = self.probes[key]
        b = self.cycle_boundaries()
        return np.diff(trace[b])

    def summary(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {"n_steps": self.n_steps, "n_dofs": self.n_dofs, "n_cycles": self.n_cycles}
        if "dissipation" in self.energy:
            out["final_dissipation"] = float(self.energy["dissipation"][-1])
        for key, trace in self.probes.items():
            out[f"final_{key}"] = float(trace[-1])
        if self.boundary_jumps is not None and self.boundary_jumps.size:
            out["mean_boundary_jump"] = float(self.boundary_jumps.mean())
        return out


def concatenate(head: HistoryRecord, tail: HistoryRecord) -> HistoryRecord:
    """Join two histories whose shared step is the last row of ``head``."""

    def join(a, b):
        return np.concatenate([a[:-1], b], axis=0)

    energy = {k: join(head.energy[k], tail.energy[k]) for k in head.energy if k in tail.energy}
    probes = {k: join(head.probes[k], tail.probes[k]) for k in head.probes if k in tail.probes}
    offset = head.n_steps - 1
    states = dict(head.cycle_states)
    states.update({k + offset: v for k, v in tail.cycle_states.items()})
    jumps: List[float] = []
    if head.boundary_jumps is not None:
        jumps.extend(head.boundary_jumps.tolist())
    if tail.boundary_jumps is not None:
        jumps.extend(tail.boundary_jumps.tolist())
    return HistoryRecord(
        displacements=join(head.displacements, tail.displacements),
        load_factors=join(head.load_factors, tail.load_factors),
        steps_per_cycle=head.steps_per_cycle,
        energy=energy,
        probes=probes,
        cycle_states=states,
        recent_states=tail.recent_states,
        boundary_jumps=np.array(jumps) if (head.boundary_jumps is not None or tail.boundary_jumps is not None) else None,
        metadata={**head.metadata, **tail.metadata},
        complete=head.complete and tail.complete,
    )
