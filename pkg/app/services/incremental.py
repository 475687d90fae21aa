"""
Step-by-step Newton-Raphson solver; the reference solution for PGD runs.
"""

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Callable, List, Optional

import numpy as np
from scipy.sparse import linalg as spla

from app.errors import LocalConvergenceError, NewtonDivergence, SingularSystemError
from app.models.history import ENERGY_KEYS, HistoryRecord
from app.models.scenario import SolverSettings
from app.services.problem import DiscreteProblem

logger = logging.getLogger(__name__)

Observer = Callable[[int, np.ndarray, Any], None]


@dataclass
class StepResult:
    u: np.ndarray
    state: Any
    iterations: int
    residual_trace: List[float] = field(default_factory=list)
    bisections: int = 0
    work: float = 0.0
    numerical_dissipation: float = 0.0


class IncrementalSolver:
    """Newton-Raphson on f_int(u, state) = p f_hat with bisection on failure."""

    def __init__(self, problem: DiscreteProblem, settings: Optional[SolverSettings] = None):
        self.problem = problem
        self.settings = settings or SolverSettings()
        self.final_state = None

    def _newton(self, u_prev: np.ndarray, state_prev, load: float) -> StepResult:
        s = self.settings
        f_ext = load * self.problem.load_pattern
        ref = np.linalg.norm(f_ext)
        tol = max(s.newton_tol * ref, s.newton_abs_tol)
        u = u_prev.copy()
        trace: List[float] = []
        use_tangent = s.tangent == "consistent"
        for it in range(s.max_newton_iters + 1):
            ev = self.problem.evaluate(u, state_prev, tangent=use_tangent)
            r = f_ext - ev.f_int
            rn = float(np.linalg.norm(r))
            trace.append(rn)
            if not np.isfinite(rn):
                raise NewtonDivergence("residual is not finite", trace)
            if rn <= tol:
                logger.debug(f"Newton converged in {it} iterations, residuals {trace}")
                return StepResult(u=u, state=ev.state, iterations=it, residual_trace=trace)
            if it == s.max_newton_iters:
                break
            if use_tangent:
                du = spla.spsolve(ev.tangent.tocsc(), r)
            else:
                du = self.problem.factorization.solve(r)
            if not np.all(np.isfinite(du)):
                raise NewtonDivergence("tangent system is singular", trace)
            if s.line_search:
                du = self._line_search(u, du, state_prev, f_ext, rn)
            u = u + du
        raise NewtonDivergence(f"no convergence in {s.max_newton_iters} iterations", trace)

    def _line_search(self, u, du, state_prev, f_ext, rn: float, max_cuts: int = 6) -> np.ndarray:
        alpha = 1.0
        for _ in range(max_cuts):
            trial = self.problem.evaluate(u + alpha * du, state_prev, tangent=False)
            if np.linalg.norm(f_ext - trial.f_int) < rn:
                break
            alpha *= 0.5
        return alpha * du

    def solve_step(self, u_prev: np.ndarray, state_prev, load_prev: float, load: float, depth: int = 0) -> StepResult:
        """Advance one load increment; on failure bisect it up to ``max_bisections`` times."""
        try:
            step = self._newton(u_prev, state_prev, load)
            f_ext = load * self.problem.load_pattern
            step.work = float(f_ext @ (step.u - u_prev))
            step.numerical_dissipation = self.problem.algorithmic_dissipation(u_prev, state_prev, step.u, step.state)
            return step
        except (NewtonDivergence, LocalConvergenceError, SingularSystemError) as e:
            if depth >= self.settings.max_bisections:
                trace = getattr(e, "trace", [])
                raise NewtonDivergence(f"step failed after {depth} bisections: {e}", trace) from e
            logger.warning(f"bisecting load increment {load_prev:.6g} -> {load:.6g} (depth {depth + 1}): {e}")
            mid = 0.5 * (load_prev + load)
            first = self.solve_step(u_prev, state_prev, load_prev, mid, depth + 1)
            second = self.solve_step(first.u, first.state, mid, load, depth + 1)
            return StepResult(
                u=second.u,
                state=second.state,
                iterations=first.iterations + second.iterations,
                residual_trace=first.residual_trace + second.residual_trace,
                bisections=1 + first.bisections + second.bisections,
                work=first.work + second.work,
                numerical_dissipation=first.numerical_dissipation + second.numerical_dissipation,
            )

    def run_history(
        self,
        loads: np.ndarray,
        steps_per_cycle: int,
        observer: Optional[Observer] = None,
        u0: Optional[np.ndarray] = None,
        state0=None,
        load0: float = 0.0,
    ) -> HistoryRecord:
        """Solve every step of ``loads`` in sequence.

        Row 0 is solved from (u0, state0) at load0, virgin by default.
        ``observer(row, u, state)`` is called after every converged step.
        """
        problem = self.problem
        loads = np.asarray(loads, dtype=float)
        n_t, n_d = loads.size, problem.n_dofs
        u = np.zeros(n_d) if u0 is None else u0.copy()
        state = problem.virgin_state() if state0 is None else problem.copy_state(state0)
        psi_e0, psi_h0 = problem.stored_energy(u, state)
        diss0 = problem.dissipation(state)

        disp = np.zeros((n_t, n_d))
        energy = {k: np.zeros(n_t) for k in ENERGY_KEYS}
        probes = {}
        iterations = np.zeros(n_t, dtype=np.int32)
        residuals = np.zeros(n_t)
        bisections = np.zeros(n_t, dtype=np.int32)
        ring = deque(maxlen=self.settings.state_ring)
        cycle_states = {}
        work = num_diss = 0.0
        load_prev = load0

        def build(n_done: int, complete: bool) -> HistoryRecord:
            return HistoryRecord(
                displacements=disp[:n_done],
                load_factors=loads[:n_done].copy(),
                steps_per_cycle=steps_per_cycle,
                energy={k: v[:n_done] for k, v in energy.items()},
                probes={k: v[:n_done] for k, v in probes.items()},
                iterations=iterations[:n_done],
                residuals=residuals[:n_done],
                bisections=bisections[:n_done],
                cycle_states=cycle_states,
                recent_states=ring,
                metadata={"solver": "incremental", "tangent": self.settings.tangent, **problem.metadata()},
                complete=complete,
            )

        for n in range(n_t):
            try:
                step = self.solve_step(u, state, load_prev, loads[n])
            except NewtonDivergence as e:
                failure = NewtonDivergence(f"incremental solve failed: {e}", e.trace, step=n)
                failure.partial = build(n, complete=False)
                raise failure from e
            work += step.work
            num_diss += step.numerical_dissipation
            u, state, load_prev = step.u, step.state, loads[n]

            disp[n] = u
            psi_e, psi_h = problem.stored_energy(u, state)
            energy["external_work"][n] = work
            energy["elastic_energy"][n] = psi_e - psi_e0
            energy["hardening_energy"][n] = psi_h - psi_h0
            energy["dissipation"][n] = problem.dissipation(state) - diss0
            energy["numerical_dissipation"][n] = num_diss
            for key, value in problem.probes(u).items():
                probes.setdefault(key, np.zeros(n_t))[n] = value
            iterations[n] = step.iterations
            residuals[n] = step.residual_trace[-1] if step.residual_trace else 0.0
            bisections[n] = step.bisections
            if ring.maxlen:
                ring.append((n, problem.state_arrays(problem.copy_state(state))))
            if n % (steps_per_cycle - 1) == 0:
                cycle_states[n] = problem.state_arrays(problem.copy_state(state))
                for key, value in problem.state_probes(state).items():
                    probes.setdefault(f"cycle_{key}", np.full(n_t, np.nan))[n] = value
                if n:
                    logger.info(
                        f"cycle {n // (steps_per_cycle - 1)} done: dissipation {energy['dissipation'][n]:.6g}, "
                        f"max Newton iterations {iterations[n - steps_per_cycle + 1:n + 1].max()}"
                    )
            if observer is not None:
                observer(n, u, state)

        self.final_state = state
        return build(n_t, complete=True)
