"""
Multi-temporal PGD solver for cyclic loading (decoupled scheme).

Pseudo-time is split into an intra-cycle axis tau with N_tau nodes and S
large-time scales of sizes N_1..N_S whose tensor product enumerates the
cycles. The displacement at intra-cycle node h of cycle c is

    u[h, c] = sum_i zeta_i phi_i[h] prod_j theta_i^j[n_j(c)]

with the cycle index c = sum_j (n_j - 1) prod_{l<j} N_l (first scale varies
fastest). With histories of the inelastic strains frozen, every mode is
found by alternating a small-time update (one sparse solve per h, all with
the constant elastic K) and scalar large-time updates, after which the
histories are re-swept through the constitutive model and the process is
repeated until the history stops changing.

Internal-variable histories are carried as eigen forces
g_n = int B^T C (eps_p + eps_r) dx, so that K u - g = f_int.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.errors import (
    InvalidInput,
    ModeEnergyVanished,
    RedundantMode,
    SolverError,
    StagnationError,
    VanishingAmplitude,
)
from app.models.history import HistoryRecord
from app.models.scenario import PgdSettings
from app.services.problem import DiscreteProblem

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TimeGrid:
    n_tau: int
    scales: Tuple[int, ...]
    period: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "scales", tuple(int(n) for n in self.scales))
        if self.n_tau < 2:
            raise InvalidInput("a cycle needs at least two small-time nodes")
        if not self.scales or any(n < 1 for n in self.scales):
            raise InvalidInput("large-time scale sizes must be positive")
        if self.period <= 0:
            raise InvalidInput("cycle period must be positive")

    @property
    def tau(self) -> np.ndarray:
        return np.linspace(0.0, self.period, self.n_tau)

    @property
    def weights(self) -> np.ndarray:
        """Trapezoidal weights; they sum to the period."""
        w = np.full(self.n_tau, self.period / (self.n_tau - 1))
        w[[0, -1]] *= 0.5
        return w

    @property
    def n_scales(self) -> int:
        return len(self.scales)

    @property
    def n_cycles(self) -> int:
        return int(np.prod(self.scales))

    @property
    def n_steps(self) -> int:
        return (self.n_tau - 1) * self.n_cycles + 1

    def cycle_index(self, n_vec: Sequence[int]) -> int:
        """0-based cycle index of 1-based large-time indices."""
        if len(n_vec) != self.n_scales:
            raise InvalidInput(f"expected {self.n_scales} large-time indices, got {len(n_vec)}")
        c, stride = 0, 1
        for n, size in zip(n_vec, self.scales):
            if not 1 <= n <= size:
                raise InvalidInput(f"large-time index {n} outside 1..{size}")
            c += (n - 1) * stride
            stride *= size
        return c

    def multi_index(self, c: int) -> Tuple[int, ...]:
        if not 0 <= c < self.n_cycles:
            raise InvalidInput(f"cycle index {c} outside 0..{self.n_cycles - 1}")
        out = []
        for size in self.scales:
            out.append(c % size + 1)
            c //= size
        return tuple(out)

    def step_matrix(self) -> np.ndarray:
        """Row index of every (h, c) pair, shape (N_tau, N_cyc)."""
        return (self.n_tau - 1) * np.arange(self.n_cycles)[None, :] + np.arange(self.n_tau)[:, None]

    def owner(self, rows: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """(h, c) owning each row: a shared endpoint belongs to the next cycle's first node."""
        rows = np.asarray(rows, dtype=np.int64)
        if np.any(rows < 0) or np.any(rows >= self.n_steps):
            raise InvalidInput("step index outside the grid")
        c = rows // (self.n_tau - 1)
        h = rows % (self.n_tau - 1)
        last = c == self.n_cycles
        c = np.where(last, self.n_cycles - 1, c)
        h = np.where(last, self.n_tau - 1, h)
        return h, c

    def to_dict(self) -> Dict[str, Any]:
        return {"n_tau": self.n_tau, "scales": list(self.scales), "period": self.period, "weights": "trapezoidal"}


def time_index(h: int, n_vec: Sequence[int], grid: TimeGrid) -> Tuple[float, int]:
    """Pseudo-time and 1-based global step of small-time node h (1-based) in cycle n_vec."""
    if not 1 <= h <= grid.n_tau:
        raise InvalidInput(f"small-time index {h} outside 1..{grid.n_tau}")
    c = grid.cycle_index(n_vec)
    t = c * grid.period + grid.tau[h - 1]
    return float(t), (grid.n_tau - 1) * c + h


def dof_counts(grid: TimeGrid, n_dofs: int, n_modes: int) -> Tuple[int, int]:
    """(incremental, PGD) numbers of unknowns."""
    incremental = n_dofs * (grid.n_tau - 1) * grid.n_cycles
    pgd = n_modes * n_dofs * grid.n_tau + n_modes * sum(grid.scales)
    return int(incremental), int(pgd)


def kron_amplitude(thetas: Sequence[np.ndarray]) -> np.ndarray:
    out = np.ones(1)
    for th in thetas:
        out = np.kron(th, out)
    return out


@dataclass
class Mode:
    phi: np.ndarray  # (N_tau, N_d)
    thetas: List[np.ndarray]
    zeta: float = 1.0

    def amplitude(self) -> np.ndarray:
        return kron_amplitude(self.thetas)

    def copy(self) -> "Mode":
        return Mode(self.phi.copy(), [t.copy() for t in self.thetas], float(self.zeta))


@dataclass
class Decomposition:
    grid: TimeGrid
    modes: List[Mode] = field(default_factory=list)
    log: List[Dict[str, Any]] = field(default_factory=list)

    @property
    def n_modes(self) -> int:
        return len(self.modes)

    @property
    def zetas(self) -> np.ndarray:
        return np.array([m.zeta for m in self.modes])

    def copy(self) -> "Decomposition":
        return Decomposition(self.grid, [m.copy() for m in self.modes], list(self.log))

    def reconstruct(self, rows: Optional[np.ndarray] = None) -> np.ndarray:
        rows = np.arange(self.grid.n_steps) if rows is None else np.asarray(rows)
        h, c = self.grid.owner(rows)
        if not self.modes:
            raise InvalidInput("cannot reconstruct an empty decomposition")
        out = np.zeros((rows.size, self.modes[0].phi.shape[1]))
        for m in self.modes:
            out += (m.zeta * m.amplitude()[c])[:, None] * m.phi[h]
        return out

    def boundary_jumps(self) -> np.ndarray:
        """||u[N_tau, c] - u[1, c + 1]|| for every pair of consecutive cycles."""
        if self.grid.n_cycles < 2 or not self.modes:
            return np.zeros(0)
        diff = 0.0
        for m in self.modes:
            a = m.zeta * m.amplitude()
            diff = diff + a[:-1, None] * m.phi[-1][None, :] - a[1:, None] * m.phi[0][None, :]
        return np.linalg.norm(diff, axis=1)


def reconstruct(decomposition: Decomposition, steps: Optional[Sequence[int]] = None) -> np.ndarray:
    """Displacements at 0-based grid steps (all steps by default)."""
    return decomposition.reconstruct(None if steps is None else np.asarray(steps))


@dataclass
class Histories:
    g: np.ndarray  # (N_steps, N_d) eigen forces
    dissipation: np.ndarray  # (N_steps,)
    final_state: Any = None
    states: Optional[List[Dict[str, np.ndarray]]] = None
    cycle_states: Dict[int, Dict[str, np.ndarray]] = field(default_factory=dict)
    cycle_probes: Dict[str, np.ndarray] = field(default_factory=dict)


@dataclass
class PgdResult:
    decomposition: Decomposition
    histories: Histories
    record: HistoryRecord


class PgdSolver:
    """Greedy enrichment of a separated displacement history.

    ``loads`` holds the load factor of every (h, c) pair, shape (N_tau, N_cyc).
    ``initial_state`` is the internal state before step 0 of the window.
    """

    def __init__(
        self,
        problem: DiscreteProblem,
        grid: TimeGrid,
        loads: np.ndarray,
        settings: Optional[PgdSettings] = None,
        initial_state=None,
    ):
        self.problem = problem
        self.grid = grid
        self.loads = np.asarray(loads, dtype=float)
        if self.loads.shape != (grid.n_tau, grid.n_cycles):
            raise InvalidInput(f"loads must have shape {(grid.n_tau, grid.n_cycles)}, got {self.loads.shape}")
        self.settings = settings or PgdSettings()
        self.initial_state = problem.virgin_state() if initial_state is None else problem.copy_state(initial_state)
        self.K = problem.stiffness
        self.fhat = problem.load_pattern
        self.w = grid.weights
        self._steps = grid.step_matrix()

    # -- helpers -----------------------------------------------------------

    def _grid_histories(self, histories: Histories) -> np.ndarray:
        """Eigen forces arranged as (N_tau, N_cyc, N_d)."""
        return histories.g[self._steps]

    def _wnorm(self, phi: np.ndarray) -> float:
        return float(np.sqrt(np.sum(self.w * np.sum(phi * phi, axis=1))))

    def _kphi(self, phi: np.ndarray) -> np.ndarray:
        return (self.K @ phi.T).T

    def zero_histories(self) -> Histories:
        n = self.grid.n_steps
        return Histories(g=np.zeros((n, self.problem.n_dofs)), dissipation=np.zeros(n), final_state=None)

    # -- separated updates ---------------------------------------------------

    def small_time_update(self, thetas: Sequence[np.ndarray], prior: Sequence[Mode], histories: Histories) -> np.ndarray:
        """phi[h] for all h with the large-time functions frozen."""
        amp = kron_amplitude(thetas)
        a2 = float(amp @ amp)
        if a2 == 0.0:
            raise VanishingAmplitude()
        G = self._grid_histories(histories)
        rhs = np.outer(self.loads @ amp, self.fhat) + np.einsum("c,hcd->hd", amp, G)
        phi = self.problem.factorization.solve(rhs) / a2
        for mode in prior:
            phi -= (mode.zeta * float(mode.amplitude() @ amp) / a2) * mode.phi
        return phi

    def large_time_update(
        self, phi: np.ndarray, thetas: Sequence[np.ndarray], j: int, prior: Sequence[Mode], histories: Histories
    ) -> np.ndarray:
        """theta^j with phi and the other scales frozen."""
        S = self.grid.n_scales
        kphi = self._kphi(phi)
        energy = float(np.sum(self.w * np.sum(phi * kphi, axis=1)))
        others = [float(thetas[l] @ thetas[l]) for l in range(S) if l != j]
        den = energy * float(np.prod(others)) if others else energy
        if not den > 0.0:
            raise ModeEnergyVanished()
        G = self._grid_histories(histories)
        Q = self.loads * (phi @ self.fhat)[:, None] + np.einsum("hd,hcd->hc", phi, G)
        for mode in prior:
            coupling = np.sum(phi * self._kphi(mode.phi), axis=1)
            Q -= mode.zeta * coupling[:, None] * mode.amplitude()[None, :]
        q = (self.w @ Q).reshape(tuple(reversed(self.grid.scales)))
        operands: List[Any] = [q, list(range(S))]
        for l in range(S):
            if l != j:
                operands += [thetas[l], [S - 1 - l]]
        num = np.einsum(*operands, [S - 1 - j])
        return num / den

    def update_coefficients(self, modes: Sequence[Mode], histories: Histories) -> np.ndarray:
        """Galerkin solve for all zeta with normalized modes; flips signs into theta^1."""
        G = self._grid_histories(histories)
        m = len(modes)
        amps = [md.amplitude() for md in modes]
        kphis = [self._kphi(md.phi) for md in modes]
        M = np.zeros((m, m))
        b = np.zeros(m)
        for k in range(m):
            for i in range(k, m):
                e = float(np.sum(self.w * np.sum(modes[k].phi * kphis[i], axis=1)))
                M[k, i] = M[i, k] = e * float(amps[k] @ amps[i])
            ga = np.einsum("c,hcd->hd", amps[k], G)
            b[k] = float(
                np.sum(self.w * (modes[k].phi @ self.fhat) * (self.loads @ amps[k]))
                + np.sum(self.w * np.sum(modes[k].phi * ga, axis=1))
            )
        eig = np.linalg.eigvalsh(M)
        if eig.min() <= 1e-10 * max(eig.max(), 0.0):
            raise RedundantMode(m)
        zeta = np.linalg.solve(M, b)
        for k, md in enumerate(modes):
            if zeta[k] < 0.0:
                md.thetas[0] = -md.thetas[0]
                zeta[k] = -zeta[k]
            md.zeta = float(zeta[k])
        return zeta

    def energy_functional(self, modes: Sequence[Mode], histories: Histories) -> float:
        """sum_h w_h sum_c (1/2 u.K u - F.u), the functional the updates minimize."""
        G = self._grid_histories(histories)
        amps = [md.amplitude() for md in modes]
        kphis = [self._kphi(md.phi) for md in modes]
        quad = 0.0
        lin = 0.0
        for k, mk in enumerate(modes):
            for i, mi in enumerate(modes):
                quad += mk.zeta * mi.zeta * float(np.sum(self.w * np.sum(mk.phi * kphis[i], axis=1))) * float(amps[k] @ amps[i])
            ga = np.einsum("c,hcd->hd", amps[k], G)
            lin += mk.zeta * float(
                np.sum(self.w * (mk.phi @ self.fhat) * (self.loads @ amps[k])) + np.sum(self.w * np.sum(mk.phi * ga, axis=1))
            )
        return 0.5 * quad - lin

    def history_difference(self, a: Sequence[Mode], b: Sequence[Mode]) -> float:
        """Relative weighted L2 distance of two separated histories (Gram products only)."""
        modes = list(a) + list(b)
        coef = np.array([m.zeta for m in a] + [-m.zeta for m in b])
        amps = [m.amplitude() for m in modes]
        n = len(modes)
        gram = np.zeros((n, n))
        for i in range(n):
            for k in range(i, n):
                gphi = float(np.sum(self.w * np.sum(modes[i].phi * modes[k].phi, axis=1)))
                gram[i, k] = gram[k, i] = gphi * float(amps[i] @ amps[k])
        na = len(a)
        diff2 = float(coef @ gram @ coef)
        ref2 = float(coef[:na] @ gram[:na, :na] @ coef[:na])
        if ref2 <= 0.0:
            return 0.0 if diff2 <= 0.0 else np.inf
        return float(np.sqrt(max(diff2, 0.0) / ref2))

    # -- history sweep -------------------------------------------------------

    def sweep_internal_histories(self, decomposition: Decomposition, block: int = 512) -> Histories:
        """Sequential constitutive sweep over every step of the reconstruction."""
        problem = self.problem
        n = self.grid.n_steps
        g = np.empty((n, problem.n_dofs))
        diss = np.empty(n)
        states = [] if self.settings.keep_states else None
        cycle_states: Dict[int, Dict[str, np.ndarray]] = {}
        cycle_probes: Dict[str, np.ndarray] = {}
        state = problem.copy_state(self.initial_state)
        for start in range(0, n, block):
            rows = np.arange(start, min(start + block, n))
            U = decomposition.reconstruct(rows)
            for k, row in enumerate(rows):
                state = problem.update_state(U[k], state, step=int(row))
                g[row] = problem.eigen_force(state)
                diss[row] = problem.dissipation(state)
                if states is not None:
                    states.append(problem.state_arrays(problem.copy_state(state)))
                if row % (self.grid.n_tau - 1) == 0:
                    cycle_states[int(row)] = problem.state_arrays(problem.copy_state(state))
                    for key, value in problem.state_probes(state).items():
                        cycle_probes.setdefault(f"cycle_{key}", np.full(n, np.nan))[row] = value
        return Histories(
            g=g, dissipation=diss, final_state=state, states=states, cycle_states=cycle_states, cycle_probes=cycle_probes
        )

    # -- enrichment ----------------------------------------------------------

    def _normalized(self, phi: np.ndarray, thetas: Sequence[np.ndarray]) -> Mode:
        scale = self._wnorm(phi)
        if scale == 0.0:
            raise ModeEnergyVanished()
        out = []
        for th in thetas:
            nrm = float(np.linalg.norm(th))
            if nrm == 0.0:
                raise VanishingAmplitude()
            scale *= nrm
            out.append(th / nrm)
        return Mode(phi / self._wnorm(phi), out, zeta=scale)

    def _fixed_point(self, phi, thetas, prior, histories, tentative_base: Optional[Decomposition] = None):
        s = self.settings
        thetas = [t / np.linalg.norm(t) for t in thetas]
        corrections: List[float] = []
        energies: List[float] = []
        best, since_best = np.inf, 0
        for sweep in range(1, s.max_sweeps + 1):
            phi_old, thetas_old = phi, [t.copy() for t in thetas]
            for j in range(self.grid.n_scales):
                th = self.large_time_update(phi, thetas, j, prior, histories)
                nrm = float(np.linalg.norm(th))
                if nrm == 0.0:
                    raise VanishingAmplitude()
                thetas[j] = th / nrm
            phi = self.small_time_update(thetas, prior, histories)
            pn = self._wnorm(phi)
            if pn == 0.0:
                raise ModeEnergyVanished()
            corr = max(
                [self._wnorm(phi - phi_old) / pn] + [float(np.linalg.norm(t - to)) for t, to in zip(thetas, thetas_old)]
            )
            corrections.append(corr)
            energies.append(self.energy_functional(list(prior) + [Mode(phi, thetas, 1.0)], histories))
            logger.debug(f"fixed-point sweep {sweep}: correction {corr:.3e}")
            if tentative_base is not None:
                trial = tentative_base.copy()
                trial.modes.append(Mode(phi.copy(), [t.copy() for t in thetas], 1.0))
                histories = self.sweep_internal_histories(trial)
            if corr < s.fixed_point_tol:
                return phi, thetas, histories, sweep, corrections, energies
            if corr < best:
                best, since_best = corr, 0
            else:
                since_best += 1
                if since_best >= s.stagnation_window:
                    raise StagnationError(corrections)
        logger.warning(f"fixed point stopped at {s.max_sweeps} sweeps (correction {corrections[-1]:.3e})")
        return phi, thetas, histories, s.max_sweeps, corrections, energies

    def enrich_mode(
        self, decomposition: Decomposition, histories: Histories, init: Optional[Mode] = None
    ) -> Tuple[Optional[Decomposition], Histories]:
        """Append one mode, iterating fixed point, coefficients and history sweeps.

        Returns ``(None, histories)`` when the current residual produces no
        enrichment at all.
        """
        s = self.settings
        m = decomposition.n_modes
        base = decomposition.copy()
        if init is not None:
            phi = init.phi * init.zeta
            thetas = [t.copy() for t in init.thetas]
        else:
            thetas = [np.ones(n) / np.sqrt(n) for n in self.grid.scales]
            phi = self.small_time_update(thetas, base.modes, histories)
        scale = max([md.zeta for md in base.modes] + [self._wnorm(self.problem.factorization.solve(self.fhat)) * np.abs(self.loads).max()])
        if self._wnorm(phi) <= 1e-14 * scale:
            logger.info(f"mode {m + 1}: residual carries no enrichment")
            return None, histories

        previous: Optional[List[Mode]] = None
        trial = base
        for outer in range(1, s.max_outer_iters + 1):
            per_sweep = base if s.history_sweep == "per_sweep" else None
            phi, thetas, histories_fp, sweeps, corrections, energies = self._fixed_point(
                phi, thetas, base.modes, histories, per_sweep
            )
            if per_sweep is not None:
                histories = histories_fp
            trial = base.copy()
            trial.modes.append(self._normalized(phi, thetas))
            self.update_coefficients(trial.modes, histories)
            new_hist = self.sweep_internal_histories(trial)

            g_ref = float(np.linalg.norm(new_hist.g))
            g_change = float(np.linalg.norm(new_hist.g - histories.g))
            g_rel = g_change / g_ref if g_ref > 0.0 else (0.0 if g_change == 0.0 else np.inf)
            u_rel = self.history_difference(trial.modes, previous) if previous is not None else np.inf
            entry = {
                "mode": m + 1,
                "outer": outer,
                "sweeps": sweeps,
                "corrections": corrections,
                "energies": energies,
                "zeta": [md.zeta for md in trial.modes],
                "history_change": g_rel,
                "solution_change": u_rel,
            }
            trial.log = list(base.log) + [entry]
            logger.debug(f"mode {m + 1} outer {outer}: history change {g_rel:.3e}, solution change {u_rel:.3e}")
            histories = new_hist
            if g_rel <= s.outer_tol or u_rel < s.outer_tol:
                break
            previous = [md.copy() for md in trial.modes]
            # restart from the current mode with the refreshed coefficients of the others
            base = Decomposition(self.grid, [md.copy() for md in trial.modes[:-1]], base.log)
            last = trial.modes[-1]
            phi = last.phi * last.zeta
            thetas = [t.copy() for t in last.thetas]
        else:
            logger.warning(f"mode {m + 1}: outer loop reached {s.max_outer_iters} iterations")
        logger.info(
            f"mode {m + 1} accepted after {outer} outer iterations, zeta = {trial.modes[-1].zeta:.6g}"
        )
        return trial, histories

    # -- driver ----------------------------------------------------------------

    def initial_guess(self, cycle_displacements: np.ndarray, cycle_eigen_forces: np.ndarray) -> Tuple[Mode, Histories]:
        """Seed mode from one incremental cycle and periodically extrapolated histories.

        Both inputs hold the N_tau rows of the last incrementally solved cycle.
        """
        grid = self.grid
        phi = np.asarray(cycle_displacements, dtype=float)
        g_cyc = np.asarray(cycle_eigen_forces, dtype=float)
        if phi.shape != (grid.n_tau, self.problem.n_dofs) or g_cyc.shape != phi.shape:
            raise InvalidInput("seed cycle must have shape (N_tau, N_d)")
        thetas = [np.ones(n) / np.sqrt(n) for n in grid.scales]
        seed = Mode(phi=phi * np.sqrt(grid.n_cycles), thetas=thetas, zeta=1.0)
        rows = np.arange(grid.n_steps)
        c, h = rows // (grid.n_tau - 1), rows % (grid.n_tau - 1)
        drift = g_cyc[-1] - g_cyc[0]
        g = g_cyc[h] + (c + 1)[:, None] * drift[None, :]
        return seed, Histories(g=g, dissipation=np.zeros(grid.n_steps), final_state=None)

    def solve(self, seed: Optional[Mode] = None, histories: Optional[Histories] = None) -> PgdResult:
        s = self.settings
        decomposition = Decomposition(self.grid)
        histories = histories if histories is not None else self.zero_histories()
        for m in range(s.max_modes):
            init = seed if (m == 0 and seed is not None) else None
            try:
                enriched, new_hist = self.enrich_mode(decomposition, histories, init)
            except (StagnationError, RedundantMode, VanishingAmplitude, ModeEnergyVanished) as e:
                logger.warning(f"mode {m + 1} rejected: {e}")
                decomposition.log.append({"mode": m + 1, "rejected": str(e)})
                break
            if enriched is None:
                break
            zetas = enriched.zetas
            if m > 0 and zetas[-1] < s.mode_accept_ratio * zetas[0]:
                logger.info(f"mode {m + 1} below acceptance ratio ({zetas[-1] / zetas[0]:.3e}), stopping")
                break
            decomposition, histories = enriched, new_hist
        if decomposition.n_modes == 0:
            raise SolverError("PGD produced no modes")
        if histories.final_state is None:
            histories = self.sweep_internal_histories(decomposition)
        return PgdResult(decomposition=decomposition, histories=histories, record=self.to_record(decomposition, histories))

    def to_record(self, decomposition: Decomposition, histories: Histories) -> HistoryRecord:
        grid = self.grid
        rows = np.arange(grid.n_steps)
        h, c = grid.owner(rows)
        disp = decomposition.reconstruct(rows)
        probes: Dict[str, np.ndarray] = {}
        for r, u in enumerate(disp):
            for key, value in self.problem.probes(u).items():
                probes.setdefault(key, np.zeros(grid.n_steps))[r] = value
        probes.update({k: v.copy() for k, v in histories.cycle_probes.items()})
        return HistoryRecord(
            displacements=disp,
            load_factors=self.loads[h, c],
            steps_per_cycle=grid.n_tau,
            energy={"dissipation": histories.dissipation.copy()},
            probes=probes,
            cycle_states=dict(histories.cycle_states),
            boundary_jumps=decomposition.boundary_jumps(),
            metadata={
                "solver": "pgd",
                "grid": grid.to_dict(),
                "modes": decomposition.n_modes,
                "zeta": decomposition.zetas.tolist(),
                **self.problem.metadata(),
            },
        )
