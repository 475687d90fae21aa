"""
Built-in scenarios, problem construction and the run pipelines.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

from app import config
from app.errors import ConfigError, NewtonDivergence, SolverError
from app.fem.beam import BeamSection, SoilLayerTable, SpringLayout
from app.fem.mesh import Mesh2D, plate_with_hole
from app.models.history import HistoryRecord, concatenate
from app.models.scenario import Scenario, load_scenario, parse_scenario
from app.services import storage
from app.services.compare import compare
from app.services.incremental import IncrementalSolver
from app.services.pgd import Decomposition, PgdResult, PgdSolver, TimeGrid, dof_counts
from app.services.problem import DiscreteProblem, PileProblem, PlateProblem
from app.utils import Timer, config_hash

logger = logging.getLogger(__name__)

_PLATE_MATERIAL = {"E": 205.0, "nu": 0.3, "sigma_p": 100.0, "H_iso": 1140.0, "H_kin": 21640.0, "beta": 0.4}


def _soil(E: float, sigma_p: float, H_kin: float) -> Dict[str, Any]:
    return {"E": E, "nu": 0.3, "sigma_p": sigma_p, "H_iso": 0.0, "H_kin": H_kin, "beta": 0.01}


BUILTIN_SCENARIOS: Dict[str, Dict[str, Any]] = {
    "plate-paper": {
        "name": "plate-paper",
        "description": "Perforated plate (30 x 30 mm, 6 mm hole) under cyclic top traction, -50 .. 250 N",
        "kind": "plane-strain",
        "solver": "incremental",
        "material": _PLATE_MATERIAL,
        "plate": {"width": 30.0, "height": 30.0, "radius": 6.0, "thickness": 0.2, "n_tangential": 16, "n_radial": 12},
        "load": {
            "shape": [[0.0, 1.0 / 6.0], [0.25, 1.0], [0.75, 0.0], [1.0, 1.0 / 6.0]],
            "p_min": -50.0,
            "p_max": 250.0,
            "n_tau": 101,
            "cycles": 22,
            "scales": [5, 4],
            "warmup_cycles": 2,
        },
        "pgd": {"max_modes": 3},
    },
    "monopile-paper": {
        "name": "monopile-paper",
        "description": "Monopile on three elastoplastic Winkler layers under a cyclic head load, 30 .. 130 kN",
        "kind": "winkler-beam",
        "solver": "incremental",
        "pile": {
            "length": 15.0,
            "r_outer": 1.0,
            "r_inner": 0.92,
            "E": 2.1e8,
            "n_elements": 45,
            "layers": [
                {"top": 0.0, "bottom": 5.0, "material": _soil(266.67, 2.0, 1466.7)},
                {"top": 5.0, "bottom": 10.0, "material": _soil(1000.0, 2.67, 2666.7)},
                {"top": 10.0, "bottom": 15.0, "material": _soil(1333.3, 3.33, 4666.7)},
            ],
        },
        "load": {
            "shape": [[0.0, 0.0], [0.5, 1.0], [1.0, 0.0]],
            "p_min": 30.0,
            "p_max": 130.0,
            "n_tau": 101,
            "cycles": 20002,
            "scales": [200, 100],
            "warmup_cycles": 2,
        },
        "pgd": {"max_modes": 3},
        "probe_depths": [round(float(d), 6) for d in np.linspace(0.0, 15.0, 10)],
    },
    "plate-elastic": {
        "name": "plate-elastic",
        "description": "Perforated plate, linear elastic, separable cyclic load with per-scale amplitudes",
        "kind": "plane-strain",
        "solver": "pgd",
        "material": {**_PLATE_MATERIAL, "sigma_p": 1e12, "H_iso": 0.0, "H_kin": 0.0, "beta": 0.0},
        "plate": {"thickness": 0.2, "n_tangential": 4, "n_radial": 3},
        "load": {
            "shape": [[0.0, 0.0], [0.5, 1.0], [1.0, 0.0]],
            "p_min": 0.0,
            "p_max": 100.0,
            "n_tau": 21,
            "cycles": 20,
            "scales": [5, 4],
            "scale_amplitudes": [[1.0, 0.8, 1.2, 0.9, 1.1], [1.0, 0.5, 1.5, 0.75]],
            "warmup_cycles": 0,
        },
        "pgd": {"max_modes": 1},
    },
}

# Quoted benchmark values checked whenever a built-in is loaded
SELF_CHECK: Dict[str, List[Tuple[str, float]]] = {
    "plate-paper": [
        ("material.E", 205.0),
        ("material.nu", 0.3),
        ("material.sigma_p", 100.0),
        ("material.H_iso", 1140.0),
        ("material.H_kin", 21640.0),
        ("material.beta", 0.4),
        ("plate.width", 30.0),
        ("plate.height", 30.0),
        ("plate.radius", 6.0),
        ("load.p_min", -50.0),
        ("load.p_max", 250.0),
        ("load.n_tau", 101),
    ],
    "monopile-paper": [
        ("pile.length", 15.0),
        ("pile.r_outer", 1.0),
        ("pile.r_inner", 0.92),
        ("pile.E", 2.1e8),
        ("pile.n_elements", 45),
        ("pile.layers.0.material.E", 266.67),
        ("pile.layers.0.material.sigma_p", 2.0),
        ("pile.layers.0.material.H_kin", 1466.7),
        ("pile.layers.1.material.E", 1000.0),
        ("pile.layers.1.material.sigma_p", 2.67),
        ("pile.layers.1.material.H_kin", 2666.7),
        ("pile.layers.2.material.E", 1333.3),
        ("pile.layers.2.material.sigma_p", 3.33),
        ("pile.layers.2.material.H_kin", 4666.7),
        ("pile.layers.0.material.beta", 0.01),
        ("pile.layers.1.material.beta", 0.01),
        ("pile.layers.2.material.beta", 0.01),
        ("load.p_min", 30.0),
        ("load.p_max", 130.0),
        ("load.n_tau", 101),
        ("n_dofs", 92),
    ],
}


def _lookup(scenario: Scenario, path: str) -> Any:
    if path == "n_dofs":
        return BeamSection(n_elements=scenario.pile.n_elements).n_dofs
    value: Any = scenario
    for part in path.split("."):
        value = value[int(part)] if part.isdigit() else getattr(value, part)
    return value


def self_check(scenario: Scenario) -> None:
    """Raise ConfigError if a built-in benchmark drifted from its quoted values."""
    for path, expected in SELF_CHECK.get(scenario.name, []):
        actual = _lookup(scenario, path)
        if not np.isclose(actual, expected, rtol=1e-12, atol=0.0):
            raise ConfigError(f"self-check failed: expected {expected}, found {actual}", field=path)


def builtin_names() -> List[str]:
    return sorted(BUILTIN_SCENARIOS)


def get_builtin(name: str) -> Scenario:
    if name not in BUILTIN_SCENARIOS:
        raise ConfigError(f"unknown built-in scenario '{name}' (available: {', '.join(builtin_names())})")
    scenario = parse_scenario(json.loads(json.dumps(BUILTIN_SCENARIOS[name])))
    self_check(scenario)
    return scenario


def resolve_scenario(ref: Union[str, Path]) -> Scenario:
    """A built-in name or a path to a JSON scenario file."""
    if str(ref) in BUILTIN_SCENARIOS:
        return get_builtin(str(ref))
    return load_scenario(ref)


def build_mesh(scenario: Scenario) -> Mesh2D:
    plate = scenario.plate
    if plate.mesh_file:
        return Mesh2D.load(plate.mesh_file)
    return plate_with_hole(
        width=plate.width,
        height=plate.height,
        radius=plate.radius,
        n_tangential=plate.n_tangential,
        n_radial=plate.n_radial,
        grading=plate.grading,
        jitter=plate.jitter,
        seed=scenario.seed,
    )


def build_problem(scenario: Scenario) -> DiscreteProblem:
    if scenario.kind == "plane-strain":
        return PlateProblem(build_mesh(scenario), scenario.material.to_params(), thickness=scenario.plate.thickness)
    pile = scenario.pile
    section = BeamSection(E=pile.E, r_outer=pile.r_outer, r_inner=pile.r_inner, length=pile.length, n_elements=pile.n_elements)
    layers = SoilLayerTable([(l.top, l.bottom, l.material.to_params()) for l in pile.layers])
    return PileProblem(section, SpringLayout.build(section, layers, pile.soil_modulus_factor))


def pgd_grid(scenario: Scenario) -> TimeGrid:
    load = scenario.load
    if not load.scales:
        raise ConfigError("PGD runs need a scale list", field="load.scales")
    return TimeGrid(n_tau=load.n_tau, scales=tuple(load.scales), period=load.period)


def scenario_dof_counts(scenario: Scenario, n_dofs: int, n_modes: Optional[int] = None) -> Tuple[int, int]:
    modes = scenario.pgd.max_modes if n_modes is None else n_modes
    return dof_counts(pgd_grid(scenario), n_dofs, modes)


def window_loads(scenario: Scenario) -> np.ndarray:
    """Load factors of the PGD window as an (N_tau, N_cyc) array."""
    load = scenario.load
    per_cycle = load.amplitude(np.linspace(0.0, 1.0, load.n_tau))
    return per_cycle[:, None] * load.cycle_amplitude()[None, :]


def run_incremental(scenario: Scenario, problem: DiscreteProblem) -> HistoryRecord:
    solver = IncrementalSolver(problem, scenario.incremental)
    return solver.run_history(scenario.load.step_loads(), scenario.load.n_tau)


def run_pgd(scenario: Scenario, problem: DiscreteProblem) -> Tuple[HistoryRecord, PgdResult]:
    """Incremental warm-up followed by the PGD window; histories are concatenated."""
    load = scenario.load
    grid = pgd_grid(scenario)
    n_tau, warmup = load.n_tau, load.warmup_cycles
    loads = load.step_loads()
    solver = PgdSolver(problem, grid, window_loads(scenario), scenario.pgd)

    if warmup == 0:
        result = solver.solve()
        return result.record, result

    warm_rows = (n_tau - 1) * warmup + 1
    start = warm_rows - n_tau
    g_last = np.zeros((n_tau, problem.n_dofs))

    def observe(row: int, u: np.ndarray, state) -> None:
        if row >= start:
            g_last[row - start] = problem.eigen_force(state)

    incremental = IncrementalSolver(problem, scenario.incremental)
    head = incremental.run_history(loads[:warm_rows], n_tau, observer=observe)
    logger.info(f"Warm-up of {warmup} cycles done, starting PGD window of {grid.n_cycles} cycles")

    solver.initial_state = problem.copy_state(incremental.final_state)
    seed, histories = solver.initial_guess(head.displacements[start:], g_last)
    result = solver.solve(seed=seed, histories=histories)
    return concatenate(head, result.record), result


@dataclass
class RunOutcome:
    scenario: Scenario
    out_dir: Path
    record: Optional[HistoryRecord] = None
    decomposition: Optional[Decomposition] = None
    report: Optional[Dict[str, Any]] = None
    metadata: Dict[str, Any] = field(default_factory=dict)
    status: str = "completed"
    error: Optional[str] = None


def execute(scenario: Scenario, out_dir: Union[str, Path], oracle: bool = True) -> RunOutcome:
    """Run one scenario and write its output bundle.

    PGD runs also solve the incremental oracle (unless ``oracle`` is False)
    and write the comparison report. Solver failures write whatever history
    exists, flagged incomplete, then re-raise.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    timer = Timer()
    with timer.section("setup"):
        problem = build_problem(scenario)
    meta: Dict[str, Any] = {
        "scenario": scenario.name,
        "kind": scenario.kind,
        "config_hash": config_hash(scenario.json()),
        "seed": scenario.seed,
        "quadrature": "trapezoidal small-time weights; Q4 2x2 Gauss" if scenario.kind == "plane-strain" else "trapezoidal small-time weights",
        "endpoint_convention": "cycle endpoint owned by next cycle's first node",
    }
    if scenario.load.scales:
        inc_dofs, pgd_dofs = scenario_dof_counts(scenario, problem.n_dofs)
        meta["dof_counts"] = {"incremental": inc_dofs, "pgd": pgd_dofs}
    (out / "scenario.json").write_text(scenario.json(indent=2))
    outcome = RunOutcome(scenario=scenario, out_dir=out, metadata=meta)
    logger.info(f"Running scenario '{scenario.name}' with the {scenario.solver} solver ({problem.n_dofs} dofs)")

    try:
        if scenario.solver == "incremental":
            with timer.section("incremental"):
                outcome.record = run_incremental(scenario, problem)
        else:
            with timer.section("pgd"):
                outcome.record, result = run_pgd(scenario, problem)
            outcome.decomposition = result.decomposition
            storage.save_decomposition(result.decomposition, out, json.loads(scenario.pgd.json()))
            storage.export_theta_csv(result.decomposition, out / "theta.csv")
            storage.export_zeta_csv(result.decomposition, out / "zeta.csv")
            if oracle:
                with timer.section("oracle"):
                    reference = run_incremental(scenario, problem)
                storage.save_history(reference, out / "oracle", {**meta, "timings": dict(timer.timings)})
                outcome.report = compare(reference, outcome.record, problem=problem, depths=scenario.probe_depths)
                storage.export_report_csv(outcome.report, out / "report.csv")
    except ConfigError:
        raise
    except SolverError as e:
        outcome.status = "failed"
        outcome.error = str(e)
        partial = e.partial if isinstance(e, NewtonDivergence) else None
        if partial is not None and partial.n_steps:
            storage.save_history(partial, out, {**meta, "error": str(e), "timings": timer.timings})
        else:
            storage.write_json(out / "history.json", {"schema_version": config.SCHEMA_VERSION, **meta, "complete": False, "error": str(e)})
        logger.error(f"Scenario '{scenario.name}' failed: {e}")
        raise

    meta["timings"] = dict(timer.timings)
    storage.save_history(outcome.record, out, meta)
    storage.export_trace_csv(outcome.record, out / "trace.csv")
    outcome.metadata = {**meta, **outcome.record.summary()}
    logger.info(f"Scenario '{scenario.name}' finished in {sum(timer.timings.values()):.1f} s, outputs in {out}")
    return outcome
