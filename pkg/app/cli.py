"""
Command-line interface: run, compare, export, validate, serve.

Exit codes: 0 success, 2 invalid configuration, 3 solver failure,
4 comparison of mismatched histories.
"""

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional, Sequence

from app import config
from app.errors import ConfigError, InvalidInput, SolverError
from app.utils import config_hash, setup_logging

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_MISMATCH = 4


def _int_list(text: str) -> List[int]:
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got '{text}'")
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--verbose", "-v", action="store_true", help="debug logging")
    common.add_argument("--threads", type=int, default=None, help="BLAS threads")
    parser = argparse.ArgumentParser(prog="ratchet", description=config.APP_DESCRIPTION)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", parents=[common], help="solve a scenario and write its output bundle")
    run.add_argument("--scenario", required=True, help="built-in name or path to a JSON scenario")
    run.add_argument("--solver", choices=("incremental", "pgd"))
    run.add_argument("--modes", type=int)
    run.add_argument("--cycles", type=int)
    run.add_argument("--scales", type=_int_list)
    run.add_argument("--warmup", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--out", type=Path)
    run.add_argument("--no-oracle", action="store_true", help="skip the incremental reference of PGD runs")
    run.add_argument("--no-catalog", action="store_true", help="do not record the run in the catalog")

    cmp_ = sub.add_parser("compare", parents=[common], help="error report of history B against reference A")
    cmp_.add_argument("reference", type=Path)
    cmp_.add_argument("other", type=Path)
    cmp_.add_argument("--selection", help="probe name or comma-separated dof indices")
    cmp_.add_argument("--out", type=Path, help="CSV report path")

    export = sub.add_parser("export", parents=[common], help="write CSV traces of a history bundle")
    export.add_argument("bundle", type=Path)
    export.add_argument("--columns", help="comma-separated trace columns")
    export.add_argument("--dofs", type=_int_list, help="dof indices to export")
    export.add_argument("--out", type=Path, required=True)

    validate = sub.add_parser("validate", parents=[common], help="parse and validate a scenario")
    validate.add_argument("--scenario", required=True)

    serve = sub.add_parser("serve", parents=[common], help="start the results service")
    serve.add_argument("--host", default="0.0.0.0")
    serve.add_argument("--port", type=int, default=8000)
    serve.add_argument("--reload", action="store_true")
    return parser


def _scenario_from_args(args):
    from app.services.scenarios import resolve_scenario

    scenario = resolve_scenario(args.scenario)
    overrides = {k: getattr(args, k, None) for k in ("solver", "seed", "modes", "warmup", "scales", "cycles")}
    if any(v is not None for v in overrides.values()):
        scenario = scenario.with_overrides(**overrides)
    return scenario


def cmd_run(args) -> int:
    from app.database import db_manager, init_database
    from app.services.scenarios import execute

    scenario = _scenario_from_args(args)
    digest = config_hash(scenario.json())
    out = args.out or config.OUTPUT_DIR / f"{scenario.name}_{scenario.solver}_{digest[:10]}"
    run_id = None
    if not args.no_catalog:
        init_database()
        run_id = db_manager.add_run(
            {
                "scenario": scenario.name,
                "kind": scenario.kind,
                "solver": scenario.solver,
                "modes": scenario.pgd.max_modes if scenario.solver == "pgd" else None,
                "cycles": scenario.load.cycles,
                "status": "running",
                "config_hash": digest,
                "output_path": str(out),
            }
        )["id"]
    try:
        outcome = execute(scenario, out, oracle=not args.no_oracle)
    except ConfigError as e:
        logger.error(f"Invalid configuration: {e}")
        if run_id is not None:
            db_manager.update_run(run_id, {"status": "failed", "error": str(e)})
        print(f"invalid configuration: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as e:
        logger.error(f"Run failed: {e}")
        if run_id is not None:
            db_manager.update_run(run_id, {"status": "failed", "error": str(e)})
        return EXIT_SOLVER

    if run_id is not None:
        summary = {k: v for k, v in outcome.metadata.items() if k.startswith(("final_", "mean_", "n_"))}
        if outcome.report is not None:
            summary["relative_l2"] = outcome.report["displacement"]["relative_l2"]
        if outcome.decomposition is not None:
            summary["zeta"] = outcome.decomposition.zetas.tolist()
        db_manager.update_run(
            run_id,
            {
                "status": outcome.status,
                "dof_counts": outcome.metadata.get("dof_counts", {}),
                "wall_time": float(sum(outcome.metadata.get("timings", {}).values())),
                "summary": summary,
                "modes": outcome.decomposition.n_modes if outcome.decomposition is not None else None,
            },
        )
    print(f"outputs written to {out}")
    if outcome.report is not None:
        print(f"relative L2 error vs incremental: {outcome.report['displacement']['relative_l2']:.4e}")
    return EXIT_OK


def cmd_compare(args) -> int:
    from app.services import storage
    from app.services.compare import compare

    selection = None
    if args.selection:
        selection = _int_list(args.selection) if args.selection.replace(",", "").isdigit() else args.selection
    try:
        report = compare(storage.load_history(args.reference), storage.load_history(args.other), selection)
    except InvalidInput as e:
        logger.error(f"Cannot compare: {e}")
        return EXIT_MISMATCH
    if args.out:
        storage.export_report_csv(report, args.out)
    print(json.dumps({k: v for k, v in report.items() if k in ("selection", "displacement", "dissipation")}, indent=2))
    return EXIT_OK


def cmd_export(args) -> int:
    from app.services import storage

    record = storage.load_history(args.bundle)
    if args.dofs:
        storage.export_dofs_csv(record, args.out, args.dofs)
    else:
        columns = [c.strip() for c in args.columns.split(",")] if args.columns else None
        storage.export_trace_csv(record, args.out, columns)
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_validate(args) -> int:
    from app.services.scenarios import resolve_scenario

    scenario = resolve_scenario(args.scenario)
    print(f"scenario '{scenario.name}' is valid ({scenario.kind}, {scenario.load.cycles} cycles)")
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    uvicorn.run("app.main:app", host=args.host, port=args.port, reload=args.reload, log_level="info")
    return EXIT_OK


COMMANDS = {
    "run": cmd_run,
    "compare": cmd_compare,
    "export": cmd_export,
    "validate": cmd_validate,
    "serve": cmd_serve,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging("DEBUG" if args.verbose else None)
    # BLAS pools are pinned by run.py before numpy loads
    if args.threads and os.environ.get("OMP_NUM_THREADS") != str(args.threads):
        logger.warning(f"--threads {args.threads} ignored: thread pools were sized before the CLI started")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as e:
        logger.error(f"Invalid configuration: {e}")
        print(f"invalid configuration: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except InvalidInput as e:
        logger.error(f"Invalid input: {e}")
        print(f"invalid input: {e}", file=sys.stderr)
        return EXIT_MISMATCH if args.command == "compare" else EXIT_SOLVER
    except SolverError as e:
        logger.error(f"Solver failure: {e}")
        return EXIT_SOLVER
