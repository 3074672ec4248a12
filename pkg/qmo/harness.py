"""
Command-line harness.

Subcommands:
- run: solve one configured problem, write result.json and trace.csv
  (plus state.json with the encoded final state on the quantum backend)
- compare: solve on both backends, write compare.json
- validate: run the built-in invariant suite and print a pass/fail table
- batch: run several configs concurrently, each into its own directory

Exit codes: 0 clean, 1 configuration error or failed comparison/validation,
2 line search failure.
"""

import argparse
import asyncio
import csv
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from qmo.checks import DEFAULT_INSTANCES, format_table, run_suite
from qmo.config import RunConfig, WarmStart, load_run_config, resolve_output_dir, settings
from qmo.errors import ConfigError, QMOError
from qmo.manifolds import ManifoldPoint, random_point
from qmo.optim import Backend, RunReport, Termination, solve
from qmo.problems import PilotProblem, TraceObjective, generate_scenario, pilot_objective_direct, pilot_objective_trace
from qmo.qstate import RegisterShape, decode, encode_point, prepare_uniform, state_records

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_LINE_SEARCH_FAIL = 2

TRACE_HEADER = ("iter", "objective", "grad_norm", "step")
BACKEND_GAP_TOL = 1e-8
ORACLE_GAP_TOL = 1e-6
OFFSET_IDENTITY_TOL = 1e-10


class RunResult(BaseModel):
    """Document written as result.json"""

    model_config = ConfigDict(extra="forbid")

    objective: float
    termination: Termination
    iters: int
    wall_time_s: float
    final_point: List[List[List[float]]]


class StateResult(BaseModel):
    """Document written as state.json by quantum-backend runs: the final encoded state"""

    model_config = ConfigDict(extra="forbid")

    amplitudes: List[Tuple[int, float, float]]
    scale: float


class ComparisonReport(BaseModel):
    """Document written as compare.json; serialized with `pass` for `passed`"""

    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    problem: str
    objective_gap: List[float]
    max_abs_gap: float
    oracle_gap: Optional[float] = None
    initial_objective: float
    final_objective: Dict[str, float]
    terminations: Dict[str, Termination]
    offset_identity_gap: Optional[float] = None
    decreased: Optional[bool] = None
    passed: bool = Field(alias="pass")


def matrix_records(X: np.ndarray) -> List[List[List[float]]]:
    """Row-major nested [re, im] pairs"""
    return [[[float(z.real), float(z.imag)] for z in row] for row in np.asarray(X)]


def build_problem(config: RunConfig) -> TraceObjective:
    return generate_scenario(config.problem, config.dims, config.seed)


def initial_point(problem: TraceObjective, config: RunConfig) -> ManifoldPoint:
    """Seeded random point, or the Hadamard-prepared uniform state with unit columns"""
    descriptor = problem.manifold
    if config.warm_start is WarmStart.UNIFORM:
        X = decode(prepare_uniform(RegisterShape(descriptor.n, descriptor.d)))
        return ManifoldPoint(descriptor, X / np.linalg.norm(X, axis=0))
    return random_point(descriptor, config.solver.seed)


def exit_code_for(report: RunReport) -> int:
    return EXIT_LINE_SEARCH_FAIL if report.termination is Termination.LINE_SEARCH_FAIL else EXIT_OK


def write_trace(report: RunReport, path: Path) -> None:
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(TRACE_HEADER)
        for record in report.iterates:
            writer.writerow(
                [record.iter, f"{record.objective:.16e}", f"{record.grad_norm:.16e}", f"{record.step:.16e}"]
            )


def write_result(report: RunReport, path: Path) -> RunResult:
    result = RunResult(
        objective=report.final_objective,
        termination=report.termination,
        iters=report.iters,
        wall_time_s=report.wall_time,
        final_point=matrix_records(report.final_point.X),
    )
    path.write_text(result.model_dump_json(indent=2), encoding="utf-8")
    return result


def write_state(report: RunReport, path: Path) -> StateResult:
    state = StateResult(**state_records(encode_point(report.final_point)))
    path.write_text(state.model_dump_json(indent=2), encoding="utf-8")
    return state


def cmd_run(
    config_path: str,
    *,
    output_dir: Optional[str] = None,
    seed: Optional[int] = None,
    backend: Optional[str] = None,
) -> int:
    """Solve one configuration; exit 0 clean, 1 config error, 2 line search failure"""
    try:
        config = load_run_config(config_path, seed=seed, backend=backend, output_dir=output_dir)
    except ConfigError as e:
        logger.error(f"config rejected: {e.message}")
        print(e.diagnostic, file=sys.stderr)
        return EXIT_FAILURE

    problem = build_problem(config)
    report = solve(problem, initial_point(problem, config), config.solver)

    out = resolve_output_dir(config)
    out.mkdir(parents=True, exist_ok=True)
    write_result(report, out / "result.json")
    logger.info(f"wrote {out / 'result.json'}")
    if config.emit_trace:
        write_trace(report, out / "trace.csv")
        logger.info(f"wrote {out / 'trace.csv'}")
    if report.backend is Backend.QUANTUM:
        write_state(report, out / "state.json")
        logger.info(f"wrote {out / 'state.json'}")

    print(
        f"{config.problem.value}: {report.termination.value} after {report.iters} iterations, "
        f"objective {report.final_objective:.12g} ({report.wall_time:.3f}s)"
    )
    return exit_code_for(report)


def _padded(values: Sequence[float], length: int) -> np.ndarray:
    out = np.asarray(values, dtype=np.float64)
    return np.concatenate([out, np.full(length - out.size, out[-1])])


def compare_reports(
    problem: TraceObjective,
    classical: RunReport,
    quantum: RunReport,
    problem_name: str,
) -> ComparisonReport:
    """
    Per-iteration objective gaps between two runs of the same problem.

    Traces of unequal length are compared after padding the shorter one with
    its final value.
    """
    length = max(len(classical.iterates), len(quantum.iterates))
    gaps = np.abs(_padded(classical.objectives, length) - _padded(quantum.objectives, length))
    max_abs_gap = float(np.max(gaps))
    passed = max_abs_gap <= BACKEND_GAP_TOL

    oracle_gap = None
    optimum = problem.optimum()
    if optimum is not None:
        finals = (classical.final_objective, quantum.final_objective)
        oracle_gap = max(abs(value - optimum) for value in finals) / max(abs(optimum), np.finfo(float).tiny)
        passed = passed and oracle_gap <= ORACLE_GAP_TOL

    offset_gap = decreased = None
    if isinstance(problem, PilotProblem):
        constant = float(problem.beta.sum())
        offset_gap = max(
            abs(pilot_objective_trace(problem, report.final_point) - pilot_objective_direct(problem, report.final_point) - constant)
            for report in (classical, quantum)
        )
        decreased = all(report.final_objective < report.iterates[0].objective for report in (classical, quantum))
        passed = passed and offset_gap <= OFFSET_IDENTITY_TOL and decreased

    return ComparisonReport(
        problem=problem_name,
        objective_gap=gaps.tolist(),
        max_abs_gap=max_abs_gap,
        oracle_gap=oracle_gap,
        initial_objective=classical.iterates[0].objective,
        final_objective={Backend.CLASSICAL.value: classical.final_objective, Backend.QUANTUM.value: quantum.final_objective},
        terminations={Backend.CLASSICAL.value: classical.termination, Backend.QUANTUM.value: quantum.termination},
        offset_identity_gap=offset_gap,
        decreased=decreased,
        passed=passed,
    )


def cmd_compare(config_path: str, *, output_dir: Optional[str] = None, seed: Optional[int] = None) -> int:
    """Run the same problem on both backends; exit 0 iff the comparison passes"""
    try:
        config = load_run_config(config_path, seed=seed, output_dir=output_dir)
    except ConfigError as e:
        logger.error(f"config rejected: {e.message}")
        print(e.diagnostic, file=sys.stderr)
        return EXIT_FAILURE

    problem = build_problem(config)
    init = initial_point(problem, config)
    reports = {
        backend: solve(problem, init, config.solver.model_copy(update={"backend": backend}))
        for backend in (Backend.CLASSICAL, Backend.QUANTUM)
    }
    comparison = compare_reports(problem, reports[Backend.CLASSICAL], reports[Backend.QUANTUM], config.problem.value)

    out = resolve_output_dir(config)
    out.mkdir(parents=True, exist_ok=True)
    (out / "compare.json").write_text(comparison.model_dump_json(indent=2, by_alias=True), encoding="utf-8")
    logger.info(f"wrote {out / 'compare.json'}")

    status = "PASS" if comparison.passed else "FAIL"
    print(f"{config.problem.value}: max backend gap {comparison.max_abs_gap:.3e}, oracle gap {comparison.oracle_gap} [{status}]")
    return EXIT_OK if comparison.passed else EXIT_FAILURE


def cmd_validate(*, instances: int = DEFAULT_INSTANCES, tolerance_scale: float = 1.0, seed: int = 0) -> int:
    """Run the invariant suite, print the table, exit 0 iff every check passes"""
    results = run_suite(instances=instances, tolerance_scale=tolerance_scale, seed=seed)
    print(format_table(results))
    failed = [r for r in results if not r.passed]
    logger.info(f"validate: {len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_OK if not failed else EXIT_FAILURE


async def _run_one(
    semaphore: asyncio.Semaphore,
    config_path: str,
    output_dir: Path,
    seed: Optional[int],
    backend: Optional[str],
) -> int:
    async with semaphore:
        run_dir = output_dir / Path(config_path).stem
        logger.info(f"batch: starting {config_path} -> {run_dir}")
        return await asyncio.to_thread(cmd_run, config_path, output_dir=str(run_dir), seed=seed, backend=backend)


async def run_batch(
    config_paths: Sequence[str],
    output_dir: Path,
    concurrency: int,
    seed: Optional[int] = None,
    backend: Optional[str] = None,
) -> List[int]:
    semaphore = asyncio.Semaphore(concurrency)
    tasks = [_run_one(semaphore, path, output_dir, seed, backend) for path in config_paths]
    results = await asyncio.gather(*tasks, return_exceptions=True)

    codes = []
    for path, result in zip(config_paths, results):
        if isinstance(result, Exception):
            logger.error(f"batch: {path} raised {type(result).__name__}: {result}")
            codes.append(EXIT_FAILURE)
        else:
            codes.append(result)
    return codes


def cmd_batch(
    config_paths: Sequence[str],
    *,
    output_dir: Optional[str] = None,
    concurrency: Optional[int] = None,
    seed: Optional[int] = None,
    backend: Optional[str] = None,
) -> int:
    """Run configs concurrently into <output-dir>/<config stem>/; exit code is the worst run's"""
    root = Path(output_dir) if output_dir is not None else settings.output_dir
    concurrency = concurrency or settings.batch_concurrency
    codes = asyncio.run(run_batch(config_paths, root, concurrency, seed, backend))
    for path, code in zip(config_paths, codes):
        print(f"{path}: exit {code}")
    return max(codes, default=EXIT_OK)


def create_argument_parser() -> argparse.ArgumentParser:
    """Create and configure the command-line argument parser."""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", help="Enable debug logging")

    run_options = argparse.ArgumentParser(add_help=False)
    run_options.add_argument("--output-dir", type=str, default=None, help="Directory for result files")
    run_options.add_argument("--seed", type=int, default=None, help="Override scenario and solver seeds")

    parser = argparse.ArgumentParser(
        prog="qmo",
        description="Riemannian manifold optimization with classical and statevector-emulated backends",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  %(prog)s run configs/beamforming.json --output-dir results/bf
  %(prog)s compare configs/ris.json --seed 3
  %(prog)s validate
  %(prog)s batch configs/*.json --concurrency 4
        """,
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    run = subparsers.add_parser("run", parents=[common, run_options], help="Solve one configuration")
    run.add_argument("config", help="Path to a run configuration (JSON)")
    run.add_argument("--backend", choices=[b.value for b in Backend], default=None, help="Override the solver backend")

    compare = subparsers.add_parser("compare", parents=[common, run_options], help="Compare classical and quantum backends")
    compare.add_argument("config", help="Path to a run configuration (JSON)")

    validate = subparsers.add_parser("validate", parents=[common], help="Run the invariant suite")
    validate.add_argument(
        "--instances",
        type=int,
        default=DEFAULT_INSTANCES,
        help="Random instances per check and size (default: %(default)s)",
    )
    validate.add_argument("--tolerance-scale", type=float, default=1.0, help=argparse.SUPPRESS)

    batch = subparsers.add_parser("batch", parents=[common, run_options], help="Run several configurations concurrently")
    batch.add_argument("configs", nargs="+", help="Run configuration files")
    batch.add_argument("--backend", choices=[b.value for b in Backend], default=None, help="Override the solver backend")
    batch.add_argument(
        "-c",
        "--concurrency",
        type=int,
        default=None,
        help="Maximum concurrent runs (default: QMO_BATCH_CONCURRENCY)",
    )

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = create_argument_parser()
    args = parser.parse_args(argv)

    level = logging.DEBUG if args.verbose else getattr(logging, settings.log_level, logging.INFO)
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")

    try:
        if args.command == "run":
            return cmd_run(args.config, output_dir=args.output_dir, seed=args.seed, backend=args.backend)
        if args.command == "compare":
            return cmd_compare(args.config, output_dir=args.output_dir, seed=args.seed)
        if args.command == "validate":
            return cmd_validate(instances=args.instances, tolerance_scale=args.tolerance_scale)
        if args.concurrency is not None and args.concurrency < 1:
            parser.error("concurrency must be positive")
        return cmd_batch(
            args.configs,
            output_dir=args.output_dir,
            concurrency=args.concurrency,
            seed=args.seed,
            backend=args.backend,
        )
    except QMOError as e:
        logger.error(f"{type(e).__name__}: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAILURE
