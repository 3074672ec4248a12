"""
Settings and run configuration.

QMOSettings reads process-wide defaults from the environment; RunConfig is
the validated JSON document describing one optimization run.
"""

import json
import logging
import os
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, ValidationInfo, field_validator

from qmo.errors import ConfigError, DimensionError
from qmo.optim import Backend, SolverConfig
from qmo.problems import ProblemKind, validate_dims

logger = logging.getLogger(__name__)


class QMOSettings:
    def __init__(self):
        self.log_level = os.getenv("QMO_LOG_LEVEL", "INFO").upper()
        self.output_dir = Path(os.getenv("QMO_OUTPUT_DIR", "results"))
        self.batch_concurrency = int(os.getenv("QMO_BATCH_CONCURRENCY", "4"))


settings = QMOSettings()


class WarmStart(str, Enum):
    RANDOM = "random"
    UNIFORM = "uniform"


# Problems whose manifold is column-normalized (oblique, torus)
UNIFORM_CAPABLE = (ProblemKind.PILOT, ProblemKind.RIS)


class RunConfig(BaseModel):
    """One run: scenario (problem, dims, seed) plus solver settings"""

    model_config = ConfigDict(extra="forbid")

    problem: ProblemKind
    dims: Dict[str, int]
    seed: int = 0
    solver: SolverConfig = Field(default_factory=SolverConfig)
    output_dir: Optional[Path] = None
    emit_trace: bool = True
    warm_start: WarmStart = WarmStart.RANDOM

    @field_validator("dims")
    @classmethod
    def _dims_fit_problem(cls, dims: Dict[str, int], info: ValidationInfo) -> Dict[str, int]:
        problem = info.data.get("problem")
        if problem is None:
            return dims
        try:
            return validate_dims(problem, dims)
        except DimensionError as e:
            raise ValueError(str(e)) from e

    @field_validator("warm_start")
    @classmethod
    def _uniform_needs_unit_columns(cls, warm_start: WarmStart, info: ValidationInfo) -> WarmStart:
        problem = info.data.get("problem")
        if warm_start is WarmStart.UNIFORM and problem is not None and problem not in UNIFORM_CAPABLE:
            raise ValueError(f"uniform warm start needs an oblique or torus problem, got {problem.value}")
        return warm_start


def _line_of(text: str, path: Sequence[Union[str, int]]) -> int:
    """Best-effort line of the JSON key addressed by a validation error path"""
    position = 0
    found = False
    for key in path:
        if not isinstance(key, str):
            continue
        index = text.find(f'"{key}"', position)
        if index < 0:
            break
        position, found = index, True
    return text.count("\n", 0, position) + 1 if found else 1


def parse_run_config(text: str, source: Optional[str] = None) -> RunConfig:
    try:
        document = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid JSON: {e.msg}", source, e.lineno) from e
    if not isinstance(document, dict):
        raise ConfigError("config must be a JSON object", source, 1)

    try:
        return RunConfig.model_validate(document)
    except ValidationError as e:
        first = e.errors()[0]
        path = tuple(first["loc"])
        where = ".".join(str(key) for key in path) or "config"
        message = first["msg"]
        if first["type"] == "missing":
            message = f"missing required key '{path[-1]}'"
        raise ConfigError(f"{where}: {message}", source, _line_of(text, path)) from e


def load_run_config(
    path: Union[str, Path],
    *,
    seed: Optional[int] = None,
    backend: Optional[Union[str, Backend]] = None,
    output_dir: Optional[Union[str, Path]] = None,
) -> RunConfig:
    """
    Read and validate a run configuration file.

    `seed` overrides both the scenario seed and the solver seed, `backend`
    the solver backend and `output_dir` the configured output directory.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config: {e.strerror or e}", str(path)) from e

    config = parse_run_config(text, str(path))
    solver_updates: Dict[str, Any] = {}
    updates: Dict[str, Any] = {}
    if seed is not None:
        solver_updates["seed"] = seed
        updates["seed"] = seed
    if backend is not None:
        solver_updates["backend"] = Backend(backend)
    if solver_updates:
        updates["solver"] = config.solver.model_copy(update=solver_updates)
    if output_dir is not None:
        updates["output_dir"] = Path(output_dir)
    if updates:
        config = config.model_copy(update=updates)

    logger.debug(f"loaded {path}: problem={config.problem.value} dims={config.dims} seed={config.seed}")
    return config


def resolve_output_dir(config: RunConfig) -> Path:
    return config.output_dir if config.output_dir is not None else settings.output_dir
