"""
Riemannian first-order solvers.

Gradient descent and conjugate gradient with Armijo backtracking, written
once over a small kernel interface so the same loop runs on:
- the classical backend (ManifoldPoint / TangentVector)
- the quantum-emulated backend (EncodedState for points and tangents)

Maximization problems are solved by minimizing sign * f; reports keep the
objective in the problem's natural sense.
"""

import logging
import time
from dataclasses import dataclass
from enum import Enum
from typing import Any, Callable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from qmo.errors import DegenerateStepError, UsageError
from qmo.manifolds import (
    ManifoldDescriptor,
    ManifoldPoint,
    Retraction,
    TangentVector,
    default_retraction,
    metric,
    retract,
    riemannian_grad,
    vector_transport,
)
from qmo.problems import Sense, TraceObjective
from qmo.qstate import (
    EncodedState,
    decode,
    encode_point,
    overlap_inner_product,
    quantum_project,
    quantum_retract,
    quantum_retract_normalize,
    quantum_retract_qr,
    superpose,
)

logger = logging.getLogger(__name__)

QUANTUM_POINT_TOL = 1e-10
# CG directions closer than this (cosine) to orthogonal with -g are reset to -g
CG_MIN_COSINE = 1e-2
# Interpolated trial steps are kept within this factor range of the step they refine
INTERPOLATION_BOUNDS = (1e-2, 10.0)


class Method(str, Enum):
    GRADIENT_DESCENT = "gradient_descent"
    CONJUGATE_GRADIENT = "conjugate_gradient"


class CGVariant(str, Enum):
    FLETCHER_REEVES = "fletcher_reeves"
    POLAK_RIBIERE = "polak_ribiere"


class Backend(str, Enum):
    CLASSICAL = "classical"
    QUANTUM = "quantum"


class Termination(str, Enum):
    GRAD_TOL = "grad_tol"
    MAX_ITERS = "max_iters"
    LINE_SEARCH_FAIL = "line_search_fail"


class SolverConfig(BaseModel):
    """Solver settings; `retraction=None` selects the manifold's default retraction"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    method: Method = Method.CONJUGATE_GRADIENT
    retraction: Optional[Retraction] = None
    max_iters: int = Field(500, ge=1)
    grad_tol: float = Field(1e-8, gt=0)
    armijo_c: float = Field(1e-4, gt=0, lt=1)
    backtrack_factor: float = Field(0.5, gt=0, lt=1)
    initial_step: float = Field(1.0, gt=0)
    max_backtracks: int = Field(60, ge=0)
    cg_variant: CGVariant = CGVariant.POLAK_RIBIERE
    backend: Backend = Backend.CLASSICAL
    seed: int = 0


class IterateRecord(NamedTuple):
    iter: int
    objective: float
    grad_norm: float
    step: float


@dataclass(frozen=True)
class RunReport:
    iterates: Tuple[IterateRecord, ...]
    final_point: ManifoldPoint
    termination: Termination
    wall_time: float
    sense: Sense
    backend: Backend

    @property
    def iters(self) -> int:
        """Accepted iterations (iteration 0 is the initial point)"""
        return self.iterates[-1].iter

    @property
    def objectives(self) -> List[float]:
        return [record.objective for record in self.iterates]

    @property
    def final_objective(self) -> float:
        return self.iterates[-1].objective

    @property
    def final_grad_norm(self) -> float:
        return self.iterates[-1].grad_norm


class LineSearchResult(NamedTuple):
    success: bool
    step: float
    point: Any
    value: float
    backtracks: int


def _norm_squared(direction: Any) -> float:
    if isinstance(direction, EncodedState):
        return direction.scale**2
    return metric(direction, direction)


def line_search(
    point: Any,
    direction: Any,
    objective_fn: Callable[[Any], float],
    retraction: Callable[[Any, Any, float], Any],
    config: SolverConfig,
    *,
    slope: Optional[float] = None,
    f0: Optional[float] = None,
) -> LineSearchResult:
    """
    Armijo backtracking along t -> retraction(point, direction, t).

    Tries t = initial_step * backtrack_factor^m for m = 0..max_backtracks.
    Each trial is paired with the minimizer of the parabola through f0, the
    slope and f(t); the lower of the two that satisfies f(new) <= f0 - c t slope
    and f(new) < f0 is accepted. `slope` is the descent rate <-grad, direction>,
    ||direction||^2 by default (steepest descent). `objective_fn` is minimized.
    """
    if slope is None:
        slope = _norm_squared(direction)
    if f0 is None:
        f0 = objective_fn(point)

    def trial(t: float) -> Tuple[float, Optional[Any]]:
        """(value, candidate); candidate is None unless Armijo and strict decrease hold"""
        try:
            candidate = retraction(point, direction, t)
        except DegenerateStepError as e:
            logger.debug(f"trial step t={t:.3e} rejected: {e}")
            return float("nan"), None
        value = objective_fn(candidate)
        if np.isfinite(value) and value <= f0 - config.armijo_c * t * slope and value < f0:
            return value, candidate
        return value, None

    for m in range(config.max_backtracks + 1):
        t = config.initial_step * config.backtrack_factor**m
        value, candidate = trial(t)
        accepted = [] if candidate is None else [(value, t, candidate)]

        t_quad = _interpolated_step(t, value, f0, slope)
        if t_quad is not None:
            quad_value, quad_candidate = trial(t_quad)
            if quad_candidate is not None:
                accepted.append((quad_value, t_quad, quad_candidate))

        if accepted:
            value, t, candidate = min(accepted, key=lambda entry: entry[0])
            return LineSearchResult(True, t, candidate, value, m)

    logger.debug(f"no Armijo step after {config.max_backtracks} halvings (f0={f0:.16e}, slope={slope:.3e})")
    return LineSearchResult(False, 0.0, point, f0, config.max_backtracks)


def _interpolated_step(t: float, value: float, f0: float, slope: float) -> Optional[float]:
    """Minimizer of q(s) = f0 - slope s + a s^2 fitted through q(t) = value, if convex and in range"""
    if slope <= 0 or not np.isfinite(value):
        return None
    curvature = value - f0 + slope * t
    if curvature <= 0:
        return None
    t_quad = slope * t * t / (2.0 * curvature)
    low, high = INTERPOLATION_BOUNDS
    if not low * t <= t_quad <= high * t or t_quad == t:
        return None
    return t_quad


class _ClassicalAlgebra:
    """Tangent arithmetic on TangentVector"""

    @staticmethod
    def inner(a: TangentVector, b: TangentVector) -> float:
        return metric(a, b)

    @staticmethod
    def combine(terms: Sequence[Tuple[float, TangentVector]]) -> TangentVector:
        coefficient, vector = terms[0]
        out = coefficient * vector
        for coefficient, vector in terms[1:]:
            out = out + coefficient * vector
        return out


class _QuantumAlgebra:
    """Tangent arithmetic on encoded states: overlaps and superpositions"""

    @staticmethod
    def inner(a: EncodedState, b: EncodedState) -> float:
        return overlap_inner_product(a, b)

    @staticmethod
    def combine(terms: Sequence[Tuple[float, EncodedState]]) -> EncodedState:
        return superpose(terms)


def cg_direction(
    g_new: Any,
    g_old_transported: Optional[Any],
    dir_old_transported: Optional[Any],
    variant: CGVariant,
    algebra: Any = _ClassicalAlgebra,
) -> Any:
    """
    Conjugate direction -g_new + beta * dir_old.

    FR: beta = ||g_new||^2 / ||g_old||^2
    PR+: beta = max(0, <g_new, g_new - g_old> / ||g_old||^2)
    Restarts to -g_new without history, or when the result makes a cosine
    below CG_MIN_COSINE with -g_new.
    """
    steepest = algebra.combine([(-1.0, g_new)])
    if g_old_transported is None or dir_old_transported is None:
        return steepest

    g_old_sq = algebra.inner(g_old_transported, g_old_transported)
    if g_old_sq <= 0.0:
        return steepest
    g_new_sq = algebra.inner(g_new, g_new)
    if CGVariant(variant) is CGVariant.FLETCHER_REEVES:
        beta = g_new_sq / g_old_sq
    else:
        beta = max(0.0, (g_new_sq - algebra.inner(g_new, g_old_transported)) / g_old_sq)
    if beta == 0.0:
        return steepest

    direction = algebra.combine([(-1.0, g_new), (beta, dir_old_transported)])
    descent = -algebra.inner(direction, g_new)
    if descent <= CG_MIN_COSINE * np.sqrt(algebra.inner(direction, direction) * g_new_sq):
        logger.debug(f"CG direction lost sufficient descent (beta={beta:.3e}, rate={descent:.3e}), restarting")
        return steepest
    return direction


class _ClassicalKernel(_ClassicalAlgebra):
    def __init__(self, problem: TraceObjective, retraction: Retraction):
        self.problem = problem
        self.retraction = retraction
        self.sign = problem.sense.sign

    def start(self, init: ManifoldPoint) -> ManifoldPoint:
        return init

    def value(self, x: ManifoldPoint) -> float:
        return self.problem.objective(x)

    def gradient(self, x: ManifoldPoint) -> TangentVector:
        return riemannian_grad(x, self.sign * self.problem.egrad(x))

    def norm(self, v: TangentVector) -> float:
        return v.norm()

    def retract(self, x: ManifoldPoint, v: TangentVector, t: float) -> ManifoldPoint:
        return retract(x, v, t, self.retraction)

    def transport(self, source: ManifoldPoint, target: ManifoldPoint, v: TangentVector) -> TangentVector:
        return vector_transport(source, target, v)

    def point(self, x: ManifoldPoint) -> ManifoldPoint:
        return x


class _QuantumKernel(_QuantumAlgebra):
    """
    Points and tangents are encoded states. Objectives and gradients come
    from expectation values and index-register operators, projection and
    retraction from their qstate counterparts.
    """

    def __init__(self, problem: TraceObjective, retraction: Retraction):
        self.problem = problem
        self.retraction = retraction
        self.sign = problem.sense.sign
        self.descriptor: ManifoldDescriptor = problem.manifold

    def start(self, init: ManifoldPoint) -> EncodedState:
        return encode_point(init)

    def value(self, x: EncodedState) -> float:
        return self.problem.objective_quantum(x)

    def gradient(self, x: EncodedState) -> EncodedState:
        projected = quantum_project(x, self.problem.egrad_quantum(x), self.descriptor.kind)
        return superpose([(self.sign, projected)])

    def norm(self, v: EncodedState) -> float:
        return v.scale

    def retract(self, x: EncodedState, v: EncodedState, t: float) -> EncodedState:
        if t == 0 or v.is_sentinel:
            return x
        if self.retraction is Retraction.QR:
            return quantum_retract_qr(x, v, t)
        if self.retraction is Retraction.NORMALIZE:
            return quantum_retract_normalize(x, v, t)
        anchor = self.point(x)
        return quantum_retract(x, TangentVector(anchor, decode(v)), t)

    def transport(self, source: EncodedState, target: EncodedState, v: EncodedState) -> EncodedState:
        return quantum_project(target, v, self.descriptor.kind)

    def point(self, x: EncodedState) -> ManifoldPoint:
        return ManifoldPoint(self.descriptor, decode(x), tol=QUANTUM_POINT_TOL)


def _check_retraction(descriptor: ManifoldDescriptor, retraction: Retraction) -> None:
    column_normalized = descriptor.kind.column_normalized
    if column_normalized == (retraction is Retraction.QR):
        raise UsageError(f"{retraction.value} retraction does not apply to {descriptor.kind.value} manifolds")


def solve(
    problem: TraceObjective,
    init: ManifoldPoint,
    config: SolverConfig,
    callback: Optional[Callable[[int, ManifoldPoint], None]] = None,
) -> RunReport:
    """
    Run gradient descent or conjugate gradient from `init`.

    Never raises for optimization failure: an exhausted line search (after one
    retry along -grad when CG was in use) ends the run with LINE_SEARCH_FAIL.
    `callback(iter, point)` is called after every accepted step.
    """
    started = time.perf_counter()
    descriptor = problem.manifold
    if init.descriptor != descriptor:
        raise UsageError(f"initial point lives on {init.descriptor}, problem expects {descriptor}")
    retraction = config.retraction or default_retraction(descriptor.kind)
    _check_retraction(descriptor, retraction)

    kernel_cls = _QuantumKernel if config.backend is Backend.QUANTUM else _ClassicalKernel
    kernel = kernel_cls(problem, retraction)
    sign = kernel.sign
    use_cg = config.method is Method.CONJUGATE_GRADIENT

    def objective_fn(x: Any) -> float:
        return sign * kernel.value(x)

    x = kernel.start(init)
    f = kernel.value(x)
    g = kernel.gradient(x)
    g_norm = kernel.norm(g)
    records = [IterateRecord(0, f, g_norm, 0.0)]
    g_old_t = dir_old_t = None

    logger.info(
        f"solve: {type(problem).__name__} on {descriptor.kind.value}({descriptor.n}x{descriptor.d}), "
        f"{config.method.value}, {config.backend.value} backend, {retraction.value} retraction"
    )

    termination = Termination.MAX_ITERS
    for it in range(1, config.max_iters + 1):
        if g_norm <= config.grad_tol:
            termination = Termination.GRAD_TOL
            break

        if use_cg:
            direction = cg_direction(g, g_old_t, dir_old_t, config.cg_variant, kernel)
        else:
            direction = kernel.combine([(-1.0, g)])
        slope = -kernel.inner(g, direction)

        result = line_search(x, direction, objective_fn, kernel.retract, config, slope=slope, f0=sign * f)
        if not result.success and use_cg and dir_old_t is not None:
            logger.debug(f"CG line search failed at iteration {it}, retrying along -grad")
            direction = kernel.combine([(-1.0, g)])
            slope = kernel.inner(g, g)
            result = line_search(x, direction, objective_fn, kernel.retract, config, slope=slope, f0=sign * f)
        if not result.success:
            termination = Termination.LINE_SEARCH_FAIL
            logger.warning(f"line search failed at iteration {it} (objective {f:.16e}, grad norm {g_norm:.3e})")
            break

        x_new = result.point
        g_new = kernel.gradient(x_new)
        if use_cg:
            g_old_t = kernel.transport(x, x_new, g)
            dir_old_t = kernel.transport(x, x_new, direction)

        x, g = x_new, g_new
        f = sign * result.value
        g_norm = kernel.norm(g)
        records.append(IterateRecord(it, f, g_norm, result.step))
        logger.debug(f"iter {it}: objective={f:.16e} grad_norm={g_norm:.3e} step={result.step:.3e}")
        if callback is not None:
            callback(it, kernel.point(x))
    else:
        if g_norm <= config.grad_tol:
            termination = Termination.GRAD_TOL

    wall_time = time.perf_counter() - started
    logger.info(f"solve finished: {termination.value} after {records[-1].iter} iterations, objective {f:.12g}")
    return RunReport(
        iterates=tuple(records),
        final_point=kernel.point(x),
        termination=termination,
        wall_time=wall_time,
        sense=problem.sense,
        backend=config.backend,
    )
