"""
Built-in invariant suite behind the `validate` command.

Every check draws random instances, measures the worst deviation from an
identity or oracle and compares it with a fixed tolerance. Geometry and
encoding checks run over the standard size grid; problem checks run on a
fixed set of scenario dimensions.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from qmo.manifolds import (
    ManifoldDescriptor,
    ManifoldKind,
    ManifoldPoint,
    Retraction,
    TangentVector,
    membership_residual,
    metric,
    project_tangent,
    random_point,
    retract,
    skew_generator,
)
from qmo.problems import (
    BeamformingProblem,
    EigenstateProblem,
    PilotProblem,
    ProblemKind,
    RisProblem,
    TraceObjective,
    generate_scenario,
    pilot_objective_direct,
    pilot_objective_quantum,
    pilot_objective_trace,
    pilot_quartic,
    ris_objective,
    ris_objective_trace,
)
from qmo.qstate import (
    IndexedOperator,
    ceil_log2,
    decode,
    encode,
    expectation,
    overlap_inner_product,
    quantum_project,
    quantum_retract,
    quantum_retract_normalize,
    quantum_retract_qr,
)

logger = logging.getLogger(__name__)

STANDARD_SIZES: Tuple[Tuple[int, int], ...] = ((2, 2), (4, 3), (8, 5), (16, 4))
DEFAULT_INSTANCES = 200
PROBLEM_INSTANCES = 20
FD_STEP = 1e-6
FD_DIRECTIONS = 10
ZERO_TANGENT_NORM = 1e-12

PROBLEM_DIMS = {
    ProblemKind.EIGENSTATE: {"n": 4, "p": 2},
    ProblemKind.GRASSMANN: {"n": 4, "p": 2},
    ProblemKind.PILOT: {"L": 4, "K_users": 6, "T": 4},
    ProblemKind.BEAMFORMING: {"n_t": 8, "n_r": 3},
    ProblemKind.RIS: {"N": 8, "M": 4},
}

# Instance generator for one check: (rng, (n, d)) -> worst error on that instance
InstanceFn = Callable[[np.random.Generator, Tuple[int, int]], float]


@dataclass(frozen=True)
class Check:
    name: str
    tolerance: float
    instance: InstanceFn
    per_size: bool = True


@dataclass(frozen=True)
class CheckResult:
    name: str
    size: str
    instances: int
    worst: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.worst)) and self.worst <= self.tolerance


def _gaussian(rng: np.random.Generator, shape) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def _unit(Z: np.ndarray) -> np.ndarray:
    return Z / np.linalg.norm(Z)


def _seed(rng: np.random.Generator) -> int:
    return int(rng.integers(0, 2**31 - 1))


def geometries(size: Tuple[int, int]) -> List[ManifoldDescriptor]:
    """Manifolds exercised at an (n, d) grid point"""
    n, d = size
    return [
        ManifoldDescriptor.sphere(n),
        ManifoldDescriptor.oblique(n, d),
        ManifoldDescriptor.stiefel(n, d),
        ManifoldDescriptor.grassmannian(n, d),
        ManifoldDescriptor.torus(d),
    ]


def retractions_for(kind: ManifoldKind) -> Tuple[Retraction, ...]:
    if kind.column_normalized:
        return (Retraction.NORMALIZE, Retraction.EXPONENTIAL)
    return (Retraction.QR,)


def _random_tangent(rng: np.random.Generator, point: ManifoldPoint) -> TangentVector:
    """Unit tangent, or the zero tangent where the tangent space is trivial (Gr(n, n))"""
    V = project_tangent(point, _gaussian(rng, point.shape))
    if V.norm() <= ZERO_TANGENT_NORM:
        return TangentVector.zero(point)
    return TangentVector(point, _unit(V.Z))


# -------------------------------------------------------------------------
# Geometry
# -------------------------------------------------------------------------


def check_projection_idempotency(rng, size) -> float:
    worst = 0.0
    for descriptor in geometries(size):
        point = random_point(descriptor, _seed(rng))
        once = project_tangent(point, _unit(_gaussian(rng, point.shape)))
        twice = project_tangent(point, once)
        worst = max(worst, float(np.max(np.abs(twice.Z - once.Z))))
    return worst


def check_projection_tangency(rng, size) -> float:
    worst = 0.0
    for descriptor in geometries(size):
        point = random_point(descriptor, _seed(rng))
        worst = max(worst, project_tangent(point, _unit(_gaussian(rng, point.shape))).residual())
    return worst


def check_projection_orthogonality(rng, size) -> float:
    """Re Tr((Z - P(Z))† P(W)), relative to ||Z|| ||W||"""
    worst = 0.0
    for descriptor in geometries(size):
        point = random_point(descriptor, _seed(rng))
        Z, W = _gaussian(rng, point.shape), _gaussian(rng, point.shape)
        normal = Z - project_tangent(point, Z).Z
        inner = np.real(np.vdot(normal, project_tangent(point, W).Z))
        worst = max(worst, abs(float(inner)) / (np.linalg.norm(Z) * np.linalg.norm(W)))
    return worst


def check_retraction_identity(rng, size) -> float:
    worst = 0.0
    for descriptor in geometries(size):
        point = random_point(descriptor, _seed(rng))
        V = _random_tangent(rng, point)
        for method in retractions_for(descriptor.kind):
            worst = max(worst, float(np.max(np.abs(retract(point, V, 0.0, method).X - point.X))))
    return worst


def check_retraction_first_order(rng, size) -> float:
    """Central difference of t -> R_X(tV) at t = 0 against V"""
    worst = 0.0
    for descriptor in geometries(size):
        point = random_point(descriptor, _seed(rng))
        V = _random_tangent(rng, point)
        for method in retractions_for(descriptor.kind):
            forward = retract(point, V, FD_STEP, method).X
            backward = retract(point, V, -FD_STEP, method).X
            derivative = (forward - backward) / (2 * FD_STEP)
            worst = max(worst, float(np.max(np.abs(derivative - V.Z))))
    return worst


def check_retraction_feasibility(rng, size) -> float:
    worst = 0.0
    for descriptor in geometries(size):
        point = random_point(descriptor, _seed(rng))
        V = _random_tangent(rng, point)
        t = float(rng.uniform(0.0, 3.0))
        for method in retractions_for(descriptor.kind):
            worst = max(worst, membership_residual(descriptor, retract(point, V, t, method).X))
    return worst


def check_skew_antihermitian(rng, size) -> float:
    n, _ = size
    x = _unit(_gaussian(rng, n))
    v = _gaussian(rng, n)
    v = v - x * np.vdot(x, v)
    A = skew_generator(x, v)
    return float(np.max(np.abs(A.conj().T + A)))


def check_skew_action(rng, size) -> float:
    """A x = v for orthogonal directions and for the pure phase direction"""
    n, _ = size
    x = _unit(_gaussian(rng, n))
    v = _gaussian(rng, n)
    v = v - x * np.vdot(x, v)
    phase = 1j * float(rng.standard_normal()) * x
    return max(
        float(np.max(np.abs(skew_generator(x, v) @ x - v))),
        float(np.max(np.abs(skew_generator(x, phase) @ x - phase))),
    )


# -------------------------------------------------------------------------
# Encoding and quantum counterparts
# -------------------------------------------------------------------------


def check_encode_roundtrip(rng, size) -> float:
    X = _gaussian(rng, size)
    return float(np.max(np.abs(decode(encode(X)) - X)))


def check_qubit_economy(rng, size) -> float:
    """Mismatched register sizes count as error 1; exact sizes as 0"""
    n, d = size
    state = encode(_gaussian(rng, size))
    expected = ceil_log2(d) + ceil_log2(n)
    ok = state.shape.num_qubits == expected and state.amplitudes.size == 2**expected
    return 0.0 if ok else 1.0


def check_state_normalization(rng, size) -> float:
    return abs(float(np.linalg.norm(encode(_gaussian(rng, size)).amplitudes)) - 1.0)


def check_expectation_linearity(rng, size) -> float:
    n, d = size
    state = encode(_gaussian(rng, size))
    M1, M2 = _gaussian(rng, (d, d)), _gaussian(rng, (d, d))
    B1, B2 = _gaussian(rng, (n, n)), _gaussian(rng, (n, n))
    a, b = rng.standard_normal(2)
    in_m = expectation(state, IndexedOperator(a * M1 + b * M2, B1))
    in_m_ref = a * expectation(state, IndexedOperator(M1, B1)) + b * expectation(state, IndexedOperator(M2, B1))
    in_b = expectation(state, IndexedOperator(M1, a * B1 + b * B2))
    in_b_ref = a * expectation(state, IndexedOperator(M1, B1)) + b * expectation(state, IndexedOperator(M1, B2))
    return max(abs(in_m - in_m_ref), abs(in_b - in_b_ref))


def check_quantum_metric(rng, size) -> float:
    worst = 0.0
    for descriptor in geometries(size):
        point = random_point(descriptor, _seed(rng))
        Z1, Z2 = _random_tangent(rng, point), _random_tangent(rng, point)
        if Z1.norm() == 0 or Z2.norm() == 0:
            continue
        worst = max(worst, abs(overlap_inner_product(encode(Z1.Z), encode(Z2.Z)) - metric(Z1, Z2)))
    return worst


def check_quantum_projection(rng, size) -> float:
    worst = 0.0
    for descriptor in geometries(size):
        point = random_point(descriptor, _seed(rng))
        Z = _gaussian(rng, point.shape)
        projected = quantum_project(encode(point.X), encode(Z), descriptor.kind)
        worst = max(worst, float(np.max(np.abs(decode(projected) - project_tangent(point, Z).Z))))
    return worst


def check_quantum_retraction(rng, size) -> float:
    """Exponential, normalization and QR retractions against their classical versions; scale preserved by exp"""
    worst = 0.0
    for descriptor in geometries(size):
        point = random_point(descriptor, _seed(rng))
        V = _random_tangent(rng, point)
        if V.norm() == 0:
            continue
        t = float(rng.uniform(0.1, 2.0))
        state, direction = encode(point.X), encode(V.Z)
        if descriptor.kind.column_normalized:
            moved = quantum_retract(state, V, t)
            worst = max(worst, abs(moved.scale - state.scale), abs(np.linalg.norm(moved.amplitudes) - 1.0))
            worst = max(worst, float(np.max(np.abs(decode(moved) - retract(point, V, t, Retraction.EXPONENTIAL).X))))
            normalized = quantum_retract_normalize(state, direction, t)
            reference = retract(point, V, t, Retraction.NORMALIZE).X
            worst = max(worst, float(np.max(np.abs(decode(normalized) - reference))))
        else:
            moved = quantum_retract_qr(state, direction, t)
            worst = max(worst, float(np.max(np.abs(decode(moved) - retract(point, V, t, Retraction.QR).X))))
    return worst


# -------------------------------------------------------------------------
# Problems
# -------------------------------------------------------------------------


def _problems(rng: np.random.Generator) -> Iterable[TraceObjective]:
    for kind, dims in PROBLEM_DIMS.items():
        yield generate_scenario(kind, dims, _seed(rng))


def check_gradient_finite_difference(rng, size) -> float:
    """Relative error of <egrad, D> against central differences, D random ambient"""
    worst = 0.0
    for problem in _problems(rng):
        point = random_point(problem.manifold, _seed(rng))
        G = problem.egrad(point)
        for _ in range(FD_DIRECTIONS):
            D = _unit(_gaussian(rng, point.shape))
            fd = (problem.objective(point.X + FD_STEP * D) - problem.objective(point.X - FD_STEP * D)) / (2 * FD_STEP)
            analytic = float(np.real(np.vdot(G, D)))
            worst = max(worst, abs(fd - analytic) / max(1.0, abs(analytic)))
    return worst


def check_pilot_offset(rng, size) -> float:
    """Trace form minus triple sum equals sum(beta) on the oblique manifold"""
    problem = generate_scenario(ProblemKind.PILOT, PROBLEM_DIMS[ProblemKind.PILOT], _seed(rng))
    F = random_point(problem.manifold, _seed(rng))
    offset = pilot_objective_trace(problem, F) - pilot_objective_direct(problem, F)
    return abs(offset - float(problem.beta.sum()))


def check_ris_trace_form(rng, size) -> float:
    problem = generate_scenario(ProblemKind.RIS, PROBLEM_DIMS[ProblemKind.RIS], _seed(rng))
    theta = random_point(problem.manifold, _seed(rng))
    return abs(ris_objective(problem, theta) - ris_objective_trace(problem, theta))


def check_quantum_objectives(rng, size) -> float:
    """Expectation-value evaluators against the classical ones, relative"""
    worst = 0.0
    for problem in _problems(rng):
        point = random_point(problem.manifold, _seed(rng))
        state = encode(point.X)
        pairs = [(problem.objective_quantum(state), problem.objective(point))]
        if isinstance(problem, PilotProblem):
            pairs.append((pilot_objective_quantum(problem, state), pilot_quartic(problem, point)))
        for quantum, classical in pairs:
            worst = max(worst, abs(quantum - classical) / max(1.0, abs(classical)))
    return worst


def check_quantum_gradients(rng, size) -> float:
    """Projected gradient from operator application against the classical projection"""
    worst = 0.0
    for problem in _problems(rng):
        point = random_point(problem.manifold, _seed(rng))
        state = encode(point.X)
        quantum = decode(quantum_project(state, problem.egrad_quantum(state), problem.manifold.kind))
        classical = project_tangent(point, problem.egrad(point)).Z
        worst = max(worst, float(np.max(np.abs(quantum - classical))) / max(1.0, float(np.max(np.abs(classical)))))
    return worst


CHECKS: Tuple[Check, ...] = (
    Check("projection_idempotency", 1e-12, check_projection_idempotency),
    Check("projection_tangency", 1e-12, check_projection_tangency),
    Check("projection_orthogonality", 1e-12, check_projection_orthogonality),
    Check("retraction_identity", 0.0, check_retraction_identity),
    Check("retraction_first_order", 1e-4, check_retraction_first_order),
    Check("retraction_feasibility", 1e-10, check_retraction_feasibility),
    Check("skew_generator_antihermitian", 0.0, check_skew_antihermitian),
    Check("skew_generator_action", 1e-12, check_skew_action),
    Check("encode_decode_roundtrip", 1e-12, check_encode_roundtrip),
    Check("qubit_economy", 0.0, check_qubit_economy),
    Check("state_normalization", 1e-12, check_state_normalization),
    Check("expectation_linearity", 1e-10, check_expectation_linearity),
    Check("quantum_metric", 1e-10, check_quantum_metric),
    Check("quantum_projection", 1e-10, check_quantum_projection),
    Check("quantum_retraction", 1e-10, check_quantum_retraction),
    Check("gradient_finite_difference", 1e-5, check_gradient_finite_difference, per_size=False),
    Check("pilot_offset_identity", 1e-10, check_pilot_offset, per_size=False),
    Check("ris_trace_form", 1e-10, check_ris_trace_form, per_size=False),
    Check("quantum_objectives", 1e-8, check_quantum_objectives, per_size=False),
    Check("quantum_gradients", 1e-10, check_quantum_gradients, per_size=False),
)


def run_check(
    check: Check,
    rng: np.random.Generator,
    size: Tuple[int, int],
    instances: int,
    tolerance_scale: float = 1.0,
) -> CheckResult:
    worst = 0.0
    for _ in range(instances):
        worst = max(worst, check.instance(rng, size))
    label = f"{size[0]}x{size[1]}" if check.per_size else "-"
    return CheckResult(check.name, label, instances, worst, check.tolerance * tolerance_scale)


def run_suite(
    instances: int = DEFAULT_INSTANCES,
    tolerance_scale: float = 1.0,
    sizes: Sequence[Tuple[int, int]] = STANDARD_SIZES,
    seed: int = 0,
    names: Optional[Sequence[str]] = None,
) -> List[CheckResult]:
    """
    Run every check (or those in `names`). Per-size checks run `instances`
    times at each grid point; problem checks run min(instances, 20) times.

    `tolerance_scale` multiplies every tolerance; values below 1 tighten the
    suite (0 makes any nonzero deviation fail).
    """
    rng = np.random.default_rng(seed)
    results: List[CheckResult] = []
    for check in CHECKS:
        if names is not None and check.name not in names:
            continue
        if check.per_size:
            for size in sizes:
                results.append(run_check(check, rng, size, instances, tolerance_scale))
        else:
            results.append(run_check(check, rng, sizes[0], min(instances, PROBLEM_INSTANCES), tolerance_scale))
        latest = results[-1]
        if not latest.passed:
            logger.warning(f"check {latest.name} failed at {latest.size}: {latest.worst:.3e} > {latest.tolerance:.1e}")
    return results


def format_table(results: Sequence[CheckResult]) -> str:
    header = f"{'check':<30} {'size':>6} {'n':>5} {'worst':>11} {'tol':>9}  status"
    lines = [header, "-" * len(header)]
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        lines.append(f"{r.name:<30} {r.size:>6} {r.instances:>5} {r.worst:>11.3e} {r.tolerance:>9.1e}  {status}")
    return "\n".join(lines)
