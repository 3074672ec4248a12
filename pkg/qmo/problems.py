"""
Trace-form objectives.

Each problem exposes its objective in its natural sense (eigenstate, Grassmann
and pilot are minimized; beamforming and RIS are maximized) through:
- a direct evaluator on the matrix
- a trace or expectation-value evaluator on the encoded state
- the Euclidean gradient, classically and as an operator applied to the state
- a closed-form optimum where one exists

Euclidean gradients follow the real trace metric: G is the matrix with
df = Re Tr(G† dX).
"""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Mapping, Optional, Tuple, Union

import numpy as np

from qmo.errors import DimensionError, PreconditionError, SentinelStateError
from qmo.manifolds import ManifoldDescriptor, ManifoldKind, ManifoldPoint
from qmo.qstate import (
    EncodedState,
    IndexedOperator,
    apply_operator,
    basis_operator,
    expectation,
    index_gram,
)

logger = logging.getLogger(__name__)

HERMITIAN_TOL = 1e-12

MatrixLike = Union[ManifoldPoint, np.ndarray]


class Sense(str, Enum):
    MINIMIZE = "minimize"
    MAXIMIZE = "maximize"

    @property
    def sign(self) -> float:
        """Factor turning the objective into a minimization objective"""
        return 1.0 if self is Sense.MINIMIZE else -1.0


class ProblemKind(str, Enum):
    EIGENSTATE = "eigenstate"
    GRASSMANN = "grassmann"
    PILOT = "pilot"
    BEAMFORMING = "beamforming"
    RIS = "ris"


REQUIRED_DIMS: Dict[ProblemKind, Tuple[str, ...]] = {
    ProblemKind.EIGENSTATE: ("n", "p"),
    ProblemKind.GRASSMANN: ("n", "p"),
    ProblemKind.PILOT: ("L", "K_users", "T"),
    ProblemKind.BEAMFORMING: ("n_t", "n_r"),
    ProblemKind.RIS: ("N", "M"),
}


def _frozen(values: np.ndarray, dtype=np.complex128) -> np.ndarray:
    out = np.array(values, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


def _check_hermitian(name: str, A: np.ndarray) -> None:
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {A.shape}")
    gap = float(np.max(np.abs(A - A.conj().T))) if A.size else 0.0
    if gap > HERMITIAN_TOL * max(1.0, float(np.max(np.abs(A)))):
        raise PreconditionError(f"{name} is not Hermitian: max |A - A†| = {gap:.3e}")


def _matrix(X: MatrixLike, shape: Tuple[int, int]) -> np.ndarray:
    X = X.X if isinstance(X, ManifoldPoint) else np.asarray(X, dtype=np.complex128)
    if X.shape != shape:
        raise DimensionError(f"expected a matrix of shape {shape}, got {X.shape}")
    return X


def _require_state(state: EncodedState, shape: Tuple[int, int]) -> None:
    if state.is_sentinel:
        raise SentinelStateError("objective evaluated on the zero-tangent sentinel")
    if (state.shape.n, state.shape.d) != shape:
        raise DimensionError(f"state encodes a {state.shape.n}x{state.shape.d} matrix, expected {shape}")


class TraceObjective(ABC):
    """Common surface the solver drives, for both backends"""

    sense: Sense

    @property
    @abstractmethod
    def manifold(self) -> ManifoldDescriptor: ...

    @abstractmethod
    def objective(self, X: MatrixLike) -> float: ...

    @abstractmethod
    def egrad(self, X: MatrixLike) -> np.ndarray: ...

    @abstractmethod
    def objective_quantum(self, state: EncodedState) -> float: ...

    @abstractmethod
    def egrad_quantum(self, state: EncodedState) -> EncodedState: ...

    def optimum(self) -> Optional[float]:
        """Closed-form optimal value, None when the problem has none"""
        return None


# -------------------------------------------------------------------------
# Many-body eigenstate (Stiefel) and its Grassmannian reduction
# -------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class EigenstateProblem(TraceObjective):
    """
    H: n x n Hermitian. K: the diagonal of the p x p weight matrix, strictly
    decreasing and positive. With geometry GRASSMANNIAN the weights are
    ignored and the objective is invariant under X -> XU.
    """

    H: np.ndarray
    K: np.ndarray
    geometry: ManifoldKind = ManifoldKind.STIEFEL
    sense = Sense.MINIMIZE

    def __post_init__(self) -> None:
        H = np.asarray(self.H, dtype=np.complex128)
        _check_hermitian("H", H)
        K = np.asarray(self.K, dtype=np.float64)
        if K.ndim == 2:
            if np.any(K - np.diag(np.diag(K))):
                raise PreconditionError("K must be diagonal")
            K = np.diag(K)
        if K.ndim != 1 or K.size < 1:
            raise DimensionError(f"K must be a non-empty diagonal, got shape {K.shape}")
        if np.any(K <= 0) or np.any(np.diff(K) >= 0):
            raise PreconditionError(f"K entries must be positive and strictly decreasing, got {K.tolist()}")
        if K.size > H.shape[0]:
            raise DimensionError(f"subspace size p={K.size} exceeds n={H.shape[0]}")
        geometry = ManifoldKind(self.geometry)
        if geometry not in (ManifoldKind.STIEFEL, ManifoldKind.GRASSMANNIAN):
            raise DimensionError(f"eigenstate geometry must be stiefel or grassmannian, got {geometry.value}")
        object.__setattr__(self, "H", _frozen(H))
        object.__setattr__(self, "K", _frozen(K, np.float64))
        object.__setattr__(self, "geometry", geometry)

    @classmethod
    def grassmann(cls, H: np.ndarray, p: int) -> "EigenstateProblem":
        return cls(H, np.arange(p, 0, -1, dtype=np.float64), ManifoldKind.GRASSMANNIAN)

    @property
    def n(self) -> int:
        return self.H.shape[0]

    @property
    def p(self) -> int:
        return self.K.size

    @property
    def manifold(self) -> ManifoldDescriptor:
        """St(n, 1) is the unit sphere; a single weighted column is the Rayleigh quotient on it"""
        if self.p == 1 and not self._is_grassmann:
            return ManifoldDescriptor.sphere(self.n)
        return ManifoldDescriptor(self.geometry, self.n, self.p)

    @property
    def _is_grassmann(self) -> bool:
        return self.geometry is ManifoldKind.GRASSMANNIAN

    def objective(self, X: MatrixLike) -> float:
        return grassmann_objective(self, X) if self._is_grassmann else eigenstate_objective(self, X)

    def egrad(self, X: MatrixLike) -> np.ndarray:
        return grassmann_egrad(self, X) if self._is_grassmann else eigenstate_egrad(self, X)

    def index_weights(self) -> np.ndarray:
        return np.eye(self.p) if self._is_grassmann else np.diag(self.K)

    def objective_quantum(self, state: EncodedState) -> float:
        return eigenstate_objective_quantum(self, state)

    def egrad_quantum(self, state: EncodedState) -> EncodedState:
        _require_state(state, (self.n, self.p))
        return apply_operator(state, IndexedOperator(self.index_weights(), self.H))

    def optimum(self) -> float:
        eigenvalues = np.linalg.eigvalsh(self.H)[: self.p]
        if self._is_grassmann:
            return 0.5 * float(np.sum(eigenvalues))
        return 0.5 * float(np.sum(self.K * eigenvalues))


def eigenstate_objective(prob: EigenstateProblem, X: MatrixLike) -> float:
    """½ Re Tr(X† H X K)"""
    X = _matrix(X, (prob.n, prob.p))
    column_energies = np.real(np.sum(X.conj() * (prob.H @ X), axis=0))
    return 0.5 * float(np.sum(column_energies * prob.K))


def eigenstate_egrad(prob: EigenstateProblem, X: MatrixLike) -> np.ndarray:
    X = _matrix(X, (prob.n, prob.p))
    return (prob.H @ X) * prob.K


def grassmann_objective(prob: EigenstateProblem, X: MatrixLike) -> float:
    """½ Re Tr(X† H X), weights ignored"""
    X = _matrix(X, (prob.n, prob.p))
    return 0.5 * float(np.real(np.vdot(X, prob.H @ X)))


def grassmann_egrad(prob: EigenstateProblem, X: MatrixLike) -> np.ndarray:
    X = _matrix(X, (prob.n, prob.p))
    return prob.H @ X


def eigenstate_objective_quantum(prob: EigenstateProblem, state: EncodedState) -> float:
    """½ s² <Psi| K (x) H |Psi>, with K replaced by I for the Grassmannian"""
    _require_state(state, (prob.n, prob.p))
    value = expectation(state, IndexedOperator(prob.index_weights(), prob.H))
    return 0.5 * state.scale**2 * float(np.real(value))


# -------------------------------------------------------------------------
# Pilot contamination (oblique)
# -------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PilotProblem(TraceObjective):
    """
    beta: L x K_users large-scale fading coefficients. T: pilot length.
    B_tilde, A_tilde: T x T operators of the quartic expectation form,
    identity by default.
    """

    beta: np.ndarray
    T: int
    B_tilde: Optional[np.ndarray] = None
    A_tilde: Optional[np.ndarray] = None
    sense = Sense.MINIMIZE

    def __post_init__(self) -> None:
        beta = np.asarray(self.beta, dtype=np.float64)
        if beta.ndim != 2 or beta.size == 0:
            raise DimensionError(f"beta must be a non-empty L x K_users matrix, got shape {beta.shape}")
        if np.any(beta < 0):
            raise PreconditionError("fading coefficients must be nonnegative")
        if self.T < 1:
            raise DimensionError(f"pilot length must be positive, got T={self.T}")
        object.__setattr__(self, "beta", _frozen(beta, np.float64))
        for name in ("B_tilde", "A_tilde"):
            value = getattr(self, name)
            value = np.eye(self.T) if value is None else np.asarray(value, dtype=np.complex128)
            if value.shape != (self.T, self.T):
                raise DimensionError(f"{name} must be {self.T} x {self.T}, got {value.shape}")
            object.__setattr__(self, name, _frozen(value))

    @property
    def L(self) -> int:
        return self.beta.shape[0]

    @property
    def K_users(self) -> int:
        return self.beta.shape[1]

    @property
    def weights(self) -> np.ndarray:
        """w_k = sum over APs of beta[l, k], the diagonal of B_w"""
        return self.beta.sum(axis=0)

    @property
    def B_w(self) -> np.ndarray:
        return np.diag(self.weights)

    @property
    def pair_weights(self) -> np.ndarray:
        w = self.weights
        W = w[:, None] + w[None, :]
        np.fill_diagonal(W, 0.0)
        return W

    @property
    def manifold(self) -> ManifoldDescriptor:
        return ManifoldDescriptor.oblique(self.T, self.K_users)

    def objective(self, X: MatrixLike) -> float:
        return pilot_objective_direct(self, X)

    def egrad(self, X: MatrixLike) -> np.ndarray:
        return pilot_egrad(self, X)

    def objective_quantum(self, state: EncodedState) -> float:
        return pilot_contamination_quantum(self, state)

    def egrad_quantum(self, state: EncodedState) -> EncodedState:
        _require_state(state, (self.T, self.K_users))
        C = index_gram(state, state)
        S = self.pair_weights * C
        return apply_operator(state, IndexedOperator((2.0 * S).T, np.eye(self.T)))


def pilot_objective_direct(prob: PilotProblem, F: MatrixLike) -> float:
    """sum_l sum_k sum_{k' != k} beta[l, k'] |f_k† f_k'|^2"""
    F = _matrix(F, (prob.T, prob.K_users))
    C2 = np.abs(F.conj().T @ F) ** 2
    np.fill_diagonal(C2, 0.0)
    return float(np.sum(C2 * prob.weights[None, :]))


def pilot_objective_trace(prob: PilotProblem, F: MatrixLike) -> float:
    """Tr(B_w |F†F|^2 J) with J the all-ones aggregation; exceeds the direct form by sum(beta) on the manifold"""
    F = _matrix(F, (prob.T, prob.K_users))
    C2 = np.abs(F.conj().T @ F) ** 2
    J = np.ones((prob.K_users, prob.K_users))
    return float(np.trace(prob.B_w @ C2 @ J))


def pilot_quartic(prob: PilotProblem, F: MatrixLike) -> float:
    """Dense evaluation of Re Tr((F† B~ F)(F† A~ F))"""
    F = _matrix(F, (prob.T, prob.K_users))
    return float(np.real(np.trace((F.conj().T @ prob.B_tilde @ F) @ (F.conj().T @ prob.A_tilde @ F))))


def pilot_objective_quantum(prob: PilotProblem, state: EncodedState) -> float:
    """s^4 sum_{i,k} <M_ki (x) B~> <M_ik (x) A~>"""
    _require_state(state, (prob.T, prob.K_users))
    d = prob.K_users
    E_B = np.zeros((d, d), dtype=np.complex128)
    E_A = np.zeros((d, d), dtype=np.complex128)
    for k in range(d):
        for i in range(d):
            M = basis_operator(d, k, i)
            E_B[k, i] = expectation(state, IndexedOperator(M, prob.B_tilde))
            E_A[k, i] = expectation(state, IndexedOperator(M, prob.A_tilde))
    return state.scale**4 * float(np.real(np.sum(E_B * E_A.T)))


def pilot_contamination_quantum(prob: PilotProblem, state: EncodedState) -> float:
    """
    Contamination sum from expectation products on the index register:
    s^4 sum_{i,k} w_i <M_ki (x) I><M_ik (x) I> with the k = i terms removed.
    """
    _require_state(state, (prob.T, prob.K_users))
    C = index_gram(state, state)
    products = np.real(C * C.T)
    np.fill_diagonal(products, 0.0)
    return float(np.sum(products * prob.weights[None, :]))


def pilot_egrad(prob: PilotProblem, F: MatrixLike) -> np.ndarray:
    """2 F (W ∘ F†F) with W_kk' = w_k + w_k' off the diagonal"""
    F = _matrix(F, (prob.T, prob.K_users))
    return 2.0 * F @ (prob.pair_weights * (F.conj().T @ F))


# -------------------------------------------------------------------------
# MIMO beamforming (Stiefel, maximized)
# -------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BeamformingProblem(TraceObjective):
    """H_ch: n_r x n_t channel; the precoder W is n_t x n_r with orthonormal columns"""

    H_ch: np.ndarray
    sense = Sense.MAXIMIZE

    def __post_init__(self) -> None:
        H_ch = np.asarray(self.H_ch, dtype=np.complex128)
        if H_ch.ndim != 2:
            raise DimensionError(f"channel must be a matrix, got shape {H_ch.shape}")
        n_r, n_t = H_ch.shape
        if n_r > n_t:
            raise DimensionError(f"beamforming requires n_r <= n_t, got n_r={n_r}, n_t={n_t}")
        object.__setattr__(self, "H_ch", _frozen(H_ch))

    @property
    def n_r(self) -> int:
        return self.H_ch.shape[0]

    @property
    def n_t(self) -> int:
        return self.H_ch.shape[1]

    @property
    def R(self) -> np.ndarray:
        R = self.H_ch.conj().T @ self.H_ch
        return (R + R.conj().T) / 2

    @property
    def manifold(self) -> ManifoldDescriptor:
        return ManifoldDescriptor.stiefel(self.n_t, self.n_r)

    def objective(self, X: MatrixLike) -> float:
        return beamforming_objective(self, X)

    def egrad(self, X: MatrixLike) -> np.ndarray:
        W = _matrix(X, (self.n_t, self.n_r))
        return 2.0 * self.R @ W

    def objective_quantum(self, state: EncodedState) -> float:
        return beamforming_objective_quantum(self, state)

    def egrad_quantum(self, state: EncodedState) -> EncodedState:
        _require_state(state, (self.n_t, self.n_r))
        return apply_operator(state, IndexedOperator(2.0 * np.eye(self.n_r), self.R))

    def optimum(self) -> float:
        return float(np.sum(np.linalg.eigvalsh(self.R)[-self.n_r :]))


def beamforming_objective(prob: BeamformingProblem, W: MatrixLike) -> float:
    """Received power Re Tr(W† R W)"""
    W = _matrix(W, (prob.n_t, prob.n_r))
    return float(np.real(np.vdot(W, prob.R @ W)))


def beamforming_objective_quantum(prob: BeamformingProblem, state: EncodedState) -> float:
    _require_state(state, (prob.n_t, prob.n_r))
    value = expectation(state, IndexedOperator(np.eye(prob.n_r), prob.R))
    return state.scale**2 * float(np.real(value))


# -------------------------------------------------------------------------
# RIS phase design (torus, maximized)
# -------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RisProblem(TraceObjective):
    """
    h_r: RIS-to-receiver channel (N). H_b: transmitter-to-RIS channel (N x M).
    f: transmit beamformer (M). The phases form a 1 x N point of the torus.
    """

    h_r: np.ndarray
    H_b: np.ndarray
    f: np.ndarray
    sense = Sense.MAXIMIZE

    def __post_init__(self) -> None:
        h_r = np.asarray(self.h_r, dtype=np.complex128).reshape(-1)
        H_b = np.asarray(self.H_b, dtype=np.complex128)
        f = np.asarray(self.f, dtype=np.complex128).reshape(-1)
        if H_b.ndim != 2 or H_b.shape != (h_r.size, f.size):
            raise DimensionError(f"H_b must be {h_r.size} x {f.size}, got {H_b.shape}")
        object.__setattr__(self, "h_r", _frozen(h_r))
        object.__setattr__(self, "H_b", _frozen(H_b))
        object.__setattr__(self, "f", _frozen(f))

    @property
    def N(self) -> int:
        return self.h_r.size

    @property
    def M(self) -> int:
        return self.f.size

    @property
    def g(self) -> np.ndarray:
        """Cascaded channel H_b f seen by the RIS elements"""
        return self.H_b @ self.f

    @property
    def Q(self) -> np.ndarray:
        return np.outer(self.g, self.g.conj())

    @property
    def R_ris(self) -> np.ndarray:
        return np.outer(self.h_r, self.h_r.conj())

    @property
    def operator(self) -> np.ndarray:
        """Hermitian O with O_ab = Q_ba R_ab, so phi† O phi = Tr(Phi Q Phi† R)"""
        return self.Q.T * self.R_ris

    @property
    def manifold(self) -> ManifoldDescriptor:
        return ManifoldDescriptor.torus(self.N)

    def objective(self, X: MatrixLike) -> float:
        return ris_objective(self, X)

    def egrad(self, X: MatrixLike) -> np.ndarray:
        return ris_egrad(self, X)

    def objective_quantum(self, state: EncodedState) -> float:
        return ris_objective_quantum(self, state)

    def egrad_quantum(self, state: EncodedState) -> EncodedState:
        _require_state(state, (1, self.N))
        return apply_operator(state, IndexedOperator(2.0 * self.operator, np.ones((1, 1))))

    def optimum(self) -> float:
        return float(np.sum(np.abs(self.h_r) * np.abs(self.g)) ** 2)


def _phases(prob: RisProblem, theta: MatrixLike) -> np.ndarray:
    return _matrix(theta, (1, prob.N))[0]


def ris_objective(prob: RisProblem, theta: MatrixLike) -> float:
    """|h_r† Phi H_b f|^2"""
    phi = _phases(prob, theta)
    return float(np.abs(np.sum(prob.h_r.conj() * phi * prob.g)) ** 2)


def ris_objective_trace(prob: RisProblem, theta: MatrixLike) -> float:
    """Tr(Phi Q Phi† R)"""
    Phi = np.diag(_phases(prob, theta))
    return float(np.real(np.trace(Phi @ prob.Q @ Phi.conj().T @ prob.R_ris)))


def ris_objective_quantum(prob: RisProblem, state: EncodedState) -> float:
    """s² <Psi| O (x) 1 |Psi>, O on the index register"""
    _require_state(state, (1, prob.N))
    value = expectation(state, IndexedOperator(prob.operator, np.ones((1, 1))))
    return state.scale**2 * float(np.real(value))


def ris_egrad(prob: RisProblem, theta: MatrixLike) -> np.ndarray:
    """Row (2 O phi)^T; element k equals 2 (R Phi Q)_kk"""
    phi = _phases(prob, theta)
    return (2.0 * prob.operator @ phi).reshape(1, prob.N)


def ris_aligned_phases(prob: RisProblem) -> np.ndarray:
    """theta_k = arg h_k - arg g_k, which puts every term of h_r† Phi g on the real axis"""
    return np.angle(prob.h_r) - np.angle(prob.g)


# -------------------------------------------------------------------------
# Scenarios
# -------------------------------------------------------------------------


def _complex_gaussian(rng: np.random.Generator, shape) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def _checked_dims(kind: ProblemKind, dims: Mapping[str, int]) -> Dict[str, int]:
    required = REQUIRED_DIMS[kind]
    missing = [key for key in required if key not in dims]
    if missing:
        raise DimensionError(f"{kind.value} scenario is missing dimension(s): {', '.join(missing)}")
    unknown = sorted(set(dims) - set(required))
    if unknown:
        raise DimensionError(f"{kind.value} scenario got unknown dimension(s): {', '.join(unknown)}")
    out = {}
    for key in required:
        value = dims[key]
        if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < 1:
            raise DimensionError(f"dimension {key} must be a positive integer, got {value!r}")
        out[key] = int(value)
    return out


def validate_dims(kind: ProblemKind, dims: Mapping[str, int]) -> Dict[str, int]:
    """Check a dimension map against the problem's constructor preconditions"""
    kind = ProblemKind(kind)
    dims = _checked_dims(kind, dims)
    if kind in (ProblemKind.EIGENSTATE, ProblemKind.GRASSMANN) and dims["p"] > dims["n"]:
        raise DimensionError(f"{kind.value} requires p <= n, got n={dims['n']}, p={dims['p']}")
    if kind is ProblemKind.PILOT and dims["K_users"] <= dims["T"]:
        raise DimensionError(f"pilot requires K_users > T, got K_users={dims['K_users']}, T={dims['T']}")
    if kind is ProblemKind.BEAMFORMING and dims["n_r"] > dims["n_t"]:
        raise DimensionError(f"beamforming requires n_r <= n_t, got n_t={dims['n_t']}, n_r={dims['n_r']}")
    return dims


def generate_scenario(kind: ProblemKind, dims: Mapping[str, int], seed: int) -> TraceObjective:
    """
    Seeded problem instance.

    Channels are i.i.d. standard complex Gaussian (Rayleigh fading), fading
    coefficients are log-uniform over [1e-2, 1], Hamiltonians are Hermitian
    parts of complex Gaussian matrices and K defaults to diag(p, ..., 1).
    """
    kind = ProblemKind(kind)
    dims = validate_dims(kind, dims)
    rng = np.random.default_rng(seed)
    logger.debug(f"generating {kind.value} scenario dims={dims} seed={seed}")

    if kind in (ProblemKind.EIGENSTATE, ProblemKind.GRASSMANN):
        G = _complex_gaussian(rng, (dims["n"], dims["n"]))
        H = (G + G.conj().T) / 2
        if kind is ProblemKind.GRASSMANN:
            return EigenstateProblem.grassmann(H, dims["p"])
        return EigenstateProblem(H, np.arange(dims["p"], 0, -1, dtype=np.float64))

    if kind is ProblemKind.PILOT:
        beta = 10.0 ** rng.uniform(-2.0, 0.0, size=(dims["L"], dims["K_users"]))
        return PilotProblem(beta, dims["T"])

    if kind is ProblemKind.BEAMFORMING:
        return BeamformingProblem(_complex_gaussian(rng, (dims["n_r"], dims["n_t"])))

    h_r = _complex_gaussian(rng, dims["N"])
    H_b = _complex_gaussian(rng, (dims["N"], dims["M"]))
    f = _complex_gaussian(rng, dims["M"])
    return RisProblem(h_r, H_b, f / np.linalg.norm(f))
