"""
Statevector emulation of manifold points.

An n x d matrix X is stored as the normalized state

    |Psi> = (1/||X||_F) sum_k |k> (x) |x_k>

over an index register of ceil(log2 d) qubits and a column register of
ceil(log2 n) qubits. Slots beyond the logical n and d are zero padding.
The Frobenius norm is carried alongside the amplitudes as `scale`, so every
trace quantity is a scaled expectation value or overlap.

Operators act as dense matrices on the padded amplitude vector; there is no
gate-level compilation and expectations are exact.
"""

import logging
from dataclasses import dataclass
from functools import reduce
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg as sla

from qmo.errors import (
    CorruptedStateError,
    DegenerateStepError,
    DimensionError,
    PreconditionError,
    UsageError,
    ZeroMatrixError,
)
from qmo.manifolds import (
    DEGENERATE_NORM,
    ManifoldKind,
    ManifoldPoint,
    TangentVector,
    skew_generator,
)

logger = logging.getLogger(__name__)

NORMALIZATION_TOL = 1e-12
PADDING_TOL = 1e-12
ANCHOR_TOL = 1e-10
SENTINEL_RTOL = 1e-12

_HADAMARD = np.array([[1.0, 1.0], [1.0, -1.0]], dtype=np.complex128) / np.sqrt(2.0)


def ceil_log2(m: int) -> int:
    return (m - 1).bit_length()


@dataclass(frozen=True)
class RegisterShape:
    """Qubit layout for an n x d matrix: index register (columns) then column register (rows)"""

    n: int
    d: int

    def __post_init__(self) -> None:
        if self.n < 1 or self.d < 1:
            raise DimensionError(f"register needs positive n and d, got n={self.n}, d={self.d}")

    @classmethod
    def for_matrix(cls, X: np.ndarray) -> "RegisterShape":
        n, d = np.shape(X)
        return cls(n, d)

    @property
    def index_qubits(self) -> int:
        return ceil_log2(self.d)

    @property
    def column_qubits(self) -> int:
        return ceil_log2(self.n)

    @property
    def num_qubits(self) -> int:
        return self.index_qubits + self.column_qubits

    @property
    def index_dim(self) -> int:
        return 2**self.index_qubits

    @property
    def column_dim(self) -> int:
        return 2**self.column_qubits

    @property
    def dim(self) -> int:
        return 2**self.num_qubits

    def logical_mask(self) -> np.ndarray:
        """Boolean mask over amplitudes, True on slots that hold matrix entries"""
        mask = np.zeros((self.index_dim, self.column_dim), dtype=bool)
        mask[: self.d, : self.n] = True
        return mask.reshape(-1)


@dataclass(frozen=True, eq=False)
class EncodedState:
    """
    Normalized amplitudes plus the Frobenius norm of the encoded matrix.

    scale == 0 marks the zero-tangent sentinel: the amplitudes hold the
    canonical basis state |0...0> and decode to the zero matrix.
    """

    shape: RegisterShape
    amplitudes: np.ndarray
    scale: float

    def __post_init__(self) -> None:
        amplitudes = np.array(self.amplitudes, dtype=np.complex128, copy=True).reshape(-1)
        if amplitudes.shape != (self.shape.dim,):
            raise DimensionError(f"expected {self.shape.dim} amplitudes, got {amplitudes.shape[0]}")
        if self.scale < 0:
            raise ValueError(f"scale must be nonnegative, got {self.scale}")
        norm = np.linalg.norm(amplitudes)
        if abs(norm - 1.0) > NORMALIZATION_TOL:
            raise ValueError(f"amplitudes must have unit norm, got {norm:.15f}")
        amplitudes.setflags(write=False)
        object.__setattr__(self, "amplitudes", amplitudes)
        object.__setattr__(self, "scale", float(self.scale))

    @property
    def is_sentinel(self) -> bool:
        return self.scale == 0.0

    def scaled_vector(self) -> np.ndarray:
        """scale * |Psi>, i.e. vec(X) zero-padded into the register"""
        return self.scale * self.amplitudes


@dataclass(frozen=True)
class IndexedOperator:
    """M acts on the index register (d x d), B on the column register (n x n)"""

    M: np.ndarray
    B: np.ndarray

    def dense(self, shape: RegisterShape) -> np.ndarray:
        M = np.asarray(self.M, dtype=np.complex128)
        B = np.asarray(self.B, dtype=np.complex128)
        if M.shape != (shape.d, shape.d) or B.shape != (shape.n, shape.n):
            raise DimensionError(
                f"operator expects M {(shape.d, shape.d)} and B {(shape.n, shape.n)}, got {M.shape} and {B.shape}"
            )
        M_pad = np.zeros((shape.index_dim, shape.index_dim), dtype=np.complex128)
        M_pad[: shape.d, : shape.d] = M
        B_pad = np.zeros((shape.column_dim, shape.column_dim), dtype=np.complex128)
        B_pad[: shape.n, : shape.n] = B
        return np.kron(M_pad, B_pad)


def basis_operator(d: int, k: int, i: int) -> np.ndarray:
    """M_ki = |k><i| on a d-dimensional index register"""
    M = np.zeros((d, d), dtype=np.complex128)
    M[k, i] = 1.0
    return M


def sentinel_state(shape: RegisterShape) -> EncodedState:
    amplitudes = np.zeros(shape.dim, dtype=np.complex128)
    amplitudes[0] = 1.0
    return EncodedState(shape, amplitudes, 0.0)


def _from_vector(shape: RegisterShape, vector: np.ndarray, reference: float) -> EncodedState:
    """Re-encode an unnormalized register vector (scale * amplitudes)"""
    norm = float(np.linalg.norm(vector))
    if norm <= SENTINEL_RTOL * max(reference, 1.0):
        logger.debug(f"register vector norm {norm:.3e} below threshold, returning zero-tangent sentinel")
        return sentinel_state(shape)
    return EncodedState(shape, vector / norm, norm)


def _check_same_shape(s1: EncodedState, s2: EncodedState) -> None:
    if s1.shape != s2.shape:
        raise DimensionError(f"register shapes differ: {s1.shape} vs {s2.shape}")


def encode(X: np.ndarray) -> EncodedState:
    """Vectorize X column by column into the register and normalize by ||X||_F"""
    X = np.asarray(X, dtype=np.complex128)
    if X.ndim != 2:
        raise DimensionError(f"encode expects a matrix, got an array of shape {X.shape}")
    fro = float(np.linalg.norm(X))
    if fro == 0.0:
        raise ZeroMatrixError("the zero matrix cannot be encoded as a normalized state")
    shape = RegisterShape.for_matrix(X)
    block = np.zeros((shape.index_dim, shape.column_dim), dtype=np.complex128)
    block[: shape.d, : shape.n] = X.T
    return EncodedState(shape, block.reshape(-1) / fro, fro)


def encode_point(point: ManifoldPoint) -> EncodedState:
    return encode(point.X)


def decode(state: EncodedState) -> np.ndarray:
    """Inverse of encode: scale times the un-padded n x d block"""
    shape = state.shape
    padding = state.amplitudes[~shape.logical_mask()]
    if padding.size and np.max(np.abs(padding)) > PADDING_TOL:
        raise CorruptedStateError(f"padding amplitude {np.max(np.abs(padding)):.3e} exceeds {PADDING_TOL:.0e}")
    block = state.amplitudes.reshape(shape.index_dim, shape.column_dim)
    return state.scale * np.array(block[: shape.d, : shape.n].T)


def overlap_inner_product(s1: EncodedState, s2: EncodedState) -> float:
    """Re(s1 s2 <Psi1|Psi2>), the trace metric of the decoded matrices"""
    _check_same_shape(s1, s2)
    return float(np.real(s1.scale * s2.scale * np.vdot(s1.amplitudes, s2.amplitudes)))


def transition(bra: EncodedState, ket: EncodedState, op: IndexedOperator) -> complex:
    """<Psi_bra| M (x) B |Psi_ket> on the padded register"""
    _check_same_shape(bra, ket)
    return complex(np.vdot(bra.amplitudes, op.dense(bra.shape) @ ket.amplitudes))


def expectation(state: EncodedState, op: IndexedOperator) -> complex:
    """<Psi| M (x) B |Psi>; for M = |k><i| this is x_k† B x_i / scale^2"""
    return transition(state, state, op)


def index_gram(bra: EncodedState, ket: EncodedState, B: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Matrix G[k, i] = x_k† B z_i read out from scaled transition amplitudes.

    `bra` encodes X and `ket` encodes Z; B defaults to the identity.
    """
    _check_same_shape(bra, ket)
    shape = bra.shape
    B = np.eye(shape.n, dtype=np.complex128) if B is None else B
    G = np.zeros((shape.d, shape.d), dtype=np.complex128)
    for k in range(shape.d):
        for i in range(shape.d):
            G[k, i] = transition(bra, ket, IndexedOperator(basis_operator(shape.d, k, i), B))
    return bra.scale * ket.scale * G


def apply_operator(state: EncodedState, op: IndexedOperator) -> EncodedState:
    """Encoding of B X M^T, the matrix behind scale * (M (x) B)|Psi>"""
    vector = state.scale * (op.dense(state.shape) @ state.amplitudes)
    return _from_vector(state.shape, vector, state.scale)


def superpose(terms: Sequence[Tuple[float, EncodedState]]) -> EncodedState:
    """Encoding of sum_j c_j X_j for real coefficients c_j"""
    if not terms:
        raise UsageError("superpose needs at least one term")
    shape = terms[0][1].shape
    vector = np.zeros(shape.dim, dtype=np.complex128)
    reference = 0.0
    for coefficient, state in terms:
        if state.shape != shape:
            raise DimensionError(f"register shapes differ: {shape} vs {state.shape}")
        if state.is_sentinel:
            continue
        vector += float(coefficient) * state.scaled_vector()
        reference = max(reference, abs(coefficient) * state.scale)
    return _from_vector(shape, vector, reference)


def _correction_matrix(G: np.ndarray, kind: ManifoldKind) -> np.ndarray:
    """S such that the tangent projection reads Z - X S"""
    if kind is ManifoldKind.TORUS:
        return np.diag(np.real(np.diag(G))).astype(np.complex128)
    if kind.column_normalized:
        return np.diag(np.diag(G))
    if kind is ManifoldKind.STIEFEL:
        return (G + G.conj().T) / 2
    return G


def quantum_project(
    state: EncodedState,
    z_state: EncodedState,
    kind: ManifoldKind = ManifoldKind.OBLIQUE,
) -> EncodedState:
    """
    Tangent projection carried out on encoded states.

    The overlaps <x_k|z_i> are read out as transition amplitudes, the
    correction X S is built by an index-register operator acting on `state`,
    and the result is the superposition Z - X S. A vanishing result is the
    zero-tangent sentinel.
    """
    _check_same_shape(state, z_state)
    if state.is_sentinel:
        raise UsageError("cannot project onto the tangent space of the zero-tangent sentinel")
    if z_state.is_sentinel:
        return z_state

    G = index_gram(state, z_state)
    S = _correction_matrix(G, kind)
    correction = apply_operator(state, IndexedOperator(S.T, np.eye(state.shape.n)))
    projected = superpose([(1.0, z_state), (-1.0, correction)])
    if projected.is_sentinel:
        logger.debug("quantum projection vanished, zero-tangent sentinel returned")
    return projected


def quantum_retract(state: EncodedState, V: TangentVector, t: float) -> EncodedState:
    """
    Apply sum_k |k><k| (x) exp(t A_k), A_k the skew generator of column k.

    The block-diagonal operator is unitary, so the scale is unchanged.
    """
    X = decode(state)
    if V.Z.shape != X.shape:
        raise DimensionError(f"tangent shape {V.Z.shape} does not match the encoded matrix {X.shape}")
    if np.max(np.abs(V.at.X - X)) > ANCHOR_TOL:
        raise PreconditionError("tangent vector is anchored at a different point than the state")
    if t == 0:
        return state

    shape = state.shape
    blocks: List[np.ndarray] = []
    for k in range(shape.index_dim):
        if k >= shape.d:
            blocks.append(np.eye(shape.column_dim, dtype=np.complex128))
            continue
        x_k = X[:, k] / np.linalg.norm(X[:, k])
        A = np.zeros((shape.column_dim, shape.column_dim), dtype=np.complex128)
        A[: shape.n, : shape.n] = skew_generator(x_k, V.Z[:, k])
        blocks.append(sla.expm(t * A))
    U = sla.block_diag(*blocks)
    amplitudes = U @ state.amplitudes
    return EncodedState(shape, amplitudes / np.linalg.norm(amplitudes), state.scale)


def quantum_retract_qr(state: EncodedState, direction: EncodedState, t: float) -> EncodedState:
    """
    QR retraction for Stiefel/Grassmannian states.

    With Y = X + tV, the Gram matrix Y†Y is read out through index_gram, its
    Cholesky factor R (positive diagonal) gives the thin-QR factor, and
    Q = Y R^{-1} is produced by the index operator (R^{-1})^T.
    """
    _check_same_shape(state, direction)
    if t == 0 or direction.is_sentinel:
        return state
    Y = superpose([(1.0, state), (t, direction)])
    if Y.is_sentinel:
        raise DegenerateStepError("X + tV vanished in the QR retraction")
    gram = index_gram(Y, Y)
    gram = (gram + gram.conj().T) / 2
    try:
        L = np.linalg.cholesky(gram)
    except np.linalg.LinAlgError as e:
        raise DegenerateStepError(f"X + tV lost rank in the QR retraction: {e}") from e
    R = L.conj().T
    if np.min(np.abs(np.diag(R))) < DEGENERATE_NORM * max(1.0, Y.scale):
        raise DegenerateStepError("X + tV lost rank in the QR retraction")
    R_inv = sla.solve_triangular(R, np.eye(R.shape[0], dtype=np.complex128))
    return apply_operator(Y, IndexedOperator(R_inv.T, np.eye(state.shape.n)))


def quantum_retract_normalize(state: EncodedState, direction: EncodedState, t: float) -> EncodedState:
    """Block-wise renormalization of X + tV through diag(1/||y_k||) on the index register"""
    _check_same_shape(state, direction)
    if t == 0 or direction.is_sentinel:
        return state
    Y = superpose([(1.0, state), (t, direction)])
    if Y.is_sentinel:
        raise DegenerateStepError("X + tV vanished in the normalization retraction")
    norms = np.sqrt(np.maximum(np.real(np.diag(index_gram(Y, Y))), 0.0))
    if np.min(norms) < DEGENERATE_NORM:
        raise DegenerateStepError(f"column norm {np.min(norms):.3e} collapsed during normalization")
    return apply_operator(Y, IndexedOperator(np.diag(1.0 / norms), np.eye(state.shape.n)))


def prepare_uniform(shape: RegisterShape) -> EncodedState:
    """
    Hadamard on every qubit of |0...0>, restricted to the logical slots.

    The scale is sqrt(d), so the decoded matrix has equal entries 1/sqrt(n)
    and unit-norm columns.
    """
    hadamards = reduce(np.kron, [_HADAMARD] * shape.num_qubits, np.eye(1, dtype=np.complex128))
    zero = np.zeros(shape.dim, dtype=np.complex128)
    zero[0] = 1.0
    amplitudes = hadamards @ zero
    amplitudes[~shape.logical_mask()] = 0.0
    return EncodedState(shape, amplitudes / np.linalg.norm(amplitudes), np.sqrt(shape.d))


def state_records(state: EncodedState) -> dict:
    """(basis-index, re, im) triples for non-zero amplitudes, plus the scale"""
    amplitudes = [
        (int(index), float(value.real), float(value.imag))
        for index, value in enumerate(state.amplitudes)
        if value != 0
    ]
    return {"amplitudes": amplitudes, "scale": state.scale}
