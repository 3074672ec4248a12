"""
Manifold geometry for the optimizers.

Implements descriptors, points and tangent vectors for the sphere, oblique,
Stiefel, Grassmannian and torus manifolds together with the operations the
solvers need:
- Tangent-space projection and the real trace metric
- Normalization, exponential (great-circle) and QR retractions
- Riemannian gradient and projection-based vector transport
- Seeded random points

All points are stored as complex n x d matrices. Real problems embed with a
zero imaginary part.
"""

import logging
from dataclasses import InitVar, dataclass
from enum import Enum
from typing import Tuple, Union

import numpy as np
import scipy.linalg as sla

from qmo.errors import DegenerateStepError, DimensionError, PreconditionError, UsageError

logger = logging.getLogger(__name__)

MEMBERSHIP_TOL = 1e-12
DEGENERATE_NORM = 1e-14
SKEW_TOL = 1e-10


class ManifoldKind(str, Enum):
    SPHERE = "sphere"
    OBLIQUE = "oblique"
    STIEFEL = "stiefel"
    GRASSMANNIAN = "grassmannian"
    TORUS = "torus"

    @property
    def column_normalized(self) -> bool:
        """True for manifolds constrained by diag(X†X) = I"""
        return self in (ManifoldKind.SPHERE, ManifoldKind.OBLIQUE, ManifoldKind.TORUS)


class ScalarField(str, Enum):
    REAL = "real"
    COMPLEX = "complex"


class Retraction(str, Enum):
    NORMALIZE = "normalize"
    EXPONENTIAL = "exponential"
    QR = "qr"


@dataclass(frozen=True)
class ManifoldDescriptor:
    """Manifold kind plus dimensions: n rows per column, d columns"""

    kind: ManifoldKind
    n: int
    d: int
    field: ScalarField = ScalarField.COMPLEX

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", ManifoldKind(self.kind))
        object.__setattr__(self, "field", ScalarField(self.field))
        if self.n < 1 or self.d < 1:
            raise DimensionError(f"dimensions must be positive, got n={self.n}, d={self.d}")
        if self.kind is ManifoldKind.SPHERE and self.d != 1:
            raise DimensionError(f"sphere requires d = 1, got d={self.d}")
        if self.kind is ManifoldKind.TORUS and (self.n != 1 or self.field is not ScalarField.COMPLEX):
            raise DimensionError("torus requires n = 1 over the complex field")
        if self.kind in (ManifoldKind.STIEFEL, ManifoldKind.GRASSMANNIAN) and self.d > self.n:
            raise DimensionError(f"{self.kind.value} requires d <= n, got n={self.n}, d={self.d}")

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.n, self.d)

    @classmethod
    def sphere(cls, n: int, field: ScalarField = ScalarField.COMPLEX) -> "ManifoldDescriptor":
        return cls(ManifoldKind.SPHERE, n, 1, field)

    @classmethod
    def oblique(cls, n: int, d: int, field: ScalarField = ScalarField.COMPLEX) -> "ManifoldDescriptor":
        return cls(ManifoldKind.OBLIQUE, n, d, field)

    @classmethod
    def stiefel(cls, n: int, p: int, field: ScalarField = ScalarField.COMPLEX) -> "ManifoldDescriptor":
        return cls(ManifoldKind.STIEFEL, n, p, field)

    @classmethod
    def grassmannian(cls, n: int, p: int, field: ScalarField = ScalarField.COMPLEX) -> "ManifoldDescriptor":
        return cls(ManifoldKind.GRASSMANNIAN, n, p, field)

    @classmethod
    def torus(cls, N: int) -> "ManifoldDescriptor":
        return cls(ManifoldKind.TORUS, 1, N, ScalarField.COMPLEX)


def _frozen_copy(values: np.ndarray) -> np.ndarray:
    out = np.array(values, dtype=np.complex128, copy=True)
    out.setflags(write=False)
    return out


def _as_ambient(Z: Union[np.ndarray, "TangentVector"], shape: Tuple[int, int]) -> np.ndarray:
    Z = Z.Z if isinstance(Z, TangentVector) else np.asarray(Z, dtype=np.complex128)
    if Z.ndim == 1 and shape[1] == 1:
        Z = Z.reshape(-1, 1)
    if Z.shape != shape:
        raise DimensionError(f"expected an ambient matrix of shape {shape}, got {Z.shape}")
    return Z


def membership_residual(descriptor: ManifoldDescriptor, X: np.ndarray) -> float:
    """Largest deviation of X from the manifold constraint"""
    gram = X.conj().T @ X
    if descriptor.kind.column_normalized:
        residual = float(np.max(np.abs(np.diag(gram) - 1.0)))
    else:
        residual = float(np.max(np.abs(gram - np.eye(descriptor.d))))
    if descriptor.field is ScalarField.REAL:
        residual = max(residual, float(np.max(np.abs(X.imag))))
    return residual


@dataclass(frozen=True, eq=False)
class ManifoldPoint:
    """A matrix certified to lie on the manifold named by its descriptor"""

    descriptor: ManifoldDescriptor
    X: np.ndarray
    tol: InitVar[float] = MEMBERSHIP_TOL

    def __post_init__(self, tol: float) -> None:
        X = np.asarray(self.X)
        if X.ndim == 1 and self.descriptor.d == 1:
            X = X.reshape(-1, 1)
        if X.shape != self.descriptor.shape:
            raise DimensionError(f"point must have shape {self.descriptor.shape}, got {X.shape}")
        X = _frozen_copy(X)
        residual = membership_residual(self.descriptor, X)
        if residual > tol:
            raise PreconditionError(
                f"matrix is not on {self.descriptor.kind.value}: constraint residual {residual:.3e} > {tol:.1e}"
            )
        object.__setattr__(self, "X", X)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.descriptor.shape

    def same_as(self, other: "ManifoldPoint") -> bool:
        return self is other or (self.descriptor == other.descriptor and np.array_equal(self.X, other.X))


def tangency_residual(point: ManifoldPoint, Z: np.ndarray) -> float:
    """Largest violation of the tangent-space constraint at point"""
    X = point.X
    kind = point.descriptor.kind
    if kind is ManifoldKind.TORUS:
        return float(np.max(np.abs(np.real(np.sum(X.conj() * Z, axis=0)))))
    if kind.column_normalized:
        return float(np.max(np.abs(np.sum(X.conj() * Z, axis=0))))
    S = X.conj().T @ Z
    if kind is ManifoldKind.STIEFEL:
        return float(np.max(np.abs(S + S.conj().T)))
    return float(np.max(np.abs(S)))


@dataclass(frozen=True, eq=False)
class TangentVector:
    """Ambient matrix Z living in the tangent space at `at`"""

    at: ManifoldPoint
    Z: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "Z", _frozen_copy(_as_ambient(self.Z, self.at.shape)))

    @classmethod
    def zero(cls, point: ManifoldPoint) -> "TangentVector":
        return cls(point, np.zeros(point.shape, dtype=np.complex128))

    def residual(self) -> float:
        return tangency_residual(self.at, self.Z)

    def norm(self) -> float:
        return float(np.linalg.norm(self.Z))

    def __add__(self, other: "TangentVector") -> "TangentVector":
        _check_same_anchor(self, other)
        return TangentVector(self.at, self.Z + other.Z)

    def __sub__(self, other: "TangentVector") -> "TangentVector":
        _check_same_anchor(self, other)
        return TangentVector(self.at, self.Z - other.Z)

    def __mul__(self, scalar: float) -> "TangentVector":
        return TangentVector(self.at, float(scalar) * self.Z)

    __rmul__ = __mul__

    def __neg__(self) -> "TangentVector":
        return TangentVector(self.at, -self.Z)


def _check_same_anchor(Z1: TangentVector, Z2: TangentVector) -> None:
    if not Z1.at.same_as(Z2.at):
        raise UsageError("tangent vectors are anchored at different points")


def project_tangent(point: ManifoldPoint, Z: Union[np.ndarray, TangentVector]) -> TangentVector:
    """
    Orthogonal projection of an ambient matrix onto the tangent space at point.

    Oblique/Sphere: Z - X diag(X†Z)
    Torus:          Z - X Re(diag(X†Z))
    Stiefel:        Z - X herm(X†Z)
    Grassmannian:   Z - X (X†Z)
    """
    Z = _as_ambient(Z, point.shape)
    if point.descriptor.field is ScalarField.REAL:
        Z = Z.real.astype(np.complex128)
    X = point.X
    kind = point.descriptor.kind

    if kind is ManifoldKind.TORUS:
        radial = np.real(np.sum(X.conj() * Z, axis=0))
        projected = Z - X * radial
    elif kind.column_normalized:
        inner = np.sum(X.conj() * Z, axis=0)
        projected = Z - X * inner
    elif kind is ManifoldKind.STIEFEL:
        S = X.conj().T @ Z
        projected = Z - X @ ((S + S.conj().T) / 2)
    else:
        projected = Z - X @ (X.conj().T @ Z)
    return TangentVector(point, projected)


def metric(Z1: TangentVector, Z2: TangentVector) -> float:
    """Real trace metric Re Tr(Z1† Z2)"""
    _check_same_anchor(Z1, Z2)
    return float(np.real(np.vdot(Z1.Z, Z2.Z)))


def riemannian_grad(point: ManifoldPoint, egrad: np.ndarray) -> TangentVector:
    return project_tangent(point, egrad)


def _require_column_normalized(point: ManifoldPoint, operation: str) -> None:
    if not point.descriptor.kind.column_normalized:
        raise UsageError(f"{operation} requires a sphere, oblique or torus point, got {point.descriptor.kind.value}")


def _require_anchor(point: ManifoldPoint, V: TangentVector) -> None:
    if not V.at.same_as(point):
        raise UsageError("tangent vector is not anchored at the retraction point")


def retract_normalize(point: ManifoldPoint, xi: TangentVector, alpha: float) -> ManifoldPoint:
    """Column-wise normalization (x_k + alpha xi_k) / ||x_k + alpha xi_k||"""
    _require_column_normalized(point, "normalization retraction")
    _require_anchor(point, xi)
    if alpha == 0:
        return point
    Y = point.X + alpha * xi.Z
    norms = np.linalg.norm(Y, axis=0)
    if np.min(norms) < DEGENERATE_NORM:
        raise DegenerateStepError(f"column norm {np.min(norms):.3e} collapsed during normalization")
    return ManifoldPoint(point.descriptor, Y / norms)


def skew_generator(x: np.ndarray, v: np.ndarray, tol: float = SKEW_TOL) -> np.ndarray:
    """
    Anti-Hermitian generator A with A x = v for a unit column x.

    A = v x† - x v† - (x†v) x x†. The last term vanishes for the usual
    orthogonal direction (x†v = 0) and supplies the phase rotation when
    v = i·beta·x, the only tangent direction of a single complex entry.
    """
    x = np.asarray(x, dtype=np.complex128).reshape(-1)
    v = np.asarray(v, dtype=np.complex128).reshape(-1)
    if x.shape != v.shape:
        raise DimensionError(f"x and v must have the same length, got {x.shape} and {v.shape}")
    if abs(np.linalg.norm(x) - 1.0) > tol:
        raise PreconditionError(f"x must be a unit vector, got norm {np.linalg.norm(x):.12f}")

    v_norm = float(np.linalg.norm(v))
    c = np.vdot(x, v)
    if abs(c.real) > tol * max(1.0, v_norm):
        raise PreconditionError(f"v is not tangent at x: Re(x†v) = {c.real:.3e}")
    phase = 1j * c.imag
    if abs(phase) * np.linalg.norm(v - phase * x) > tol * max(1.0, v_norm**2):
        raise PreconditionError("v must be orthogonal to x or a pure phase direction i·beta·x")

    A = np.outer(v, x.conj()) - np.outer(x, v.conj()) - phase * np.outer(x, x.conj())
    return 0.5 * (A - A.conj().T)


def retract_exp(point: ManifoldPoint, V: TangentVector, t: float) -> ManifoldPoint:
    """
    Great-circle retraction applied column by column.

    x_k -> cos(t||v_k||) x_k + sin(t||v_k||) v_k / ||v_k||; columns with a zero
    direction stay put.
    """
    _require_column_normalized(point, "exponential retraction")
    _require_anchor(point, V)
    if t == 0:
        return point

    X, Vz = point.X, V.Z
    norms = np.linalg.norm(Vz, axis=0)
    moving = norms >= DEGENERATE_NORM
    out = np.array(X, copy=True)
    if np.any(moving):
        theta = t * norms[moving]
        rotated = np.cos(theta) * X[:, moving] + np.sin(theta) * (Vz[:, moving] / norms[moving])
        out[:, moving] = rotated / np.linalg.norm(rotated, axis=0)
    return ManifoldPoint(point.descriptor, out)


def retract_stiefel(point: ManifoldPoint, V: TangentVector, t: float) -> ManifoldPoint:
    """Thin-QR retraction with the R diagonal made real positive"""
    if point.descriptor.kind not in (ManifoldKind.STIEFEL, ManifoldKind.GRASSMANNIAN):
        raise UsageError(f"QR retraction requires a Stiefel or Grassmannian point, got {point.descriptor.kind.value}")
    _require_anchor(point, V)
    if t == 0 or not np.any(V.Z):
        return point

    Y = point.X + t * V.Z
    Q, R = sla.qr(Y, mode="economic")
    diag = np.diag(R)
    scale = max(1.0, float(np.linalg.norm(Y)))
    if np.min(np.abs(diag)) < DEGENERATE_NORM * scale:
        raise DegenerateStepError("X + tV lost rank in the QR retraction")
    Q = Q * (diag / np.abs(diag))
    return ManifoldPoint(point.descriptor, Q)


def default_retraction(kind: ManifoldKind) -> Retraction:
    return Retraction.EXPONENTIAL if kind.column_normalized else Retraction.QR


def retract(point: ManifoldPoint, V: TangentVector, t: float, method: Retraction) -> ManifoldPoint:
    if method is Retraction.NORMALIZE:
        return retract_normalize(point, V, t)
    if method is Retraction.EXPONENTIAL:
        return retract_exp(point, V, t)
    return retract_stiefel(point, V, t)


def vector_transport(source: ManifoldPoint, target: ManifoldPoint, V: TangentVector) -> TangentVector:
    """Projection transport of V from `source` into the tangent space at `target`"""
    if source.descriptor != target.descriptor:
        raise UsageError("vector transport between different manifolds")
    if not V.at.same_as(source):
        raise UsageError("tangent vector is not anchored at the transport source")
    return project_tangent(target, V.Z)


def random_point(descriptor: ManifoldDescriptor, seed: int) -> ManifoldPoint:
    """Seeded random point: Gaussian columns, thin-QR frames or uniform phases"""
    rng = np.random.default_rng(seed)
    n, d = descriptor.shape
    logger.debug(f"random {descriptor.kind.value} point {n}x{d} from seed {seed}")

    if descriptor.kind is ManifoldKind.TORUS:
        phases = rng.uniform(0.0, 2.0 * np.pi, size=d)
        return ManifoldPoint(descriptor, np.exp(1j * phases).reshape(1, d))

    if descriptor.field is ScalarField.REAL:
        G = rng.standard_normal((n, d)).astype(np.complex128)
    else:
        G = (rng.standard_normal((n, d)) + 1j * rng.standard_normal((n, d))) / np.sqrt(2.0)

    if descriptor.kind.column_normalized:
        return ManifoldPoint(descriptor, G / np.linalg.norm(G, axis=0))

    Q, R = sla.qr(G, mode="economic")
    diag = np.diag(R)
    Q = Q * (diag / np.abs(diag))
    if descriptor.field is ScalarField.REAL:
        Q = Q.real
    return ManifoldPoint(descriptor, Q)
