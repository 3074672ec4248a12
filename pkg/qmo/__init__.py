"""
Riemannian manifold optimization over classical and statevector-emulated backends.

Matrices on the sphere, oblique, Stiefel, Grassmannian and torus manifolds
are optimized either directly or through their encoding as normalized
states over an index (x) column register, where trace objectives become
expectation values and projections and retractions become operators.
"""

from qmo.manifolds import ManifoldDescriptor, ManifoldKind, ManifoldPoint, TangentVector
from qmo.optim import RunReport, SolverConfig, solve
from qmo.problems import (
    BeamformingProblem,
    EigenstateProblem,
    PilotProblem,
    RisProblem,
    generate_scenario,
)
from qmo.qstate import EncodedState, decode, encode

__all__ = [
    "BeamformingProblem",
    "EigenstateProblem",
    "EncodedState",
    "ManifoldDescriptor",
    "ManifoldKind",
    "ManifoldPoint",
    "PilotProblem",
    "RisProblem",
    "RunReport",
    "SolverConfig",
    "TangentVector",
    "decode",
    "encode",
    "generate_scenario",
    "solve",
]

__version__ = "0.1.0"
