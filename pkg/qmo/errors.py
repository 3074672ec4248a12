"""
Exception types raised across the toolkit.

Every error derives from QMOError so callers (the CLI in particular) can
catch toolkit failures without swallowing programming errors.
"""

from typing import Optional


class QMOError(Exception):
    """Base class for toolkit errors"""


class DimensionError(QMOError, ValueError):
    """Array shapes do not match the manifold or register they are used with"""


class UsageError(QMOError):
    """Operation called with incompatible objects (wrong anchor, wrong manifold)"""


class DegenerateStepError(QMOError, ArithmeticError):
    """A retraction step collapsed a column or lost rank"""


class PreconditionError(QMOError, ValueError):
    """Input violates a stated precondition beyond tolerance"""


class ZeroMatrixError(QMOError, ValueError):
    """The zero matrix has no normalized statevector encoding"""


class CorruptedStateError(QMOError):
    """Non-zero amplitude found in a padding slot of the register"""


class SentinelStateError(QMOError):
    """An evaluator received the zero-tangent sentinel state"""


class ConfigError(QMOError):
    """Run configuration could not be parsed or validated"""

    def __init__(self, message: str, source: Optional[str] = None, line: Optional[int] = None):
        super().__init__(message)
        self.message = message
        self.source = source
        self.line = line

    @property
    def diagnostic(self) -> str:
        """One-line `file:line: message` diagnostic for standard error"""
        location = self.source or "<config>"
        if self.line is not None:
            location = f"{location}:{self.line}"
        return f"{location}: {self.message}"
