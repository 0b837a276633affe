"""Exception hierarchy shared across the package.

Every error raised on purpose by this package derives from SpmPinnError so
callers (and the CLI) can separate our failures from genuine bugs.
"""


class SpmPinnError(Exception):
    """Base class for all package errors."""


class ConfigError(SpmPinnError):
    """Invalid or inconsistent configuration input."""


class OutOfDomain(SpmPinnError):
    """Stoichiometry handed to an OCP curve lies outside [0, 1] beyond tolerance."""


class DomainError(SpmPinnError):
    """Physical quantity outside its admissible open interval (e.g. saturated surface concentration)."""


class OverpotentialBlowup(SpmPinnError):
    """|F eta / (R T)| exceeded the overflow guard; training iterate has diverged."""


class NoConvergence(SpmPinnError):
    """Iterative root finding failed to meet tolerance within the iteration budget."""


class OutOfRange(SpmPinnError):
    """Time query outside the support of a current profile."""


class SolverError(SpmPinnError):
    """Finite-difference reference solve failed (non-finite state or bounds violation)."""


class SingularMatrix(SolverError):
    """Tridiagonal implicit-Euler system was singular (bad grid or timestep)."""


class BoundsViolation(SolverError):
    """Concentration left the physical interval (0, c_max) during a solve."""


class OutOfHull(SpmPinnError):
    """Interpolation query outside the stored solution grid."""


class ShapeMismatch(SpmPinnError):
    """Operands passed to the network engine have incompatible shapes."""


class NonFiniteGradient(SpmPinnError):
    """Backward pass produced NaN/Inf; caller decides how to recover."""


class TrainingError(SpmPinnError):
    """Base class for optimizer-stage failures."""


class NonFiniteLoss(TrainingError):
    """Loss or gradient evaluated to NaN/Inf and the run cannot continue."""


class StallDetected(TrainingError):
    """L-BFGS guard rejected too many consecutive steps; optimization is stuck."""


class ArtifactError(SpmPinnError):
    """Missing or unreadable run artifact (checkpoint, manifest, data file)."""


class GateFailure(SpmPinnError):
    """A requested metric gate was not met."""
