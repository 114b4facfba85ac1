"""Exception types shared across the package."""


class PestabError(Exception):
    """Base class for package-specific failures."""


class ShapeError(PestabError, ValueError):
    """Array input has the wrong shape or non-finite entries."""


class DomainError(PestabError, ValueError):
    """Scalar argument outside its admissible range."""


class PreconditionError(PestabError, ValueError):
    """A documented operation precondition does not hold."""


class NotNeutrallyStable(PestabError, ValueError):
    """Matrix has an eigenvalue with positive real part, or a
    non-semisimple eigenvalue on the imaginary axis."""


class DegenerateStateError(PestabError, ValueError):
    """State vector is (numerically) zero where a direction is required."""


class ConstructionError(PestabError, RuntimeError):
    """A constructed object failed its own post-construction check."""


class InternalConsistencyError(PestabError, RuntimeError):
    """An invariant that should hold by algebra was violated; indicates a
    parameter precondition breach or a bug, not a tolerance issue."""


class SimulationError(PestabError, RuntimeError):
    """A simulation could not reach the configuration the caller asked for
    (missing crossing, stalled revolution, exhausted search)."""


class InsufficientDataError(PestabError, ValueError):
    """Not enough samples to carry out a fit or a check."""
