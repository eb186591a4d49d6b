"""Exception types raised across the package."""


class MtsCtcError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(MtsCtcError, ValueError):
    pass


class ShapeMismatch(MtsCtcError, ValueError):
    pass


class NotNormalized(MtsCtcError, ValueError):
    pass


class NotComposable(MtsCtcError, ValueError):
    pass


class SpaceMismatch(MtsCtcError, ValueError):
    pass


class PostSelectionImpossible(MtsCtcError, ArithmeticError):
    """Raised when every outcome has (numerically) zero weight."""


class NotPositive(MtsCtcError, ValueError):
    pass


class LabelConflict(MtsCtcError, ValueError):
    pass


class NotTracePreserving(MtsCtcError, ValueError):
    pass


class BrokenMemoryChain(MtsCtcError, ValueError):
    pass


class SlotMismatch(MtsCtcError, ValueError):
    pass


class MissingTimeLabels(MtsCtcError, ValueError):
    pass


class ZeroOperator(MtsCtcError, ValueError):
    pass


class NotEqualized(MtsCtcError, ValueError):
    pass


class InvalidCircuit(MtsCtcError, ValueError):
    pass


class FreeOperationViolation(MtsCtcError, ValueError):
    """A stretch moved a system against its direction of evolution."""


class ParseError(MtsCtcError, ValueError):
    pass


class InvalidMeasurement(MtsCtcError, ValueError):
    """A POVM or instrument does not sum to the identity / a channel."""
