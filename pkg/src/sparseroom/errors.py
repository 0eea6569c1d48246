"""Exception hierarchy shared across the toolkit.

Validation problems (bad arguments, scene files that violate the schema,
geometric impossibilities) derive from :class:`ValidationError`; failures of
a numerical procedure on otherwise valid input derive from
:class:`NumericalError`.  The CLI maps the former to exit code 2 and the
latter to exit code 3.
"""


class SparseRoomError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(SparseRoomError, ValueError):
    """Invalid argument, scene description, or geometric configuration."""


class DomainError(ValidationError):
    """A point lies outside the region where the operation is defined."""


class EmptyGridError(ValidationError):
    """Grid construction produced no cells."""


class AmbiguityError(ValidationError):
    """Two distinct grid groups collide at the same physical point."""


class SingularityError(ValidationError):
    """Source and receiver coincide; the propagation kernel diverges."""


class ColaError(ValidationError):
    """STFT configuration does not support overlap-add reconstruction."""


class NumericalError(SparseRoomError, RuntimeError):
    """A numerical procedure failed on valid input."""


class TruncationError(NumericalError):
    """An impulse response is too short for the requested reflections.

    ``dropped`` lists the (position, delay_samples) of the images that did
    not fit.
    """

    def __init__(self, message, dropped):
        super().__init__(message)
        self.dropped = list(dropped)


class InsufficientDecayError(NumericalError):
    """Energy decay curve never reaches the fitting span."""


class DegenerateBlockError(NumericalError):
    """Recovered covariance block has a nonpositive direct-path entry."""


class EstimationError(NumericalError):
    """An estimator has no usable data to fit."""


class InfeasibleError(NumericalError):
    """Constraint set of a convex program is (numerically) empty."""
