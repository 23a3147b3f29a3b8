"""Exception types raised by ctff."""


class CtffError(Exception):
    """Base class for all ctff errors."""

    exit_code = 1


class ModelValidationError(CtffError, ValueError):
    """A CTBN model, timeline or config violates a structural invariant."""

    exit_code = 2


class StateSpaceTooLarge(CtffError):
    """The joint state space exceeds the configured cap."""

    exit_code = 2


class ZeroProbabilityEvidence(CtffError):
    """Evidence has probability zero under the current belief state."""

    exit_code = 3


class SparseInconsistencyError(ZeroProbabilityEvidence):
    """No retained sparse state is consistent with the evidence."""

    exit_code = 4


class TruncationError(CtffError):
    """The Poisson tail could not be pushed below tolerance within the cap."""


class StiffnessError(CtffError):
    """The adaptive integrator step size collapsed."""
