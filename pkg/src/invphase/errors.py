"""Exception types raised across the package."""


class InvPhaseError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatch(InvPhaseError):
    """Operands act on Hilbert-Schmidt spaces of different dimension."""


class NotBlockDecoupled(InvPhaseError):
    """A 4x4 generator couples the (sigma_x, sigma_y) plane to the rest."""


class NonDiagonalizable(InvPhaseError):
    """The eigenvector matrix is numerically singular.

    Signals a nontrivial Jordan structure, which the spectral machinery
    does not handle.
    """


class AmbiguousMatching(InvPhaseError):
    """Eigenvalue pairing between adjacent time steps is not unique.

    Usually indicates a level crossing; refine the time grid around it.
    """


class StepTooLarge(InvPhaseError):
    """Halving the integration step changed the result beyond tolerance."""


class DegenerateFamily(InvPhaseError):
    """Family parameters violate the eigenbasis-existence condition."""


class SingularExponent(InvPhaseError):
    """The bit-flip family rate sqrt(gamma_b**4 - omega**2) vanishes."""


class NotCyclic(InvPhaseError):
    """The basis path does not close at the final time."""


class VanishingOverlap(InvPhaseError):
    """The overlap with the initial left covector is numerically zero.

    The open-path phase is undefined at that instant.
    """


class VanishingDenominator(InvPhaseError):
    """A closed-form expression is evaluated at a parameter zero."""


class ScenarioParseError(InvPhaseError):
    """A scenario document is malformed."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ScenarioValidationError(InvPhaseError):
    """A scenario violates a precondition of the requested pipeline."""
