"""Exception types shared across the package."""


class NCPencilError(Exception):
    """Base class for all errors raised by this package."""


class ArityMismatchError(NCPencilError):
    """Variable counts of two objects do not agree."""


class ShapeMismatchError(NCPencilError):
    """Matrix shapes are incompatible with the requested operation."""


class NotUnitaryError(NCPencilError):
    """A matrix expected to be unitary is not, beyond tolerance."""


class NotHermitianError(NCPencilError):
    """A matrix expected to be Hermitian is not, beyond tolerance."""


class NotSquareDomainError(NCPencilError):
    """Operation requires a map defined on a full square matrix space."""


class DomainViolationError(NCPencilError):
    """Input does not lie in the map's domain subspace, beyond tolerance."""


class DegeneratePencilError(NCPencilError):
    """Pencil coefficients are linearly dependent."""


class RecoveryFailedError(NCPencilError):
    """Structured decomposition of a map could not be recovered at tolerance."""


class NonzeroConstantTermError(NCPencilError):
    """Black-box map has a nonzero value at the zero tuple."""


class NumericalUnderflowError(NCPencilError):
    """A scaling factor is too small for reliable extraction."""


class SingularResolventError(NCPencilError):
    """The resolvent factor of a linear fractional map is numerically singular."""


class BoundaryConstantTermError(NCPencilError):
    """Constant term sits on or outside the unit sphere; normalization undefined."""


class ParseError(NCPencilError):
    """Malformed JSON document.  Carries a JSON-pointer-style path."""

    def __init__(self, message: str, path: str = ""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


class ValidationError(NCPencilError):
    """Well-formed JSON that violates a schema or domain invariant."""
