"""Exception types shared across the package."""


class LglabError(Exception):
    """Base class for all package errors."""


class ResolutionError(LglabError):
    """Grid or curve resolution is too coarse for the requested operation."""


class DomainError(LglabError, ValueError):
    """An argument lies outside the operation's admissible domain."""


class SupportError(LglabError):
    """A constructed field has an empty or degenerate support set."""


class SymmetryError(LglabError):
    """A field violates a required antipodal symmetry."""


class PreconditionError(LglabError):
    """A documented precondition of the operation does not hold."""


class HypothesisError(PreconditionError):
    """A curvature hypothesis required by an inequality check fails."""


class FormulaValidationError(LglabError):
    """Analytic and finite-difference values disagree beyond tolerance."""


class CorrectionError(LglabError):
    """The volume-restoring root solve failed to bracket a solution."""


class SpecParseError(LglabError):
    """A metric specification document could not be parsed or validated."""
