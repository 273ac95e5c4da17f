"""Error taxonomy shared across the package.

Every failure mode that callers are expected to branch on gets its own
class; all of them derive from :class:`ShazamError` so blanket handling
stays possible.  Classes also inherit the closest builtin (``ValueError``
or ``ArithmeticError``) to behave well in generic code.
"""

from __future__ import annotations


class ShazamError(Exception):
    """Base class for all package-specific errors."""


class InvalidArgumentError(ShazamError, ValueError):
    """A caller-supplied argument violates a documented precondition."""


class NumericError(ShazamError, ArithmeticError):
    """A computation produced non-finite values or otherwise failed numerically.

    ``layer`` / ``step`` identify where the failure happened when known.
    """

    def __init__(self, message: str, *, layer: int | None = None, step: int | None = None):
        if layer is not None:
            message = f"{message} (layer {layer})"
        if step is not None:
            message = f"{message} (step {step})"
        super().__init__(message)
        self.layer = layer
        self.step = step


class UnsupportedFormatError(ShazamError, ValueError):
    """A container/checkpoint declares a version this build does not read."""


class CorruptContainerError(ShazamError, ValueError):
    """A container failed structural validation (bad magic, truncation, ...)."""


class InconsistentContainerError(ShazamError, ValueError):
    """Payload and manifest disagree (e.g. sample counts, shapes)."""


class DegenerateVectorError(ShazamError, ValueError):
    """A vector that must have positive norm was zero."""


class EmptyCohortError(ShazamError, ValueError):
    """A cohort became empty (e.g. after filtering)."""


class UndefinedCorrelationError(ShazamError, ValueError):
    """Correlation is undefined (constant input or fewer than two points)."""


class UndefinedCIndexError(ShazamError, ValueError):
    """Concordance is undefined (no comparable pairs)."""


class UndefinedTestError(ShazamError, ValueError):
    """A statistical test is undefined on the given data (e.g. all-zero diffs)."""


class DegenerateSplitError(ShazamError, ValueError):
    """A grouping step produced an empty group (e.g. median split on constant risk)."""
