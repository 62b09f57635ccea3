"""Exception types shared across the package."""


class PanolabError(Exception):
    """Base class for errors raised by this package."""


class InvalidInputError(PanolabError, ValueError):
    """An argument violates an operation's preconditions."""


class GeometryDomainError(PanolabError):
    """A geometric configuration admits no valid solution.

    Raised, for example, when a ray cast from outside the scene sphere is
    asked for its forward intersection, or when a camera sits outside the
    sphere it is supposed to observe from within.
    """


class FormatError(PanolabError):
    """A file exists but its contents violate the expected format."""


class ParseError(FormatError):
    """A text record failed to parse; carries the 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class UndefinedSimilarityError(PanolabError):
    """Cosine similarity is undefined because one side is identically zero."""


class ReluKinkWarning(RuntimeWarning):
    """A relu pre-activation sits inside the kink tolerance; derivatives there
    are one-sided and the analytic Jacobian picks the right limit."""
