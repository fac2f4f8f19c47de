"""Exception types shared across the package."""


class PrincipalActionsError(Exception):
    """Base class for all package errors."""


class GroupMismatch(PrincipalActionsError, ValueError):
    pass


class NotDiagonallyDominant(PrincipalActionsError, ValueError):
    """The polynomial has no lopsided splitting, so the Neumann route does not apply."""


class UnsupportedStencil(PrincipalActionsError, ValueError):
    """No unit coefficient is available to solve the kernel relation on a window."""


class InvalidPoint(PrincipalActionsError, ValueError):
    """A configuration fails the integrality test of the linearised kernel."""


class HypothesisNotMet(PrincipalActionsError, ValueError):
    """The size hypothesis of a combinatorial check does not hold for the input."""


class LemmaViolation(PrincipalActionsError, AssertionError):
    """A verified inequality failed. This points to a bug, never to bad input."""


class WindowTooSmall(PrincipalActionsError, ValueError):
    pass


class ExpressionError(PrincipalActionsError, ValueError):
    """Polynomial expression could not be parsed. ``position`` is a 0-based column."""

    def __init__(self, message: str, text: str = "", position: int = 0):
        self.text = text
        self.position = position
        super().__init__(message)

    def diagnostic(self) -> str:
        if not self.text:
            return str(self)
        return f"{self}\n  {self.text}\n  {' ' * self.position}^"
