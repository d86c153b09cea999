"""
Exceptions raised by the verification library.

:copyright: (c) 2023 by Unfolded Circle ApS.
:license: MPL-2.0, see LICENSE for more details.
"""


class DataproveError(Exception):
    """Base class of all library errors."""


class InputError(DataproveError):
    """Invalid input value, goal or configuration."""


class InternalError(DataproveError):
    """Inconsistent state detected inside the pipeline."""


class ResolutionLimitError(DataproveError):
    """The configured resolution-step ceiling was exceeded."""


class SourceSyntaxError(DataproveError):
    """Syntax error in a DSL source, with its position."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        """
        Create a syntax error.

        :param message: error description
        :param line: 1-based line number, if known
        :param column: 1-based column number, if known
        """
        self.message = message
        self.line = line
        self.column = column
        super().__init__(str(self))

    def __str__(self) -> str:
        if self.line is None:
            return self.message
        if self.column is None:
            return f"line {self.line}: {self.message}"
        return f"line {self.line}, column {self.column}: {self.message}"


class PolicySyntaxError(SourceSyntaxError):
    """Syntax error in a policy source."""


class PolicyReferenceError(DataproveError):
    """Reference to an undeclared entity or group, or a duplicate declaration."""


class ArchitectureSyntaxError(SourceSyntaxError):
    """Syntax error in an architecture source."""


class TraceSyntaxError(SourceSyntaxError):
    """Unparseable trace line."""
