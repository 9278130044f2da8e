"""Exception types shared across the package."""

from __future__ import annotations


class ExruleError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(ExruleError):
    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"line {line}, column {column}: {message}"
        super().__init__(message)


class SchemaError(ExruleError):
    """Arity conflicts, data/query overlap, or use of undeclared symbols."""


class RuleError(ExruleError):
    """A dependency violates a structural precondition (safety, reserved names)."""


class DialectError(ExruleError):
    """An operation received a rule set outside its supported dialect."""


class CapExceeded(ExruleError):
    """A configured resource cap (facts, models, patterns) was hit."""

    def __init__(self, counter: str, limit: int):
        self.counter = counter
        self.limit = limit
        super().__init__(f"resource cap exceeded: {counter} > {limit}")


class ScriptError(ExruleError):
    """A firing script referenced an unknown rule or has a malformed step."""


class InconclusiveError(ExruleError):
    """A bounded oracle could not decide (chase did not saturate in time)."""


class AutomatonError(ExruleError):
    """Malformed automaton input (bad arity, unknown symbol, not oblivious)."""


class HomomorphismError(ExruleError):
    """A mapping claimed to be a C-homomorphism is not one."""
