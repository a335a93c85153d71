"""Exception hierarchy.

Every error raised by the library derives from :class:`VolexError`.  Errors
caused by bad user input derive from :class:`InputError` (CLI exit code 2),
errors raised while evaluating numbers derive from :class:`NumericalError`
(CLI exit code 3).
"""

from __future__ import annotations


class VolexError(Exception):
    """Base class for all library errors."""


class InputError(VolexError):
    exit_code = 2


class NumericalError(VolexError):
    exit_code = 3


class ParseError(InputError):
    """Malformed expression text.

    ``offset`` is the byte offset into the UTF-8 source, ``key`` the location
    of the offending string inside a scenario file (if known).
    """

    def __init__(self, message: str, offset: int | None = None, key: str | None = None):
        self.offset = offset
        self.key = key
        parts = [message]
        if offset is not None:
            parts.append(f"at offset {offset}")
        if key is not None:
            parts.append(f"in {key}")
        super().__init__(" ".join(parts))


class ExprSyntaxError(ParseError):
    pass


class UnknownSymbol(ParseError):
    def __init__(self, name: str, offset: int | None = None, key: str | None = None):
        self.name = name
        super().__init__(f"unknown symbol {name!r}", offset=offset, key=key)


class SchemaError(InputError):
    def __init__(self, message: str, key: str | None = None):
        self.key = key
        super().__init__(f"{key}: {message}" if key else message)


class SignatureMismatch(InputError):
    pass


class NonCompactDomain(InputError):
    pass


class NotLapseForm(InputError):
    pass


class FaceNotSlice(InputError):
    pass


class DomainError(NumericalError):
    pass


class NonFinite(NumericalError):
    pass


class SingularMetric(NumericalError):
    pass


class LeftDomain(NumericalError):
    def __init__(self, message: str, exit_time: float | None = None):
        self.exit_time = exit_time
        super().__init__(message)
