"""Exception hierarchy shared across the package."""

from __future__ import annotations


class MultiRetrieverError(Exception):
    """Base class for every error raised on purpose by this package."""


# corpus
class PathNotFound(MultiRetrieverError):
    pass


class EmptyCorpus(MultiRetrieverError):
    pass


class UnsupportedLanguage(MultiRetrieverError):
    pass


class InvalidFraction(MultiRetrieverError, ValueError):
    pass


# backends
class BackendError(MultiRetrieverError):
    pass


class BackendUnreachable(BackendError):
    pass


class BackendBadResponse(BackendError):
    pass


class Unauthorized(BackendError):
    pass


# index
class DimMismatch(MultiRetrieverError, ValueError):
    pass


class DuplicateId(MultiRetrieverError, KeyError):
    pass


class EmptyIndex(MultiRetrieverError):
    pass


class CorruptIndex(MultiRetrieverError):
    pass


# retrievers / selection
class UnsupportedPerspective(MultiRetrieverError, ValueError):
    pass


class InvalidParam(MultiRetrieverError, ValueError):
    pass


class DegenerateData(MultiRetrieverError):
    pass


class DegenerateDataWarning(UserWarning):
    """An arm saw only one label class; its model falls back to the class rate."""


# eval / cli
class EmptyInput(MultiRetrieverError, ValueError):
    pass


class ConfigParseError(MultiRetrieverError):
    def __init__(self, message: str, *, field: str | None = None,
                 line: int | None = None, column: int | None = None) -> None:
        where = []
        if field is not None:
            where.append(f"field {field!r}")
        if line is not None:
            where.append(f"line {line}" + (f", column {column}" if column else ""))
        super().__init__(f"{message} ({'; '.join(where)})" if where else message)
        self.field = field
        self.line = line
        self.column = column


class UnknownKey(ConfigParseError):
    def __init__(self, key: str, section: str = "", *, line: int | None = None) -> None:
        dotted = f"{section}.{key}" if section else key
        super().__init__(f"unknown configuration key {dotted!r}", field=dotted, line=line)
        self.key = key
