"""Exception hierarchy shared across the package."""


class PanorecError(Exception):
    """Base class for all panorec errors."""


class DomainError(PanorecError, ValueError):
    """An operation was called outside its documented domain (bad inputs,
    violated preconditions, empty data where non-empty is required)."""


class ConfigError(PanorecError, ValueError):
    """A configuration document or CLI argument set is invalid."""


class PlyParseError(PanorecError, ValueError):
    """A PLY document could not be parsed.

    Carries the 1-based header line number where parsing failed.
    """

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line
