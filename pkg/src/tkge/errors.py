class TKGEError(Exception):
    """Base class for library errors."""


class MalformedLineError(TKGEError, ValueError):
    def __init__(self, message: str, line_no: int = 0):
        super().__init__(message)
        self.line_no = line_no


class UnknownSymbolError(TKGEError, KeyError):
    def __init__(self, message: str, line_no: int = 0):
        super().__init__(message)
        self.line_no = line_no

    def __str__(self) -> str:
        return self.args[0]


class TimeParseError(TKGEError, ValueError):
    pass


class EmptyInputError(TKGEError, ValueError):
    pass


class CannotCorruptError(TKGEError, ValueError):
    pass


class CheckpointError(TKGEError, ValueError):
    pass


class ConfigError(TKGEError, ValueError):
    """Raised with every validation problem found, not just the first."""

    def __init__(self, problems: list[str]):
        super().__init__("; ".join(problems))
        self.problems = problems


class DivergenceError(TKGEError, FloatingPointError):
    pass
