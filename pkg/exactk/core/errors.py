from typing import Optional


class ExactKError(Exception):
    """Base class for every error raised by exactk."""


class ContractViolation(ExactKError, ValueError):
    """A precondition or shape contract was broken by the caller."""


class InfeasibleError(ExactKError):
    """No feasible clique, card or decode exists for the request."""


class ConfigurationError(ExactKError, ValueError):
    pass


class DataError(ExactKError, ValueError):
    pass


class SampleParseError(DataError):
    def __init__(self, message: str, line: int, path: Optional[str] = None) -> None:
        self.line = line
        self.path = path
        where = f"{path}:{line}" if path else f"line {line}"
        super().__init__(f"{where}: {message}")
