"""Exception types shared across faithkit."""


class FaithkitError(Exception):
    """Base class for all toolkit errors."""


class DataError(FaithkitError, ValueError):
    """Malformed or invariant-violating corpus data."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


class ContractError(FaithkitError):
    """A model backend violated the contract of the interface it implements."""

    def __init__(self, interface, message):
        self.interface = interface
        super().__init__(f"{interface}: {message}")


class TokenizationError(FaithkitError, ValueError):
    def __init__(self, unknown):
        self.unknown = sorted(set(unknown))
        super().__init__("unknown tokens: " + ", ".join(repr(t) for t in self.unknown))


class UndefinedCorrelationError(FaithkitError, ValueError):
    """Correlation requested on a series with zero rank variance."""


class TrainingDivergedError(FaithkitError, RuntimeError):
    def __init__(self, step, loss):
        self.step = step
        self.loss = loss
        super().__init__(f"loss became {loss} at step {step}")
