"""Exception hierarchy.

The CLI maps the three top-level families onto exit codes: configuration
problems exit with 1, numerical failures with 2 and I/O or data-format
problems with 3.
"""


class GHierTSError(Exception):
    """Base class for all errors raised by the package."""


class ConfigError(GHierTSError):
    pass


class NumericalError(GHierTSError):
    pass


class DataError(GHierTSError):
    pass


class NotPositiveDefinite(NumericalError):
    """A matrix expected to be a covariance or precision failed Cholesky."""


class NonBlockDiagonalHyperPrior(ConfigError):
    """The factored hyper-posterior needs a hyper-prior that does not couple latents."""


class DimensionMismatch(ConfigError):
    pass


class EmptyPool(ConfigError):
    pass


class UnboundedContext(ConfigError):
    pass


class ParseError(ConfigError):
    def __init__(self, line: int, key: str, message: str = "") -> None:
        self.line = line
        self.key = key
        text = f"line {line}: {key!r}"
        if message:
            text += f": {message}"
        super().__init__(text)


class ValidationError(ConfigError):
    pass


class FormatError(DataError):
    def __init__(self, line: int, message: str) -> None:
        self.line = line
        super().__init__(f"line {line}: {message}")


class DegenerateData(DataError):
    pass
