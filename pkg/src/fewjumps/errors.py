"""Exception hierarchy shared by the library and the CLI."""


class FewJumpsError(Exception):
    """Base class for all library errors."""


class PreconditionError(FewJumpsError, ValueError):
    """An argument violates an operation's documented precondition."""


class EvaluationError(FewJumpsError, ArithmeticError):
    """A rate-function evaluator produced NaN or a numerical routine failed."""


class UnsupportedError(FewJumpsError, NotImplementedError):
    """The request is valid but outside the supported size envelope."""


class ConfigError(FewJumpsError, ValueError):
    """A run configuration failed schema or consistency validation."""
