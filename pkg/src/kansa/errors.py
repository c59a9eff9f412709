"""Exception hierarchy shared by all modules."""


class KansaError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(KansaError, ValueError):
    """Invalid or unknown configuration entry."""


class NotUnisolventError(KansaError, ValueError):
    """Sites do not determine a polynomial of the tail space uniquely."""


class IllConditionedError(KansaError, ArithmeticError):
    """Interpolation system is singular or too ill-conditioned to trust."""

    def __init__(self, condition: float, limit: float):
        self.condition = condition
        self.limit = limit
        super().__init__(
            f"interpolation system condition estimate {condition:.3e} exceeds {limit:.1e}"
        )


class ConvergenceError(KansaError, ArithmeticError):
    """Fixed-point iteration of an implicit step did not converge."""

    def __init__(self, step: int, iterations: int, increment: float):
        self.step = step
        self.iterations = iterations
        self.increment = increment
        super().__init__(
            f"fixed-point iteration at step k={step} did not converge in "
            f"{iterations} iterations (last increment {increment:.3e}); the implicit "
            "relation may lack a unique solution at this resolution"
        )


class EvaluationError(KansaError, RuntimeError):
    """A user-supplied evaluator raised while being collocated at a site."""

    def __init__(self, site: int, point, cause: BaseException):
        self.site = site
        super().__init__(f"evaluator failed at site j={site} x={tuple(float(c) for c in point)}: {cause!r}")
