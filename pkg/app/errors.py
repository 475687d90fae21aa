"""
Exception hierarchy shared by the solvers, the CLI and the results service.
"""

from typing import List, Optional, Sequence


class SolverError(Exception):
    """Base class for every error raised by the toolkit."""


class ConfigError(SolverError):
    """Scenario configuration failed to parse or validate."""

    def __init__(self, message: str, field: Optional[str] = None, line: Optional[int] = None):
        self.field = field
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field:
            where.append(f"field '{field}'")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(f"{prefix}{message}")


class InvalidInput(SolverError, ValueError):
    """Rejected argument: NaN data, out-of-range index, mismatched shapes."""


class MeshError(SolverError):
    """Mesh failed validation or could not be imported."""


class LocalConvergenceError(SolverError):
    """The return-map Newton iteration did not converge."""

    def __init__(self, residual: float, iterations: int):
        self.residual = float(residual)
        self.iterations = iterations
        super().__init__(
            f"return map did not converge after {iterations} iterations (residual {residual:.3e})"
        )


class ReturnMapError(SolverError):
    """Return-map failure located in a history sweep."""

    def __init__(self, element: int, gauss: int, step: int, cause: Exception):
        self.element = element
        self.gauss = gauss
        self.step = step
        self.cause = cause
        super().__init__(f"return map failed at element {element}, gauss point {gauss}, step {step}: {cause}")


class NewtonDivergence(SolverError):
    """Global Newton iteration failed, even after sub-incrementation."""

    partial = None

    def __init__(self, message: str, trace: Sequence[float] = (), step: Optional[int] = None):
        self.trace: List[float] = list(trace)
        self.step = step
        at = f" at step {step}" if step is not None else ""
        super().__init__(f"{message}{at}")


class SingularSystemError(SolverError):
    """Factorization of a constrained system matrix failed."""


class VanishingAmplitude(SolverError):
    """The large-time amplitudes of the mode in progress are all zero."""

    def __init__(self):
        super().__init__("vanishing temporal amplitude")


class ModeEnergyVanished(SolverError):
    """The small-time field of the mode in progress carries no energy."""

    def __init__(self):
        super().__init__("mode energy vanished")


class RedundantMode(SolverError):
    """The newest mode is linearly dependent on the previous ones."""

    def __init__(self, mode: int):
        self.mode = mode
        super().__init__(f"redundant mode {mode}: coefficient system is rank deficient")


class StagnationError(SolverError):
    """Fixed-point corrections stopped decreasing."""

    def __init__(self, history: Sequence[float]):
        self.history = list(history)
        last = self.history[-1] if self.history else float("nan")
        super().__init__(f"fixed-point iteration stagnated (last correction {last:.3e})")
