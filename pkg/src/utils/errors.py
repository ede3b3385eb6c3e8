"""Exceptions raised across the simulator and the harness."""

from typing import List, Optional


class BrinkmanError(Exception):
    """Base class for every error raised by this project."""


class ConfigError(BrinkmanError, ValueError):
    """Experiment configuration is malformed or violates an invariant."""

    def __init__(self, section: str, message: str):
        self.section = section
        super().__init__(f"[{section}] {message}")


class QuadratureResolutionError(BrinkmanError, ValueError):
    """The grid does not resolve the oscillation scale eps."""

    def __init__(self, eps: float, points_per_cell: float, required: int):
        self.eps = eps
        self.points_per_cell = points_per_cell
        self.required = required
        super().__init__(
            f"grid resolves eps={eps:g} with {points_per_cell:.2f} points per cell "
            f"per dimension; at least {required} are required"
        )


class SimulationError(BrinkmanError, FloatingPointError):
    """Non-finite values appeared during a time-stepping run."""

    def __init__(self, message: str, step: Optional[int] = None, path: Optional[int] = None):
        self.message = message
        self.step = step
        self.path = path
        where = []
        if path is not None:
            where.append(f"path {path}")
        if step is not None:
            where.append(f"step {step}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(f"{prefix}{message}")

    def with_path(self, path: int) -> "SimulationError":
        return SimulationError(self.message, step=self.step, path=path)


class SolverError(BrinkmanError, RuntimeError):
    """Linear solve of the implicit step failed."""

    def __init__(self, message: str, condition_estimate: float):
        self.condition_estimate = condition_estimate
        super().__init__(f"{message} (condition estimate {condition_estimate:.3e})")


class PicardConvergenceError(BrinkmanError, RuntimeError):
    """Fixed-point iteration of the averaged step did not converge."""

    def __init__(self, step: int, residuals: List[float]):
        self.step = step
        self.residuals = list(residuals)
        tail = ", ".join(f"{r:.3e}" for r in self.residuals[-5:])
        super().__init__(
            f"Picard iteration did not converge at step {step} after "
            f"{len(self.residuals)} iterations; last residuals: {tail}"
        )


class MissingSnapshotsError(BrinkmanError, ValueError):
    """A diagnostic needs fast-field snapshots the trajectory did not keep."""
