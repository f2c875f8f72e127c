"""Damped fixed-point iteration shared by the SS and dKO systems.

The composite update maps the full vector of order parameters to itself;
convergence is measured as the sup-norm residual of the undamped map, so the
reported solution quality does not depend on the damping factor.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = ["SolverSettings", "FixedPointReport", "DivergenceError", "solve_damped"]


class DivergenceError(RuntimeError):
    """Update produced non-finite values; carries the last finite iterate."""

    def __init__(self, message: str, last_iterate: np.ndarray, iterations: int):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.iterations = iterations


@dataclass(frozen=True)
class SolverSettings:
    """Damped-iteration controls.

    damping is the fraction of the new iterate mixed in per step; min_clip
    floors variance-like coordinates after each step.
    """

    damping: float = 0.5
    tol: float = 1e-10
    max_iter: int = 10_000
    min_clip: float = 1e-14

    def __post_init__(self):
        if not 0.0 < self.damping <= 1.0:
            raise ValueError(f"damping must lie in (0, 1], got {self.damping}")
        if self.tol <= 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be >= 1, got {self.max_iter}")
        if self.min_clip < 0:
            raise ValueError(f"min_clip must be >= 0, got {self.min_clip}")


@dataclass(frozen=True)
class FixedPointReport:
    """Outcome of a damped solve; converged implies residual <= tol."""

    solution: np.ndarray
    residual: float
    iterations: int
    converged: bool


def solve_damped(
    update: Callable[[np.ndarray], np.ndarray],
    init: Sequence[float],
    settings: SolverSettings = SolverSettings(),
    nonneg_indices: Sequence[int] = (),
) -> FixedPointReport:
    """Iterate x <- (1 - damping) x + damping update(x) to a fixed point.

    ``nonneg_indices`` marks variance-like coordinates floored at
    settings.min_clip after every step.  Returns once the sup-norm residual
    ||update(x) - x|| drops to settings.tol, or with converged=False at
    max_iter.  Raises DivergenceError if the update goes non-finite.
    """
    x = np.asarray(init, dtype=float).copy()
    if x.ndim != 1:
        raise ValueError("init must be a 1D vector")
    nonneg = np.asarray(nonneg_indices, dtype=int)
    if nonneg.size:
        x[nonneg] = np.maximum(x[nonneg], settings.min_clip)

    residual = np.inf
    for iteration in range(1, settings.max_iter + 1):
        proposed = np.asarray(update(x), dtype=float)
        if proposed.shape != x.shape:
            raise ValueError("update must preserve the vector length")
        if not np.all(np.isfinite(proposed)):
            raise DivergenceError(
                f"non-finite update at iteration {iteration}", x, iteration
            )
        residual = float(np.max(np.abs(proposed - x)))
        if residual <= settings.tol:
            # return the post-update point: for a contraction it is strictly
            # closer to the fixed point and inherits the residual bound
            if nonneg.size:
                proposed[nonneg] = np.maximum(proposed[nonneg], settings.min_clip)
            return FixedPointReport(proposed, residual, iteration, True)
        x = (1.0 - settings.damping) * x + settings.damping * proposed
        if nonneg.size:
            x[nonneg] = np.maximum(x[nonneg], settings.min_clip)

    return FixedPointReport(x, residual, settings.max_iter, False)
