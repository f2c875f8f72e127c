"""Noiseless perfect-reconstruction boundary in effective dimensions.

Each algorithm is mapped to (alpha_eff, rho_eff): unique data points and
nonzero coefficients per estimated dimension.  Recovery holds when

    alpha_eff > 2 (1 - rho_eff) H(1 / sqrt(V)) - rho_eff

with V the smallest positive root of

    alpha_eff V = 2 (1 - rho_eff) ((1 + V) H(1/sqrt(V)) - sqrt(V) phi(1/sqrt(V)))
                  + rho_eff (1 + V).

Below the boundary the V equation loses its root (the branches merge), so a
missing root is reported as a distinct error and interpreted by the boundary
scan as non-recovery.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import optimize

from .special_math import gauss_density, gauss_upper_tail

__all__ = [
    "Algorithm",
    "EffectiveDims",
    "PhasePoint",
    "NoFiniteVError",
    "solve_v",
    "perfect_recovery_condition",
    "effective_dims",
    "critical_alpha_eff",
    "phase_boundary_curve",
]


class Algorithm(str, Enum):
    SS = "ss"
    DKO = "dko"


@dataclass(frozen=True)
class EffectiveDims:
    """Unique samples and nonzeros per estimated dimension."""

    alpha_eff: float
    rho_eff: float

    def __post_init__(self):
        if self.alpha_eff <= 0:
            raise ValueError(f"alpha_eff must be positive, got {self.alpha_eff}")
        if not 0.0 < self.rho_eff < 1.0:
            raise ValueError(f"rho_eff must lie in (0, 1), got {self.rho_eff}")


@dataclass(frozen=True)
class PhasePoint:
    """Critical sample ratio (original units) at one sparsity."""

    rho: float
    alpha_critical: float
    algorithm: str


class NoFiniteVError(RuntimeError):
    """The V equation has no positive finite root at these dimensions."""


_LOGV_LO, _LOGV_HI = np.log(1e-12), np.log(1e12)
_SCAN_POINTS = 4001


def _v_residual(v, alpha_eff: float, rho_eff: float):
    u = 1.0 / np.sqrt(v)
    rhs = 2.0 * (1.0 - rho_eff) * (
        (1.0 + v) * gauss_upper_tail(u) - np.sqrt(v) * gauss_density(u)
    ) + rho_eff * (1.0 + v)
    return alpha_eff * v - rhs


def solve_v(alpha_eff: float, rho_eff: float) -> float:
    """Smallest positive root of the V equation, residual below 1e-12.

    Raises NoFiniteVError when the bracket [1e-12, 1e12] contains no upward
    sign change (at or below the reconstruction boundary).
    """
    logv = np.linspace(_LOGV_LO, _LOGV_HI, _SCAN_POINTS)
    vals = _v_residual(np.exp(logv), alpha_eff, rho_eff)
    crossings = np.where((vals[:-1] < 0.0) & (vals[1:] >= 0.0))[0]
    if crossings.size == 0:
        raise NoFiniteVError(
            f"no finite V at alpha_eff={alpha_eff}, rho_eff={rho_eff}"
        )
    i = crossings[0]
    log_root = optimize.brentq(
        lambda t: _v_residual(np.exp(t), alpha_eff, rho_eff),
        logv[i],
        logv[i + 1],
        xtol=1e-15,
        rtol=8.9e-16,
        maxiter=200,
    )
    return float(np.exp(log_root))


def perfect_recovery_condition(dims: EffectiveDims) -> bool:
    """Whether the noiseless l1 estimator recovers the truth exactly."""
    v = solve_v(dims.alpha_eff, dims.rho_eff)
    threshold = (
        2.0 * (1.0 - dims.rho_eff) * float(gauss_upper_tail(1.0 / np.sqrt(v)))
        - dims.rho_eff
    )
    return dims.alpha_eff > threshold


def effective_dims(
    algorithm: Algorithm | str, alpha: float, rho: float, mu_b: float = 1.0
) -> EffectiveDims:
    """Map original (alpha, rho) to effective dimensions per algorithm.

    SS keeps the dimension but loses duplicated bootstrap points:
    alpha_eff = (1 - exp(-mu_b)) alpha.  dKO doubles the dimension:
    (alpha / 2, rho / 2).
    """
    algorithm = Algorithm(algorithm)
    if algorithm is Algorithm.SS:
        return EffectiveDims(alpha_eff=(1.0 - np.exp(-mu_b)) * alpha, rho_eff=rho)
    return EffectiveDims(alpha_eff=alpha / 2.0, rho_eff=rho / 2.0)


def _recovered(alpha_eff: float, rho_eff: float) -> bool:
    try:
        return perfect_recovery_condition(EffectiveDims(alpha_eff, rho_eff))
    except NoFiniteVError:
        return False


def critical_alpha_eff(
    rho_eff: float, rel_tol: float = 1e-6, lo: float = 1e-4, hi: float = 2.0
) -> float:
    """Critical alpha_eff at fixed rho_eff, bisected to rel_tol.

    The bracket widens automatically until it straddles the flip.
    """
    while _recovered(lo, rho_eff):
        lo /= 4.0
        if lo < 1e-12:
            raise RuntimeError("could not bracket the boundary from below")
    while not _recovered(hi, rho_eff):
        hi *= 2.0
        if hi > 1e6:
            raise RuntimeError("could not bracket the boundary from above")
    while hi - lo > rel_tol * 0.5 * (hi + lo):
        mid = 0.5 * (lo + hi)
        if _recovered(mid, rho_eff):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def phase_boundary_curve(
    algorithm: Algorithm | str,
    rho_grid,
    mu_b: float = 1.0,
    rel_tol: float = 1e-6,
) -> list[PhasePoint]:
    """Critical alpha (original units) against sparsity for one algorithm.

    The boundary is located once in effective units, then mapped back, so the
    SS curves at different mu_b are exact rescalings of each other.
    """
    algorithm = Algorithm(algorithm)
    points = []
    for rho in np.asarray(rho_grid, dtype=float):
        if not 0.0 < rho < 1.0:
            raise ValueError(f"rho grid must lie in (0, 1), got {rho}")
        if algorithm is Algorithm.SS:
            alpha_c = critical_alpha_eff(rho, rel_tol) / (1.0 - np.exp(-mu_b))
            label = f"ss_mu_b={mu_b:g}"
        else:
            alpha_c = 2.0 * critical_alpha_eff(rho / 2.0, rel_tol)
            label = "dko"
        points.append(PhasePoint(rho=float(rho), alpha_critical=alpha_c, algorithm=label))
    return points
