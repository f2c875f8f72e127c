"""Derandomized-knockoff asymptotics: self-consistent system and power formulas.

The joint lasso on the concatenated design decouples into two scalar
soft-threshold problems: the signal coordinate sees the field

    h = m_hat * w0 + sqrt(chi_hat) * xi + sqrt(v_hat) * eta

while the knockoff coordinate sees the purely algorithmic field

    h_knock = sqrt(v_hat_knock) * eta_knock,

so its statistics are determined by v_hat_knock alone.  Selection compares
the coefficient magnitudes: a coordinate is selected when
|w| - |w_knock| exceeds z_th, and the derandomized variant thresholds the
probability of that event over the knockoff randomness.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss

from .fixed_point import FixedPointReport, SolverSettings, solve_damped
from .special_math import (
    gauss_density,
    gauss_upper_tail,
    soft_threshold_gaussian_moments,
)
from .ss_theory import (
    DEFAULT_QUAD,
    OuterQuadrature,
    ProblemConfig,
    _tpr_fdr_from_pi,
    scalar_order_moments,
)

__all__ = [
    "DkoOrderParams",
    "DkoHatParams",
    "DkoSolution",
    "SelectionThresholds",
    "dko_hat_update",
    "dko_order_update",
    "knockoff_coordinate_stats",
    "solve_dko",
    "dko_selection_probability",
    "dko_tpr_fdr",
    "vanilla_ko_tpr_fdr",
    "dko_prediction_error",
]


@dataclass(frozen=True)
class DkoOrderParams:
    """Signal-block order parameters plus the knockoff block (v_knock, chi_knock)."""

    q: float
    m: float
    chi: float
    v: float
    v_knock: float
    chi_knock: float

    def as_vector(self) -> np.ndarray:
        return np.array([self.q, self.m, self.chi, self.v, self.v_knock, self.chi_knock])

    @staticmethod
    def from_vector(x: np.ndarray) -> "DkoOrderParams":
        return DkoOrderParams(*map(float, x))


@dataclass(frozen=True)
class DkoHatParams:
    """Conjugate parameters; q_hat = q_hat_knock and v_hat_knock = chi_hat + v_hat."""

    q_hat: float
    q_hat_knock: float
    m_hat: float
    chi_hat: float
    v_hat: float
    v_hat_knock: float


@dataclass(frozen=True)
class DkoSolution:
    config: ProblemConfig
    order: DkoOrderParams
    hats: DkoHatParams
    report: FixedPointReport


@dataclass(frozen=True)
class SelectionThresholds:
    """Coefficient-difference threshold z_th and probability threshold pi_th."""

    z_th: float
    pi_th: float

    def __post_init__(self):
        if self.z_th < 0:
            raise ValueError(f"z_th must be nonnegative, got {self.z_th}")
        if not 0.0 <= self.pi_th <= 1.0:
            raise ValueError(f"pi_th must lie in [0, 1], got {self.pi_th}")


def dko_hat_update(order: DkoOrderParams, config: ProblemConfig) -> DkoHatParams:
    """Map order parameters to conjugate parameters.

    With d = 1 + chi + chi_knock and e = q - 2m + rho + delta:

        q_hat = q_hat_knock = alpha / d
        chi_hat             = alpha e / d^2
        v_hat               = alpha (v + v_knock) / d^2
        v_hat_knock         = chi_hat + v_hat
    """
    vec = order.as_vector()
    if not np.all(np.isfinite(vec)):
        raise ValueError(f"order parameters must be finite, got {order}")
    d = 1.0 + max(order.chi, 0.0) + max(order.chi_knock, 0.0)
    if d <= 0:
        raise ValueError(f"susceptibility denominator must be positive, got {d}")
    err = order.q - 2.0 * order.m + config.rho + config.delta
    q_hat = config.alpha / d
    chi_hat = max(config.alpha * err / (d * d), 0.0)
    v_hat = max(config.alpha * (order.v + order.v_knock) / (d * d), 0.0)
    return DkoHatParams(
        q_hat=q_hat,
        q_hat_knock=q_hat,
        m_hat=q_hat,
        chi_hat=chi_hat,
        v_hat=v_hat,
        v_hat_knock=chi_hat + v_hat,
    )


def knockoff_coordinate_stats(
    v_hat_knock: float, lam: float, q_hat_knock: float
) -> tuple[float, float]:
    """(v_knock, chi_knock) of the knockoff coordinate.

    Functions of the knockoff field scale alone: the second moment and the
    open-coordinate fraction of soft_threshold(sqrt(v_hat_knock) * eta) / q_hat.
    """
    mom = soft_threshold_gaussian_moments(0.0, v_hat_knock, lam, q_hat_knock)
    return mom.second_moment, mom.mean_derivative


def dko_order_update(
    hats: DkoHatParams, config: ProblemConfig, quad: OuterQuadrature = DEFAULT_QUAD
) -> DkoOrderParams:
    """Map conjugate parameters back to order parameters."""
    signal = scalar_order_moments(
        hats.q_hat, hats.m_hat, hats.chi_hat, hats.v_hat, config.rho, config.lam, quad
    )
    v_knock, chi_knock = knockoff_coordinate_stats(
        hats.v_hat_knock, config.lam, hats.q_hat_knock
    )
    return DkoOrderParams(
        q=signal.q,
        m=signal.m,
        chi=signal.chi,
        v=signal.v,
        v_knock=v_knock,
        chi_knock=chi_knock,
    )


_NONNEG = (0, 2, 3, 4, 5)  # q, chi, v, v_knock, chi_knock


def solve_dko(
    config: ProblemConfig,
    settings: SolverSettings = SolverSettings(),
    quad: OuterQuadrature = DEFAULT_QUAD,
) -> DkoSolution:
    """Solve the dKO self-consistent system by damped fixed-point iteration."""
    init = DkoOrderParams(
        q=config.rho, m=config.rho / 2.0, chi=1.0, v=0.1, v_knock=0.1, chi_knock=1.0
    ).as_vector()

    def update(x: np.ndarray) -> np.ndarray:
        order = DkoOrderParams.from_vector(x)
        hats = dko_hat_update(order, config)
        return dko_order_update(hats, config, quad).as_vector()

    report = solve_damped(update, init, settings, nonneg_indices=_NONNEG)
    order = DkoOrderParams.from_vector(report.solution)
    hats = dko_hat_update(order, config)
    return DkoSolution(config=config, order=order, hats=hats, report=report)


# Nodes for the continuous part of the |w_knock| distribution, in units of the
# knockoff field scale beyond lam; the omitted tail mass is below H(13) ~ 6e-39.
_GL_SPAN = 13.0
_GL_N = 201
_gl_x, _gl_w = leggauss(_GL_N)
_GL_NODES = 0.5 * _GL_SPAN * (_gl_x + 1.0)
_GL_WEIGHTS = 0.5 * _GL_SPAN * _gl_w


def _signal_exceed_prob(a, t, v_hat: float, lam: float, q_hat: float):
    """P_eta(|w| > t) with w the signal-coordinate estimator at field offset a."""
    thr = lam + q_hat * np.asarray(t, dtype=float)
    a = np.asarray(a, dtype=float)
    if v_hat == 0.0:
        return (np.abs(a) > thr).astype(float)
    s = np.sqrt(v_hat)
    return gauss_upper_tail((thr - a) / s) + gauss_upper_tail((thr + a) / s)


def selection_probability_from_field(a, z_th, hats: DkoHatParams, lam: float):
    """P(|w| - |w_knock| > z_th) over both algorithmic noise channels.

    |w_knock| carries an atom at zero of mass 1 - 2 H(lam / s_k) plus a
    truncated-Gaussian tail; the tail is integrated by fixed Gauss-Legendre
    quadrature against the exact two-tail probability of the signal
    coordinate.  Broadcasts over ``a`` and ``z_th``.
    """
    a = np.asarray(a, dtype=float)
    z = np.asarray(z_th, dtype=float)
    s_k = np.sqrt(hats.v_hat_knock)
    if s_k == 0.0:
        return _signal_exceed_prob(a, z, hats.v_hat, lam, hats.q_hat)
    z_lam = lam / s_k
    atom_mass = 1.0 - 2.0 * float(gauss_upper_tail(z_lam))
    atom = atom_mass * _signal_exceed_prob(a, z, hats.v_hat, lam, hats.q_hat)
    t = z[..., None] + (s_k / hats.q_hat_knock) * _GL_NODES
    probs = _signal_exceed_prob(a[..., None], t, hats.v_hat, lam, hats.q_hat)
    tail = 2.0 * (probs * gauss_density(z_lam + _GL_NODES)) @ _GL_WEIGHTS
    return atom + tail


def dko_selection_probability(
    xi: float, w0: float, z_th: float, sol: DkoSolution
) -> float:
    """Selection probability of a coordinate at local-field coordinates (xi, w0)."""
    if z_th < 0:
        raise ValueError(f"z_th must be nonnegative, got {z_th}")
    hats = sol.hats
    a = hats.m_hat * w0 + np.sqrt(hats.chi_hat) * xi
    return float(selection_probability_from_field(a, z_th, hats, sol.config.lam))


def _pi_bracket(hats: DkoHatParams, lam: float, z_th: float) -> float:
    # Largest |w_knock| retained by the quadrature plus a deep signal tail.
    s_k = np.sqrt(hats.v_hat_knock)
    return (
        lam
        + hats.q_hat * z_th
        + _GL_SPAN * s_k
        + 42.0 * np.sqrt(hats.v_hat)
        + 1.0
    )


def dko_tpr_fdr(sol: DkoSolution, thresholds: SelectionThresholds) -> tuple[float, float]:
    """TPR and FDR of derandomized knockoffs at the given thresholds."""
    hats = sol.hats
    lam = sol.config.lam

    def pi_of_a(a: float) -> float:
        return float(selection_probability_from_field(a, thresholds.z_th, hats, lam))

    hi = _pi_bracket(hats, lam, thresholds.z_th)
    return _tpr_fdr_from_pi(
        pi_of_a, thresholds.pi_th, hats.m_hat, hats.chi_hat, sol.config.rho, hi
    )


def vanilla_ko_tpr_fdr(
    sol: DkoSolution, z_th: float, quad: OuterQuadrature = DEFAULT_QUAD
) -> tuple[float, float]:
    """TPR and FDR of single-draw knockoff selection.

    Averages the selection probability itself over the field distribution
    instead of thresholding it.
    """
    if z_th < 0:
        raise ValueError(f"z_th must be nonnegative, got {z_th}")
    hats = sol.hats
    lam = sol.config.lam
    rho = sol.config.rho
    # The selection probability turns on near |a| = lam + q_hat z_th over a
    # width set by both noise channels.
    center = lam + hats.q_hat * z_th
    width = np.sqrt(hats.v_hat) + np.sqrt(hats.v_hat_knock)

    def field_average(sigma: float) -> float:
        nodes, weights = quad.nodes(sigma, center, width)
        return float(weights @ selection_probability_from_field(nodes, z_th, hats, lam))

    pi_null = field_average(np.sqrt(hats.chi_hat))
    pi_sig = field_average(np.sqrt(hats.m_hat**2 + hats.chi_hat))
    tpr = pi_sig
    numerator = (1.0 - rho) * pi_null
    denominator = numerator + rho * pi_sig
    fdr = numerator / denominator if denominator > 0.0 else 0.0
    return tpr, fdr


def dko_prediction_error(sol: DkoSolution) -> float:
    """Fresh-sample squared error of one knockoff-lasso draw.

    The SS decomposition plus the knockoff block's own variance v_knock,
    which enters the joint regression's residual.
    """
    o = sol.order
    return (o.q + o.v) - 2.0 * o.m + sol.config.rho + sol.config.delta + o.v_knock
