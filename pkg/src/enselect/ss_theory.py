"""Stability-selection asymptotics: self-consistent system and power formulas.

The bootstrap-lasso estimator is described coordinate-wise by the scalar
soft-threshold problem with local field

    h = m_hat * w0 + sqrt(chi_hat) * xi + sqrt(v_hat) * eta

where xi carries the data randomness, eta the resampling randomness, and the
conjugate (hat) parameters close the loop with the order parameters
(q, m, chi, v).  The vanilla lasso is the degenerate case of a deterministic
unit resampling count, which kills the eta channel (v_hat = 0).

Coefficient prior: w0 ~ rho * N(0,1) + (1-rho) * delta_0, so every outer
average splits into a null branch (field scale sqrt(chi_hat)) and a signal
branch (w0 absorbed into the Gaussian, scale sqrt(m_hat^2 + chi_hat)).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .fixed_point import FixedPointReport, SolverSettings, solve_damped
from .special_math import (
    gauss_upper_tail,
    gaussian_feature_nodes,
    poisson_truncated_expect,
    soft_threshold_gaussian_moments,
)

__all__ = [
    "ProblemConfig",
    "OuterQuadrature",
    "SsOrderParams",
    "SsHatParams",
    "SsSolution",
    "ss_hat_update",
    "ss_order_update",
    "solve_ss",
    "vanilla_lasso_solution",
    "ss_selection_probability",
    "ss_tpr_fdr",
    "ss_prediction_error",
]

DEFAULT_MASS_TOL = 1e-12


@dataclass(frozen=True)
class OuterQuadrature:
    """Resolution of the composite rule for the deterministic-field averages.

    The soft-threshold moments vary on the eta-noise scale near |a| = lam,
    so the Gaussian average over a uses panels refined there; doubling
    nodes_per_panel is the resolution-doubling knob.
    """

    nodes_per_panel: int = 32
    span: float = 8.5
    feature_span: float = 8.0
    panel_factor: float = 5.0

    def nodes(self, sigma: float, lam: float, width: float):
        return gaussian_feature_nodes(
            sigma,
            lam,
            width,
            nodes_per_panel=self.nodes_per_panel,
            span=self.span,
            feature_span=self.feature_span,
            panel_factor=self.panel_factor,
        )


DEFAULT_QUAD = OuterQuadrature()


@dataclass(frozen=True)
class ProblemConfig:
    """Model and algorithm parameters.

    alpha: sample ratio M/N.  rho: fraction of nonzero coefficients.
    delta: noise variance.  lam: l1 strength on the raw sum-of-squares
    objective.  mu_b: bootstrap resampling rate M_B/M (SS only).
    """

    alpha: float
    rho: float
    delta: float
    lam: float
    mu_b: float = 1.0

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError(f"rho must lie in [0, 1], got {self.rho}")
        if self.delta < 0:
            raise ValueError(f"delta must be nonnegative, got {self.delta}")
        if self.lam <= 0:
            raise ValueError(f"lam must be positive, got {self.lam}")
        if self.mu_b <= 0:
            raise ValueError(f"mu_b must be positive, got {self.mu_b}")


@dataclass(frozen=True)
class SsOrderParams:
    """Order parameters of the resampling-averaged estimator."""

    q: float
    m: float
    chi: float
    v: float

    def as_vector(self) -> np.ndarray:
        return np.array([self.q, self.m, self.chi, self.v])

    @staticmethod
    def from_vector(x: np.ndarray) -> "SsOrderParams":
        return SsOrderParams(*map(float, x))


@dataclass(frozen=True)
class SsHatParams:
    """Conjugate parameters of the effective scalar field (q_hat = m_hat)."""

    q_hat: float
    m_hat: float
    chi_hat: float
    v_hat: float


@dataclass(frozen=True)
class SsSolution:
    config: ProblemConfig
    order: SsOrderParams
    hats: SsHatParams
    report: FixedPointReport


def _poisson_fs(chi: float, mu_b: float, mass_tol: float) -> tuple[float, float]:
    """f1 = E[c/(1+chi c)], f2 = E[(c/(1+chi c))^2] for c ~ Poisson(mu_b)."""
    f1 = poisson_truncated_expect(mu_b, lambda c: c / (1.0 + chi * c), mass_tol)
    f2 = poisson_truncated_expect(mu_b, lambda c: (c / (1.0 + chi * c)) ** 2, mass_tol)
    return f1, f2


def ss_hat_update(
    order: SsOrderParams,
    config: ProblemConfig,
    mass_tol: float = DEFAULT_MASS_TOL,
    deterministic_counts: bool = False,
) -> SsHatParams:
    """Map order parameters to conjugate parameters.

    With resampling-count moments f1, f2 and the residual power
    e = q - 2m + rho + delta:

        q_hat = m_hat = alpha f1
        chi_hat       = alpha f1^2 e
        v_hat         = alpha ((f2 - f1^2) e + v f2)

    ``deterministic_counts`` replaces c ~ Poisson(mu_b) by c = 1 (vanilla
    lasso), which gives f2 = f1^2 and hence v_hat = alpha v f1^2.
    """
    vec = order.as_vector()
    if not np.all(np.isfinite(vec)):
        raise ValueError(f"order parameters must be finite, got {order}")
    chi = max(order.chi, 0.0)
    if deterministic_counts:
        f1 = 1.0 / (1.0 + chi)
        f2 = f1 * f1
    else:
        f1, f2 = _poisson_fs(chi, config.mu_b, mass_tol)
    err = order.q - 2.0 * order.m + config.rho + config.delta
    q_hat = config.alpha * f1
    chi_hat = max(config.alpha * f1 * f1 * err, 0.0)
    v_hat = max(config.alpha * ((f2 - f1 * f1) * err + order.v * f2), 0.0)
    return SsHatParams(q_hat=q_hat, m_hat=q_hat, chi_hat=chi_hat, v_hat=v_hat)


def _two_tail_mass(threshold: float, sigma: float) -> float:
    """P(|N(0, sigma^2)| > threshold); the sigma = 0 limit is an indicator."""
    if sigma <= 0.0:
        return 1.0 if threshold < 0.0 else 0.0
    return float(2.0 * gauss_upper_tail(threshold / sigma))


def _branch_q_v(
    sigma_a: float, v_hat: float, lam: float, q_hat: float, quad: OuterQuadrature
) -> tuple[float, float]:
    """E_a[mean^2] and E_a[var] over a ~ N(0, sigma_a^2) for one w0 branch."""
    nodes, weights = quad.nodes(sigma_a, lam, np.sqrt(v_hat))
    mom = soft_threshold_gaussian_moments(nodes, v_hat, lam, q_hat)
    q_part = float(weights @ (mom.mean**2))
    v_part = float(weights @ np.maximum(mom.second_moment - mom.mean**2, 0.0))
    return q_part, v_part


def scalar_order_moments(
    q_hat: float,
    m_hat: float,
    chi_hat: float,
    v_hat: float,
    rho: float,
    lam: float,
    quad: OuterQuadrature = DEFAULT_QUAD,
) -> SsOrderParams:
    """Order parameters of the scalar estimator, mixing null and signal branches.

    q and v are Gaussian quadratures of the closed-form eta-moments; chi and m
    are exact Gaussian tail masses (for m via integration by parts on the
    Gaussian w0).  Shared by the SS and dKO signal coordinates.
    """
    if q_hat <= 0:
        raise ValueError(f"q_hat must be positive, got {q_hat}")
    sigma_null = np.sqrt(chi_hat)
    sigma_sig = np.sqrt(m_hat * m_hat + chi_hat)
    q_null, v_null = _branch_q_v(sigma_null, v_hat, lam, q_hat, quad)
    q_sig, v_sig = _branch_q_v(sigma_sig, v_hat, lam, q_hat, quad)
    q = (1.0 - rho) * q_null + rho * q_sig

    sig_tot_null = np.sqrt(chi_hat + v_hat)
    sig_tot_sig = np.sqrt(m_hat * m_hat + chi_hat + v_hat)
    open_null = _two_tail_mass(lam, sig_tot_null)
    open_sig = _two_tail_mass(lam, sig_tot_sig)
    chi = ((1.0 - rho) * open_null + rho * open_sig) / q_hat
    m = rho * m_hat * open_sig / q_hat
    v = (1.0 - rho) * v_null + rho * v_sig
    return SsOrderParams(q=q, m=m, chi=chi, v=v)


def ss_order_update(
    hats: SsHatParams, config: ProblemConfig, quad: OuterQuadrature = DEFAULT_QUAD
) -> SsOrderParams:
    """Map conjugate parameters back to order parameters."""
    return scalar_order_moments(
        hats.q_hat, hats.m_hat, hats.chi_hat, hats.v_hat, config.rho, config.lam, quad
    )


_INIT = SsOrderParams(q=0.0, m=0.0, chi=1.0, v=0.1)
_NONNEG = (0, 2, 3)  # q, chi, v


def _solve(
    config: ProblemConfig,
    settings: SolverSettings,
    quad: OuterQuadrature,
    mass_tol: float,
    deterministic_counts: bool,
) -> SsSolution:
    init = replace(_INIT, q=config.rho, m=config.rho / 2.0).as_vector()

    def update(x: np.ndarray) -> np.ndarray:
        order = SsOrderParams.from_vector(x)
        hats = ss_hat_update(order, config, mass_tol, deterministic_counts)
        return ss_order_update(hats, config, quad).as_vector()

    report = solve_damped(update, init, settings, nonneg_indices=_NONNEG)
    order = SsOrderParams.from_vector(report.solution)
    hats = ss_hat_update(order, config, mass_tol, deterministic_counts)
    return SsSolution(config=config, order=order, hats=hats, report=report)


def solve_ss(
    config: ProblemConfig,
    settings: SolverSettings = SolverSettings(),
    quad: OuterQuadrature = DEFAULT_QUAD,
    mass_tol: float = DEFAULT_MASS_TOL,
) -> SsSolution:
    """Solve the SS self-consistent system by damped fixed-point iteration.

    Deterministic for identical inputs; non-convergence is reported through
    ``solution.report.converged`` rather than raised.
    """
    return _solve(config, settings, quad, mass_tol, deterministic_counts=False)


def vanilla_lasso_solution(
    config: ProblemConfig,
    settings: SolverSettings = SolverSettings(),
    quad: OuterQuadrature = DEFAULT_QUAD,
) -> SsSolution:
    """SS system specialized to a deterministic resampling count of one.

    The eta channel then has the exact fixed point v = 0, so the solution is
    snapped onto it: selection is deterministic given (xi, w0).
    """
    sol = _solve(config, settings, quad, DEFAULT_MASS_TOL, deterministic_counts=True)
    order = replace(sol.order, v=0.0)
    hats = replace(sol.hats, v_hat=0.0)
    return SsSolution(config=config, order=order, hats=hats, report=sol.report)


def ss_selection_probability(xi: float, w0: float, sol: SsSolution) -> float:
    """P(resampled-lasso coordinate is nonzero) at local-field coordinates."""
    hats = sol.hats
    a = hats.m_hat * w0 + np.sqrt(hats.chi_hat) * xi
    mom = soft_threshold_gaussian_moments(a, hats.v_hat, sol.config.lam, hats.q_hat)
    return float(mom.nonzero_prob)


def _pi_from_field(a, hats: SsHatParams, lam: float):
    return soft_threshold_gaussian_moments(a, hats.v_hat, lam, hats.q_hat).nonzero_prob


def critical_field(pi_of_a, pi_th: float, hi: float, iters: int = 200) -> float:
    """Smallest |a| with pi(|a|) > pi_th, for pi even and nondecreasing in |a|.

    Plain bisection so that step discontinuities (deterministic selection)
    are handled as well as smooth profiles.
    """
    lo = 0.0
    if pi_of_a(hi) <= pi_th:
        raise ValueError("bracket does not contain the selection threshold")
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if pi_of_a(mid) > pi_th:
            hi = mid
        else:
            lo = mid
    return hi


def _tpr_fdr_from_pi(
    pi_of_a, pi_th: float, hats_m_hat: float, chi_hat: float, rho: float, hi: float
) -> tuple[float, float]:
    """Threshold the selection probability and reduce to Gaussian tail masses."""
    if pi_th >= 1.0:
        return 0.0, 0.0
    sigma_null = float(np.sqrt(chi_hat))
    sigma_sig = float(np.sqrt(hats_m_hat**2 + chi_hat))
    if pi_of_a(0.0) > pi_th:
        p_null, p_sig = 1.0, 1.0
    elif pi_of_a(hi) <= pi_th:
        p_null, p_sig = 0.0, 0.0
    else:
        a_c = critical_field(pi_of_a, pi_th, hi)
        p_null = _two_tail_mass(a_c, sigma_null)
        p_sig = _two_tail_mass(a_c, sigma_sig)
    tpr = p_sig
    numerator = (1.0 - rho) * p_null
    denominator = numerator + rho * p_sig
    fdr = numerator / denominator if denominator > 0.0 else 0.0
    return tpr, fdr


def ss_tpr_fdr(sol: SsSolution, pi_th: float) -> tuple[float, float]:
    """TPR and FDR of SS at selection-probability threshold pi_th.

    TPR conditions on the signal branch; FDR is the null selection mass over
    the total selection mass, with the empty-selection case defined as 0.
    """
    if not 0.0 <= pi_th < 1.0:
        raise ValueError(f"pi_th must lie in [0, 1), got {pi_th}")
    hats = sol.hats
    lam = sol.config.lam
    hi = lam + 42.0 * np.sqrt(hats.v_hat) + 1.0
    return _tpr_fdr_from_pi(
        lambda a: float(_pi_from_field(a, hats, lam)),
        pi_th,
        hats.m_hat,
        hats.chi_hat,
        sol.config.rho,
        hi,
    )


def ss_prediction_error(sol: SsSolution) -> float:
    """Expected fresh-sample squared error of one resampled-lasso draw.

    Decomposes as (q + v) - 2 m + rho + delta: second moments of the draw,
    cross term with the truth, signal power, and noise.
    """
    o = sol.order
    return (o.q + o.v) - 2.0 * o.m + sol.config.rho + sol.config.delta
