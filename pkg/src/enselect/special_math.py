"""Scalar building blocks for the self-consistent theory.

Everything here is pure and vectorization-friendly:

* the Gaussian upper-tail function ``H(x) = P(Z > x)``,
* Gauss-Hermite rules normalized for standard-normal expectations,
* truncated Poisson expectations,
* the scalar soft-threshold estimator

      w(h) = argmin_w  (q_hat/2) w^2 - h w + lam |w|
           = sign(h) max(|h| - lam, 0) / q_hat

  together with its exact Gaussian moments over h = a + sqrt(v_hat) * eta,
  eta ~ N(0, 1).  The closed forms are the canonical evaluation path; the
  quadrature rule doubles as an independent cross-check in the tests.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import special
from scipy.stats import poisson

__all__ = [
    "QuadratureRule",
    "SoftThresholdMoments",
    "gauss_upper_tail",
    "gauss_density",
    "soft_threshold",
    "soft_threshold_argmin",
    "soft_threshold_gaussian_moments",
    "gauss_hermite_rule",
    "gauss_hermite_expect",
    "gaussian_feature_nodes",
    "poisson_truncated_expect",
]

_SQRT2 = np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def gauss_upper_tail(x):
    """Upper tail mass H(x) = P(Z > x) of a standard Gaussian.

    Saturates smoothly to 0/1 in the deep tails (erfc based, never NaN for
    finite input).  Accepts scalars or arrays.
    """
    return 0.5 * special.erfc(np.asarray(x, dtype=float) / _SQRT2)


def gauss_density(x):
    """Standard Gaussian density phi(x)."""
    x = np.asarray(x, dtype=float)
    return _INV_SQRT_2PI * np.exp(-0.5 * x * x)


def soft_threshold(h, lam):
    """sign(h) * max(|h| - lam, 0), elementwise."""
    h = np.asarray(h, dtype=float)
    return np.sign(h) * np.maximum(np.abs(h) - lam, 0.0)


def soft_threshold_argmin(h: float, lam: float, q_hat: float) -> float:
    """Minimizer of (q_hat/2) w^2 - h w + lam |w| over scalar w.

    Requires q_hat > 0 and lam >= 0.
    """
    if q_hat <= 0:
        raise ValueError(f"q_hat must be positive, got {q_hat}")
    if lam < 0:
        raise ValueError(f"lam must be nonnegative, got {lam}")
    return float(soft_threshold(h, lam) / q_hat)


@dataclass(frozen=True)
class SoftThresholdMoments:
    """Moments of w = soft_threshold(a + sqrt(v_hat)*eta, lam)/q_hat over eta.

    ``mean_derivative`` is d mean / d a, the response of the mean to the
    deterministic part of the field.  Fields are floats for scalar input and
    arrays when ``a`` was an array.
    """

    mean: float
    second_moment: float
    nonzero_prob: float
    mean_derivative: float


def soft_threshold_gaussian_moments(
    a, v_hat: float, lam: float, q_hat: float
) -> SoftThresholdMoments:
    """Exact Gaussian moments of the soft-threshold estimator.

    With s = sqrt(v_hat), z+ = (lam - a)/s and z- = (lam + a)/s:

        E[w]      = ((a - lam) H(z+) + s phi(z+) + (a + lam) H(z-) - s phi(z-)) / q_hat
        E[w^2]    = s^2 ((1 + z+^2) H(z+) - z+ phi(z+)
                        + (1 + z-^2) H(z-) - z- phi(z-)) / q_hat^2
        P(w != 0) = H(z+) + H(z-)
        d E[w]/da = (H(z+) + H(z-)) / q_hat

    The v_hat = 0 case is handled by its exact deterministic limit, never by
    dividing by s.  ``a`` may be an array; v_hat, lam, q_hat are scalars.
    """
    if q_hat <= 0:
        raise ValueError(f"q_hat must be positive, got {q_hat}")
    if v_hat < 0:
        raise ValueError(f"v_hat must be nonnegative, got {v_hat}")
    if lam < 0:
        raise ValueError(f"lam must be nonnegative, got {lam}")
    a = np.asarray(a, dtype=float)
    scalar = a.ndim == 0

    if v_hat == 0.0:
        w = soft_threshold(a, lam) / q_hat
        nonzero = (np.abs(a) > lam).astype(float)
        mean, second = w, w * w
        deriv = nonzero / q_hat
    else:
        s = np.sqrt(v_hat)
        zp = (lam - a) / s
        zm = (lam + a) / s
        hp, hm = gauss_upper_tail(zp), gauss_upper_tail(zm)
        pp, pm = gauss_density(zp), gauss_density(zm)
        mean = ((a - lam) * hp + s * pp + (a + lam) * hm - s * pm) / q_hat
        second = (
            v_hat
            * ((1.0 + zp * zp) * hp - zp * pp + (1.0 + zm * zm) * hm - zm * pm)
            / (q_hat * q_hat)
        )
        nonzero = hp + hm
        deriv = nonzero / q_hat

    if scalar:
        return SoftThresholdMoments(
            float(mean), float(second), float(nonzero), float(deriv)
        )
    return SoftThresholdMoments(mean, second, nonzero, deriv)


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes and weights approximating E[f(xi)] for xi ~ N(0, 1).

    Probabilist's normalization: weights sum to one, nodes are strictly
    increasing, and the rule reproduces E[xi] = 0 and E[xi^2] = 1.
    """

    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)
        if nodes.ndim != 1 or nodes.shape != weights.shape:
            raise ValueError("nodes and weights must be 1D arrays of equal length")
        if np.any(np.diff(nodes) <= 0):
            raise ValueError("nodes must be strictly increasing")
        if np.any(weights <= 0):
            raise ValueError("weights must be positive")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError("weights must sum to 1 within 1e-12")
        if abs(weights @ nodes) > 1e-10 or abs(weights @ nodes**2 - 1.0) > 1e-10:
            raise ValueError("rule must reproduce the first two normal moments")


_GL_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    if n not in _GL_CACHE:
        _GL_CACHE[n] = np.polynomial.legendre.leggauss(n)
    return _GL_CACHE[n]


def gaussian_feature_nodes(
    sigma: float,
    feature_center: float,
    feature_width: float,
    nodes_per_panel: int = 32,
    span: float = 8.5,
    feature_span: float = 8.0,
    panel_factor: float = 5.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Composite rule for E[f(a)], a ~ N(0, sigma^2), f sharp near |a| = center.

    Plain Gauss-Hermite under-resolves integrands whose interesting behavior
    is confined to a window of width ``feature_width`` around +-center (the
    soft-threshold moments in their deterministic-field argument), so the
    line is cut at the window edges and at +-center itself, long panels are
    subdivided to a few local scales, and each panel gets a Gauss-Legendre
    rule weighted by the normal density.  feature_width = 0 reduces to exact
    kink splitting.  The sigma = 0 limit is the point mass at the origin.

    Returns (nodes, weights) with sum(weights) = 1 up to the truncated
    Gaussian tail mass beyond span * sigma.
    """
    if sigma < 0:
        raise ValueError(f"sigma must be nonnegative, got {sigma}")
    if sigma == 0.0:
        return np.zeros(1), np.ones(1)
    half_span = span * sigma
    window = feature_span * feature_width
    cuts = {-half_span, half_span}
    for center in (-feature_center, feature_center):
        for point in (center - window, center, center + window):
            if -half_span < point < half_span:
                cuts.add(point)
    edges = np.array(sorted(cuts))

    base_x, base_w = _gauss_legendre(nodes_per_panel)
    nodes, weights = [], []
    for left, right in zip(edges[:-1], edges[1:]):
        mid = 0.5 * (left + right)
        in_window = abs(abs(mid) - feature_center) < window
        scale = feature_width if in_window and feature_width > 0 else sigma
        pieces = min(int(np.ceil((right - left) / (panel_factor * scale))), 64)
        for sub in range(max(pieces, 1)):
            a = left + (right - left) * sub / pieces
            b = left + (right - left) * (sub + 1) / pieces
            half = 0.5 * (b - a)
            x = 0.5 * (a + b) + half * base_x
            nodes.append(x)
            weights.append(half * base_w * gauss_density(x / sigma) / sigma)
    return np.concatenate(nodes), np.concatenate(weights)


DEFAULT_GH_NODES = 101


def gauss_hermite_rule(n: int = DEFAULT_GH_NODES) -> QuadratureRule:
    """Gauss-Hermite rule rescaled to the standard normal measure."""
    if n < 2:
        raise ValueError("n must be >= 2")
    x, w = special.roots_hermitenorm(n)
    return QuadratureRule(nodes=x, weights=w / np.sqrt(2.0 * np.pi))


def gauss_hermite_expect(f: Callable[[np.ndarray], np.ndarray], rule: QuadratureRule) -> float:
    """E[f(xi)] for xi ~ N(0,1), as the weighted sum over the rule's nodes."""
    return float(rule.weights @ np.asarray(f(rule.nodes), dtype=float))


def poisson_truncated_expect(
    mu_b: float, g: Callable[[np.ndarray], np.ndarray], mass_tol: float = 1e-12
) -> float:
    """E[g(c)] for c ~ Poisson(mu_b), truncated at negligible tail mass.

    The cutoff C is the smallest integer whose cumulative mass reaches
    1 - mass_tol; ``g`` is evaluated on the integer array 0..C.  Non-finite
    values of g propagate into the result.
    """
    if mu_b <= 0:
        raise ValueError(f"mu_b must be positive, got {mu_b}")
    if not 0.0 < mass_tol <= 1e-6:
        raise ValueError(f"mass_tol must lie in (0, 1e-6], got {mass_tol}")
    # pad past the 1 - mass_tol quantile so polynomially growing g stays
    # exact to machine precision, not just to O(mass_tol * g(C))
    cutoff = int(poisson.isf(mass_tol, mu_b)) + 10 + int(np.ceil(4.0 * np.sqrt(mu_b)))
    c = np.arange(cutoff + 1)
    return float(poisson.pmf(c, mu_b) @ np.asarray(g(c), dtype=float))
