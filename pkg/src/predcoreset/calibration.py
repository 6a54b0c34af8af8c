"""Chi-squared numerics and the radius shrinkage that absorbs prediction error.

Given a target coverage radius ``delta`` and failure probability ``epsilon``,
the radius used against already-collected samples is shrunk by one
prediction-error quantile and the radius used among predicted samples by the
quantile of the difference of two errors (twice the variance).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "InfeasibleConfigError",
    "CalibrationConfig",
    "regularized_lower_gamma",
    "chi2_cdf",
    "chi2_pdf",
    "chi2_inv_cdf",
    "radius_quantile",
    "derive_radii",
    "min_feasible_delta",
    "corollary_radius",
    "aggregate_sigma2",
]

_EPS = 1e-16
_TINY = 1e-300


class InfeasibleConfigError(ValueError):
    """The target radius is below what the prediction error allows."""

    def __init__(self, message: str, min_delta: float | None = None):
        super().__init__(message)
        self.min_delta = min_delta


def _gamma_series(a: float, x: float) -> float:
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(10000):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_cf(a: float, x: float) -> float:
    # modified Lentz on the continued fraction for the upper tail
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, 10000):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


def regularized_lower_gamma(a: float, x: float) -> float:
    """P(a, x): series below ``a + 1``, continued fraction above."""
    if a <= 0:
        raise ValueError("shape must be positive")
    if x < 0:
        raise ValueError("x must be non-negative")
    if x == 0:
        return 0.0
    if x < a + 1.0:
        return min(1.0, _gamma_series(a, x))
    return max(0.0, 1.0 - _gamma_cf(a, x))


def _check_dof(d: int) -> None:
    if int(d) != d or d < 1:
        raise ValueError(f"degrees of freedom must be a positive integer, got {d}")


def chi2_cdf(x: float, d: int) -> float:
    _check_dof(d)
    if x < 0 or math.isnan(x):
        raise ValueError(f"chi2_cdf needs x >= 0, got {x}")
    if math.isinf(x):
        return 1.0
    return regularized_lower_gamma(d / 2.0, x / 2.0)


def chi2_pdf(x: float, d: int) -> float:
    _check_dof(d)
    if x <= 0:
        return math.inf if d == 1 else (0.5 if d == 2 else 0.0)
    a = d / 2.0
    return math.exp((a - 1.0) * math.log(x / 2.0) - x / 2.0 - math.lgamma(a)) / 2.0


def chi2_inv_cdf(p: float, d: int) -> float:
    """Quantile of the chi-squared distribution.

    Brackets the root, bisects to a relative width of 1e-12 and finishes with
    one Newton step, which is kept only if it does not worsen the residual.
    The relative width keeps tiny quantiles accurate (d=1 near p=0).
    """
    _check_dof(d)
    if not (0.0 <= p < 1.0):
        raise ValueError(f"chi2_inv_cdf needs 0 <= p < 1, got {p}")
    if p == 0.0:
        return 0.0
    lo, hi = 0.0, max(1.0, float(d))
    while chi2_cdf(hi, d) < p:
        lo, hi = hi, 2.0 * hi
        if hi > 1e12:
            raise ValueError(f"quantile for p={p} out of range")
    while hi - lo > 1e-12 * hi:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if chi2_cdf(mid, d) < p:
            lo = mid
        else:
            hi = mid
    x = 0.5 * (lo + hi)
    fx = chi2_cdf(x, d) - p
    dens = chi2_pdf(x, d)
    if dens > 0 and math.isfinite(dens):
        polished = x - fx / dens
        if polished > 0 and abs(chi2_cdf(polished, d) - p) <= abs(fx):
            x = polished
    return x


def aggregate_sigma2(values, mode: str = "max") -> float:
    """Collapse per-attribute prediction MSEs into the single variance the radii assume."""
    arr = np.atleast_1d(np.asarray(values, dtype=float))
    if arr.size == 0 or np.any(arr < 0) or not np.all(np.isfinite(arr)):
        raise ValueError("per-attribute MSEs must be finite and >= 0")
    if mode == "max":
        return float(arr.max())
    if mode == "mean":
        return float(arr.mean())
    raise ValueError(f"unknown sigma2 aggregation {mode!r}")


def _validate_common(epsilon: float, n: int, d: int, sigma2: float) -> None:
    if not (0.0 < epsilon < 1.0):
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    if int(n) != n or n < 1:
        raise ValueError(f"window length must be a positive integer, got {n}")
    _check_dof(d)
    if not (sigma2 >= 0.0 and math.isfinite(sigma2)):
        raise ValueError(f"sigma2 must be finite and >= 0, got {sigma2}")


def radius_quantile(epsilon: float, n: int, d: int) -> float:
    """F^-1((1 - epsilon)^(1/n); d)."""
    _validate_common(epsilon, n, d, 0.0)
    return chi2_inv_cdf((1.0 - epsilon) ** (1.0 / n), d)


def min_feasible_delta(epsilon: float, n: int, d: int, sigma2: float) -> float:
    _validate_common(epsilon, n, d, sigma2)
    if sigma2 == 0.0:
        return 0.0
    return math.sqrt(2.0 * sigma2 * radius_quantile(epsilon, n, d))


def derive_radii(delta: float, epsilon: float, n: int, d: int, sigma2: float) -> tuple[float, float]:
    """Return ``(delta0, delta1)``; raises :class:`InfeasibleConfigError` when ``delta1 < 0``."""
    _validate_common(epsilon, n, d, sigma2)
    if not (delta > 0):
        raise ValueError(f"delta must be positive, got {delta}")
    if sigma2 == 0.0:
        return float(delta), float(delta)
    q = radius_quantile(epsilon, n, d)
    delta0 = delta - math.sqrt(sigma2 * q)
    delta1 = delta - math.sqrt(2.0 * sigma2 * q)
    if delta1 < 0:
        bound = math.sqrt(2.0 * sigma2 * q)
        raise InfeasibleConfigError(
            f"delta={delta:g} is below the feasibility bound sqrt(2*sigma2*F^-1((1-eps)^(1/n); d)) = {bound:.7g}",
            min_delta=bound,
        )
    return delta0, delta1


def corollary_radius(delta: float, sigma1_sq: float, epsilon: float, d: int) -> float:
    """Threshold-policy radius for one-step-ahead prediction."""
    _validate_common(epsilon, 1, d, sigma1_sq)
    if sigma1_sq == 0.0:
        return float(delta)
    r = delta - math.sqrt(sigma1_sq * chi2_inv_cdf(1.0 - epsilon, d))
    if r < 0:
        raise InfeasibleConfigError(f"threshold radius is negative ({r:.7g}) for delta={delta:g}")
    return r


@dataclass(frozen=True)
class CalibrationConfig:
    delta: float
    epsilon: float
    n: int
    d: int
    sigma2: float
    kappa: float = math.inf
    delta0: float = field(init=False)
    delta1: float = field(init=False)

    def __post_init__(self):
        k = self.kappa
        if not (k == math.inf or (float(k).is_integer() and k >= 1)):
            raise ValueError(f"kappa must be a positive integer or inf, got {k}")
        d0, d1 = derive_radii(self.delta, self.epsilon, self.n, self.d, self.sigma2)
        object.__setattr__(self, "delta0", d0)
        object.__setattr__(self, "delta1", d1)

    @property
    def min_delta(self) -> float:
        return min_feasible_delta(self.epsilon, self.n, self.d, self.sigma2)

    @classmethod
    def from_mse(cls, delta: float, epsilon: float, n: int, mses: Sequence[float], kappa: float = math.inf,
                 mode: str = "max") -> "CalibrationConfig":
        mses = np.atleast_1d(np.asarray(mses, dtype=float))
        return cls(delta, epsilon, n, int(mses.size), aggregate_sigma2(mses, mode), kappa)
