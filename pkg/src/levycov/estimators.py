"""Co-integrated volatility estimators from equidistant bivariate increments.

Functional forms (``ecf``, ``spectral_estimate``, ``trc_estimate``,
``realized_covariance``) operate on a :class:`PathSample` or an ``(n, 2)``
array. The classes at the bottom wrap them in the scikit-learn estimator
protocol so they can be cloned, grid-searched and dropped into pipelines.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_increments
from .model import ClassParams

TINY_MODULUS = 1e-300


@dataclass(frozen=True)
class EcfValue:
    u: tuple
    value: complex
    n: int

    @property
    def modulus(self) -> float:
        return abs(self.value)


@dataclass(frozen=True)
class SpectralConfig:
    class_params: ClassParams
    u_override: Optional[float] = None

    def __post_init__(self):
        if self.u_override is not None and not self.u_override > 0:
            raise ValueError(f"u_override must be positive, got {self.u_override}")


@dataclass(frozen=True)
class SpectralEstimate:
    """Spectral estimate and its ingredients.

    When ``valid`` is false one of the ECF moduli vanished and ``value`` is NaN.
    """

    value: float
    u_used: float
    ecf_plus: EcfValue
    ecf_minus: EcfValue
    valid: bool
    n: int


@dataclass(frozen=True)
class TrcConfig:
    h: float
    u_exp: float = 0.387

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError(f"h must be positive, got {self.h}")
        if not 0.0 < self.u_exp < 0.5:
            raise ValueError(f"u_exp must lie in (0, 1/2), got {self.u_exp}")

    @property
    def threshold(self) -> float:
        return self.h ** (2.0 * self.u_exp)


def _pairwise_sum(z: np.ndarray) -> complex:
    # explicit tree reduction; np.sum is only pairwise along contiguous blocks
    z = np.asarray(z)
    while len(z) > 1:
        if len(z) % 2:
            z = np.append(z, 0.0)
        z = z[0::2] + z[1::2]
    return complex(z[0]) if len(z) else 0j


def ecf(sample, u) -> EcfValue:
    """Empirical characteristic function ``mean_j exp(i <u, dX_j>)``."""
    x = check_increments(sample, min_n=1)
    u = np.asarray(u, dtype=float).reshape(2)
    n = len(x)
    if not u.any():
        return EcfValue((0.0, 0.0), complex(1.0, 0.0), n)
    phase = x @ u
    val = _pairwise_sum(np.exp(1j * phase)) / n
    return EcfValue((float(u[0]), float(u[1])), val, n)


def frequency_rule(n: int, params: ClassParams) -> float:
    """Frequency ``U_n``: ``sqrt(n)`` for ``r <= 1``, else ``sqrt((r-1) n log n / M)``."""
    if params.r <= 1.0:
        if n < 1:
            raise ValueError("n must be at least 1")
        return math.sqrt(n)
    if n < 2:
        raise ValueError("frequency rule needs n >= 2 when r > 1")
    return math.sqrt((params.r - 1.0) * n * math.log(n)) / math.sqrt(params.M)


def spectral_estimate(sample, cfg: SpectralConfig) -> SpectralEstimate:
    """Spectral estimate ``n / (2 U^2) (log|phi(U,-U)| - log|phi(U,U)|)``."""
    x = check_increments(sample, min_n=2)
    n = len(x)
    U = cfg.u_override if cfg.u_override is not None else frequency_rule(n, cfg.class_params)
    plus = ecf(x, (U, U))
    minus = ecf(x, (U, -U))
    valid = plus.modulus > TINY_MODULUS and minus.modulus > TINY_MODULUS
    if valid:
        value = n / (2.0 * U * U) * (math.log(minus.modulus) - math.log(plus.modulus))
    else:
        value = math.nan
    return SpectralEstimate(value, float(U), plus, minus, valid, n)


def trc_estimate(sample, cfg: TrcConfig) -> float:
    """Truncated realized covariance with threshold ``h**(2 u_exp)``.

    A factor is kept when its square is at most the threshold.
    """
    x = check_increments(sample, min_n=1)
    thr = cfg.threshold
    kept = np.where(x * x <= thr, x, 0.0)
    return float(np.dot(kept[:, 0], kept[:, 1]))


def realized_covariance(sample) -> float:
    x = check_increments(sample, min_n=1)
    return float(np.dot(x[:, 0], x[:, 1]))


class SpectralCoVolatility(BaseEstimator):
    """Spectral co-integrated volatility estimator.

    Parameters
    ----------
    M : float, default=4.229
        Class bound used by the frequency rule when ``r > 1``.
    r : float, default=1.0
        Co-jump activity index assumed for the data.
    u_override : float, optional
        Fixed frequency, bypassing the rule.

    Attributes
    ----------
    co_volatility_ : float
        Estimate of ``C^{12}``; NaN when ``valid_`` is false.
    u_used_ : float
    valid_ : bool
    estimate_ : SpectralEstimate
    """

    def __init__(self, M=4.229, r=1.0, u_override=None):
        self.M = M
        self.r = r
        self.u_override = u_override

    def fit(self, X, y=None):
        X = check_increments(X, min_n=2)
        cfg = SpectralConfig(ClassParams(self.M, self.r), self.u_override)
        est = spectral_estimate(X, cfg)
        self.estimate_ = est
        self.co_volatility_ = est.value
        self.u_used_ = est.u_used
        self.valid_ = est.valid
        self.n_increments_ = est.n
        return self

    def predict(self, X=None):
        check_is_fitted(self, "co_volatility_")
        return self.co_volatility_


class TruncatedRealizedCovariance(BaseEstimator):
    """Truncated realized covariance; ``h`` defaults to ``1/n`` of the data."""

    def __init__(self, u_exp=0.387, h=None):
        self.u_exp = u_exp
        self.h = h

    def fit(self, X, y=None):
        X = check_increments(X, min_n=1)
        cfg = TrcConfig(self.h if self.h is not None else 1.0 / len(X), self.u_exp)
        self.threshold_ = cfg.threshold
        self.co_volatility_ = trc_estimate(X, cfg)
        return self

    def predict(self, X=None):
        check_is_fitted(self, "co_volatility_")
        return self.co_volatility_


class RealizedCovariance(BaseEstimator):
    def fit(self, X, y=None):
        self.co_volatility_ = realized_covariance(X)
        return self

    def predict(self, X=None):
        check_is_fitted(self, "co_volatility_")
        return self.co_volatility_
