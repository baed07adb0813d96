"""Channel magnitude distributions.

The squared norm ``Y = ||h||^2`` of a real channel with ``M`` i.i.d. standard
normal entries is chi-square with ``M`` degrees of freedom. Everything the
codebook constructions need (density, its derivative, cdf, survival function,
inverse cdf and a handful of moments) is exposed through
:class:`MagnitudeDistribution`, so another distribution satisfying the same
regularity conditions can be dropped in.

The regularized incomplete gamma functions are implemented here directly
(power series below ``x = s + 1``, Lentz continued fraction above) so that
precision near both tails is under our control.
"""
from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .exceptions import DomainError, UnsupportedModelError

_EPS = np.finfo(float).eps
_TINY = 1e-300
_MAX_ITER = 1000


def _prefactor(s: float, x: np.ndarray) -> np.ndarray:
    # x^s e^{-x} / Gamma(s), evaluated in log space
    with np.errstate(divide="ignore"):
        return np.exp(s * np.log(x) - x - math.lgamma(s))


def _series_lower(s: float, x: np.ndarray) -> np.ndarray:
    term = np.full_like(x, 1.0 / s)
    total = term.copy()
    active = np.ones(x.shape, dtype=bool)
    k = 0
    while active.any() and k < _MAX_ITER:
        k += 1
        term = np.where(active, term * x / (s + k), term)
        total = np.where(active, total + term, total)
        active &= np.abs(term) > np.abs(total) * _EPS
    return total * _prefactor(s, x)


def _cf_upper(s: float, x: np.ndarray) -> np.ndarray:
    b = x + 1.0 - s
    c = np.full_like(x, 1.0 / _TINY)
    d = 1.0 / b
    h = d.copy()
    active = np.ones(x.shape, dtype=bool)
    i = 0
    while active.any() and i < _MAX_ITER:
        i += 1
        an = -i * (i - s)
        b = b + 2.0
        d = an * d + b
        d = np.where(np.abs(d) < _TINY, _TINY, d)
        c = b + an / c
        c = np.where(np.abs(c) < _TINY, _TINY, c)
        d = 1.0 / d
        delta = d * c
        h = np.where(active, h * delta, h)
        active &= np.abs(delta - 1.0) > _EPS
    return h * _prefactor(s, x)


def _incomplete_gamma(s: float, x, upper: bool):
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    out = np.empty_like(x)
    zero = x <= 0.0
    inf = np.isinf(x)
    use_series = (x < s + 1.0) & ~zero & ~inf
    use_cf = ~use_series & ~zero & ~inf
    if use_series.any():
        lower = _series_lower(s, x[use_series])
        out[use_series] = 1.0 - lower if upper else lower
    if use_cf.any():
        up = _cf_upper(s, x[use_cf])
        out[use_cf] = up if upper else 1.0 - up
    out[zero] = 1.0 if upper else 0.0
    out[inf] = 0.0 if upper else 1.0
    return float(out[0]) if scalar else out


def gammainc_lower(s: float, x):
    """Regularized lower incomplete gamma ``P(s, x)``."""
    return _incomplete_gamma(s, x, upper=False)


def gammainc_upper(s: float, x):
    """Regularized upper incomplete gamma ``Q(s, x) = 1 - P(s, x)``."""
    return _incomplete_gamma(s, x, upper=True)


@dataclass(frozen=True)
class DistributionConstants:
    """Limits and moments consumed by the magnitude codebook bounds.

    ``eta`` is ``lim -f(y)/f'(y)``, ``rho_csi`` is ``E[1/Y]`` (the normalized
    perfect-CSI power) and ``omega = E[Y] / (eta^2 rho_csi)``.
    """

    eta: float
    mean_y: float
    rho_csi: float
    omega: float


class MagnitudeDistribution(ABC):
    """Interface for the law of ``Y = ||h||^2``."""

    @abstractmethod
    def pdf(self, y): ...

    @abstractmethod
    def dpdf(self, y): ...

    @abstractmethod
    def cdf(self, y): ...

    @abstractmethod
    def sf(self, y): ...

    @abstractmethod
    def constants(self) -> DistributionConstants: ...

    @abstractmethod
    def inverse_moment_above(self, a: float) -> float:
        """``integral_a^inf f(y)/y dy``: perfect-CSI power restricted to ``Y >= a``."""

    def inv_cdf(self, p: float) -> float:
        if not 0.0 < p < 1.0:
            raise DomainError(f"probability must lie in (0, 1), got {p!r}")
        lo, hi = self._bracket(p)
        if p <= 0.5:
            fn = lambda y: self.cdf(y) - p  # noqa: E731
        else:
            fn = lambda y: (1.0 - p) - self.sf(y)  # noqa: E731
        return brentq(fn, lo, hi, xtol=1e-300, rtol=4 * _EPS, maxiter=500)

    def _bracket(self, p: float) -> tuple[float, float]:
        lo, hi = 1e-12, 1.0
        while self.cdf(lo) > p:
            lo *= 1e-3
        while self.cdf(hi) < p:
            hi *= 2.0
        return lo, hi


@dataclass(frozen=True)
class ChiSquare(MagnitudeDistribution):
    """Chi-square law of ``||h||^2`` for ``M`` real antennas.

    Density and cdf are defined for any positive integer ``M``; the
    constants (and therefore every codebook built on them) need ``M >= 3``
    for ``E[1/Y]`` to be finite.
    """

    M: int

    def __post_init__(self):
        if int(self.M) != self.M or self.M < 1:
            raise UnsupportedModelError(f"degrees of freedom must be a positive integer, got {self.M!r}")

    @property
    def _k(self) -> float:
        return self.M / 2.0

    @staticmethod
    def _check_positive(y):
        y = np.asarray(y, dtype=float)
        if np.any(~(y > 0)):
            raise DomainError("magnitude argument must be positive")
        return y

    def pdf(self, y):
        y = self._check_positive(y)
        k = self._k
        logf = (k - 1.0) * np.log(y) - y / 2.0 - k * math.log(2.0) - math.lgamma(k)
        out = np.exp(logf)
        return float(out) if out.ndim == 0 else out

    def dpdf(self, y):
        """Derivative of the density, ``f(y) ((M/2 - 1)/y - 1/2)``."""
        y = self._check_positive(y)
        out = self.pdf(y) * ((self._k - 1.0) / y - 0.5)
        return float(out) if np.ndim(out) == 0 else out

    def cdf(self, y):
        y = self._check_positive(y)
        return gammainc_lower(self._k, y / 2.0)

    def sf(self, y):
        y = self._check_positive(y)
        return gammainc_upper(self._k, y / 2.0)

    def _bracket(self, p: float) -> tuple[float, float]:
        lo, hi = 1e-12, max(4.0 * self.M, -4.0 * math.log(p))
        while self.cdf(lo) > p:
            lo *= 1e-3
        while self.cdf(hi) < p:
            hi *= 2.0
        return lo, hi

    def constants(self) -> DistributionConstants:
        if self.M < 3:
            raise UnsupportedModelError("E[1/Y] is infinite for fewer than 3 degrees of freedom")
        eta = 2.0
        mean_y = float(self.M)
        rho = 1.0 / (self.M - 2)
        return DistributionConstants(eta=eta, mean_y=mean_y, rho_csi=rho, omega=mean_y / (eta**2 * rho))

    def inverse_moment_above(self, a: float) -> float:
        if self.M < 3:
            raise UnsupportedModelError("E[1/Y] is infinite for fewer than 3 degrees of freedom")
        # y^{-1} f_M(y) = f_{M-2}(y) / (M - 2)
        return float(ChiSquare(self.M - 2).sf(a)) / (self.M - 2)

    def fprime_max(self, lower: float) -> float:
        """``sup |f'(y)|`` over ``[lower, inf)``.

        ``|f'|`` is extremal either at the left end or where ``f''`` vanishes,
        i.e. at ``y = 2 (k -+ sqrt(k))`` with ``k = M/2 - 1``.
        """
        k = self._k - 1.0
        candidates = [lower]
        if k > 0:
            for y in (2.0 * (k - math.sqrt(k)), 2.0 * (k + math.sqrt(k))):
                if y > lower:
                    candidates.append(y)
        return max(abs(self.dpdf(y)) for y in candidates)


ChannelModel = ChiSquare


def pdf(model: MagnitudeDistribution, y):
    return model.pdf(y)


def cdf(model: MagnitudeDistribution, y):
    return model.cdf(y)


def inv_cdf(model: MagnitudeDistribution, p: float) -> float:
    return model.inv_cdf(p)


def constants(model: MagnitudeDistribution) -> DistributionConstants:
    return model.constants()
