"""Splitting feedback bits between magnitude and direction codebooks."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from functools import lru_cache

from scipy.special import gammaln

from .direction import CodebookCache, ExtrapolationFit, fit_extrapolation, lambda_M
from .distributions import ChiSquare
from .exceptions import DomainError
from .link import ProductSystem, average_power_analytic, magnitude_codebook
from .magnitude import average_power

SOURCES = ("closedForm", "exhaustive", "complexLaw")


@dataclass(frozen=True)
class BitAllocation:
    Bdot: int
    Bddot: int
    B: int
    source: str
    Bdot_real: float | None = None
    Bddot_real: float | None = None
    objective: float | None = None

    def __post_init__(self):
        if self.Bdot + self.Bddot != self.B or self.Bdot < 0 or self.Bddot < 0:
            raise DomainError(f"({self.Bdot}, {self.Bddot}) is not a split of {self.B} bits")
        if self.source not in SOURCES:
            raise DomainError(f"unknown allocation source {self.source!r}")


@dataclass(frozen=True)
class ScalingConstants:
    kappa_su: float
    sigma_su: float
    exponent_real: float
    exponent_complex: float


def kappa_su(M: int) -> float:
    """Offset in the closed-form split, ``(M-1)/(M+1) log2(32 lambda_M^2 / (M-1))``."""
    if M < 3:
        raise DomainError("M must be at least 3")
    return (M - 1) / (M + 1) * math.log2(32.0 * lambda_M(M) ** 2 / (M - 1))


def sigma_su(M: int) -> float:
    """Constant of the distortion bound ``sigma_SU 2^(-2B/(M+1))``."""
    if M < 3:
        raise DomainError("M must be at least 3")
    log_inner = 0.5 * math.log(math.pi) + math.log(M - 1) + gammaln((M + 1) / 2.0) - math.log(32.0) - gammaln(M / 2.0)
    return 16.0 * (M + 1) / (M - 1) * math.exp(2.0 * log_inner / (M + 1))


def scaling_constants(M: int) -> ScalingConstants:
    return ScalingConstants(kappa_su(M), sigma_su(M), 2.0 / (M + 1), 1.0 / M)


def _round_split(bdot_real: float, B: int) -> int:
    # round half up, then keep the budget
    return int(min(max(math.floor(bdot_real + 0.5), 0), B))


def closed_form(M: int, B: int) -> BitAllocation:
    if B < 1:
        raise DomainError("need at least one feedback bit")
    k = kappa_su(M)
    bdot = 2.0 * B / (M + 1) - k
    bddot = B * (M - 1) / (M + 1) + k
    b = _round_split(bdot, B)
    return BitAllocation(b, B - b, B, "closedForm", bdot, bddot)


def complex_laws(M: int, B: int) -> tuple[BitAllocation, float]:
    """Complex-channel split ``Bddot = (M-1) Bdot`` and its distortion decay ``2^(-B/M)``."""
    if B < 1:
        raise DomainError("need at least one feedback bit")
    bdot = B / M
    b = _round_split(bdot, B)
    return BitAllocation(b, B - b, B, "complexLaw", bdot, B * (M - 1) / M), 2.0 ** (-B / M)


class SinPhiTable:
    """``sin(phi)`` of direction codebooks by size.

    Sizes up to ``cache_limit`` come from generated packings; larger ones
    from a forced-slope fit over ``fit_range`` (or a given ``fit``).
    """

    def __init__(self, M: int, cache: CodebookCache | None = None, cache_limit: int = 128,
                 fit_range: tuple[int, int] = (80, 100), fit: ExtrapolationFit | None = None, seed: int = 0):
        self.M = M
        self.cache = cache if cache is not None else CodebookCache()
        self.cache_limit = cache_limit
        self.seed = seed
        self.fit_range = fit_range
        self._fit = fit

    @property
    def fit(self) -> ExtrapolationFit:
        if self._fit is None:
            lo, hi = self.fit_range
            pts = [(n, self.cache.get(self.M, n, self.seed).delta) for n in range(lo, hi + 1)]
            self._fit = fit_extrapolation(pts, self.M)
        return self._fit

    def __call__(self, N: int) -> float:
        if N <= 1:
            return 1.0
        if N <= self.cache_limit:
            return self.cache.get(self.M, N, self.seed).delta
        return float(self.fit.sin_phi(N))


@lru_cache(maxsize=4096)
def _magnitude_power(M: int, q: float, bdot: int) -> float:
    model = ChiSquare(M)
    return average_power(model, magnitude_codebook(model, q, bdot), q)


def allocation_objective(model: ChiSquare, q: float, bdot: int, sin_phi: float, gamma0: float = 1.0) -> float:
    """Average transmit power ``gamma0 E[1/Y~] / cos^2 phi``; ``inf`` when ``phi = pi/2``."""
    cos2 = 1.0 - sin_phi * sin_phi
    if cos2 <= 0:
        return math.inf
    return gamma0 * _magnitude_power(model.M, q, bdot) / cos2


def exhaustive(model: ChiSquare, q: float, B: int, sin_phi: SinPhiTable, gamma0: float = 1.0) -> BitAllocation:
    """Best integer split of ``B`` bits by direct evaluation of the average power.

    Ties go to fewer magnitude bits. Splits whose magnitude codebook could not
    beat the incumbent even with infinitely fine levels are skipped without
    being built.
    """
    if B < 1:
        raise DomainError("need at least one feedback bit")
    a = model.inv_cdf(q)
    floor = gamma0 * model.inverse_moment_above(a)
    best = None
    for bdot in range(B + 1):
        s = sin_phi(2 ** (B - bdot))
        cos2 = 1.0 - s * s
        if cos2 <= 0 or (best is not None and floor / cos2 >= best[0]):
            continue
        obj = allocation_objective(model, q, bdot, s, gamma0)
        if best is None or obj < best[0]:
            best = (obj, bdot)
    if best is None:
        raise DomainError(f"no feasible split of {B} bits")
    return BitAllocation(best[1], B - best[1], B, "exhaustive", objective=best[0])


def distortion(system: ProductSystem) -> float:
    """Relative excess power over perfect CSI, ``(E[P] - P_CSI) / P_CSI``."""
    p_csi = system.csi_power
    return (average_power_analytic(system) - p_csi) / p_csi


def allocation_distortion(model: ChiSquare, q: float, alloc: BitAllocation, sin_phi: SinPhiTable) -> float:
    rho = model.constants().rho_csi
    return allocation_objective(model, q, alloc.Bdot, sin_phi(2**alloc.Bddot)) / rho - 1.0


def distortion_bound(M: int, B) -> float:
    return sigma_su(M) * 2.0 ** (-2.0 * B / (M + 1))


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([v if isinstance(v, int) else repr(float(v)) for v in row])
    return buf.getvalue()


def allocation_table(model: ChiSquare, q: float, bits, sin_phi: SinPhiTable) -> list[tuple]:
    rows = []
    for B in bits:
        cf = closed_form(model.M, B)
        ex = exhaustive(model, q, B, sin_phi)
        rows.append((B, cf.Bdot, cf.Bddot, ex.Bdot, ex.Bddot))
    return rows


def allocation_csv(rows) -> str:
    return _csv(["B", "Bdot_closed", "Bddot_closed", "Bdot_exh", "Bddot_exh"], rows)


def distortion_table(model: ChiSquare, q: float, bits, sin_phi: SinPhiTable) -> list[tuple]:
    rows = []
    for B in bits:
        ex = exhaustive(model, q, B, sin_phi)
        cf = closed_form(model.M, B)
        rows.append((B, allocation_distortion(model, q, ex, sin_phi),
                     allocation_distortion(model, q, cf, sin_phi), distortion_bound(model.M, B)))
    return rows


def distortion_csv(rows) -> str:
    return _csv(["B", "distortion_exh", "distortion_closed", "bound"], rows)
