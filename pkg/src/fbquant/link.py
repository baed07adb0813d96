"""Robust limited-feedback MISO link built on a product codebook.

The channel space is split into an outage ball ``||h||^2 < y_1`` and
magnitude-by-direction sectors. For a channel in a sector the transmitter
beamforms along the quantized direction ``u~`` and sends just enough power
to reach the target SNR anywhere in the sector,

    P = gamma0 / (Y~ cos^2 phi),

where ``Y~`` is the lower edge of the magnitude interval and ``phi`` the cap
opening of the direction codebook.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .direction import (CodebookCache, DirectionCodebook, covering_radius_estimate, generate, lambda_M,
                        quantize_direction)
from .distributions import ChiSquare
from .exceptions import DomainError, InfeasibleCodebookError, NoTransmission
from .magnitude import MagnitudeCodebook, average_power, build_uniform_db, single_level

PHI_MODES = ("paper", "strict")
SNR_RTOL = 1e-9
SHARD_SIZE = 1 << 17


@dataclass(frozen=True)
class SystemConfig:
    model: ChiSquare
    q: float
    gamma0: float
    B: int
    allocation: tuple[int, int]

    def __post_init__(self):
        if not 0.0 < self.q < 1.0:
            raise DomainError("outage probability must lie in (0, 1)")
        if not self.gamma0 > 0:
            raise DomainError("target SNR must be positive")
        bdot, bddot = self.allocation
        if bdot < 0 or bddot < 0 or bdot + bddot != self.B:
            raise DomainError(f"allocation {self.allocation} does not split {self.B} bits")


@dataclass(frozen=True)
class ProductSystem:
    """Magnitude and direction codebooks plus the outage ball.

    ``direction`` may be ``None`` when only the cap opening is known (e.g.
    extrapolated for codebooks too large to build); such a system supports
    the analytic quantities but not quantization.
    """

    model: ChiSquare
    q: float
    gamma0: float
    magnitude: MagnitudeCodebook
    direction: DirectionCodebook | None
    phi: float
    phi_mode: str = "paper"

    def __post_init__(self):
        if self.phi_mode not in PHI_MODES:
            raise DomainError(f"phi_mode must be one of {PHI_MODES}")
        if self.phi_mode == "strict" and (self.direction is None or self.direction.covering_radius is None):
            raise DomainError("strict mode needs a direction codebook with a covering radius estimate")

    @property
    def outage_radius_sq(self) -> float:
        return float(self.magnitude.levels[0])

    @property
    def n_regions(self) -> int:
        n_dir = self.direction.N if self.direction is not None else None
        return self.magnitude.size * n_dir + 1 if n_dir else None

    @property
    def phi_eff(self) -> float:
        if self.phi_mode == "strict":
            return max(self.phi, self.direction.covering_radius)
        return self.phi

    @property
    def cos2_phi(self) -> float:
        c = math.cos(self.phi_eff)
        if not c * c > 1e-300 or self.phi_eff >= math.pi / 2:
            raise InfeasibleCodebookError("cap opening of pi/2 leaves no beamforming gain")
        return c * c

    @property
    def csi_power(self) -> float:
        return self.gamma0 * self.model.constants().rho_csi

    def with_mode(self, phi_mode: str) -> "ProductSystem":
        return ProductSystem(self.model, self.q, self.gamma0, self.magnitude, self.direction, self.phi, phi_mode)


@dataclass(frozen=True)
class QuantizedChannel:
    mag_index: int
    dir_index: int
    quantized_y: float
    quantized_dir: np.ndarray | None
    in_outage: bool


@dataclass
class EvaluationReport:
    avg_power_analytic: float
    avg_power_mc: float
    avg_power_mc_stderr: float
    outage_empirical: float
    snr_violations: int
    covering_violations: int
    csi_power: float
    samples: int
    phi_mode: str
    config: dict = field(default_factory=dict)

    def to_json(self) -> str:
        d = asdict(self)
        d["version"] = __version__
        return json.dumps(d, indent=2, sort_keys=True) + "\n"


def magnitude_codebook(model: ChiSquare, q: float, bdot: int) -> MagnitudeCodebook:
    """Uniform-dB codebook with ``2^bdot`` levels (a single threshold for zero bits)."""
    if bdot == 0:
        return single_level(model, q)
    return build_uniform_db(model, q, 2**bdot)


def assemble(config: SystemConfig, cache: CodebookCache | None = None, phi_mode: str = "paper",
             seed: int = 0, covering_samples: int = 10**6) -> ProductSystem:
    """Build both codebooks for ``config`` and wrap them in a :class:`ProductSystem`."""
    bdot, bddot = config.allocation
    mag = magnitude_codebook(config.model, config.q, bdot)
    n_dir = 2**bddot
    if n_dir == 1:
        u = np.zeros((1, config.model.M))
        u[0, 0] = 1.0
        direction = DirectionCodebook(u, seed=seed, covering_radius=math.pi / 2)
        phi = math.pi / 2
    else:
        direction = cache.get(config.model.M, n_dir, seed) if cache is not None else generate(config.model.M, n_dir, seed=seed)
        phi = direction.phi
        if phi_mode == "strict" and direction.covering_radius is None:
            direction = direction.with_covering_radius(covering_radius_estimate(direction, covering_samples, seed=seed))
    return ProductSystem(config.model, config.q, config.gamma0, mag, direction, phi, phi_mode)


def _quantize_arrays(system: ProductSystem, H: np.ndarray):
    Y = np.einsum("ij,ij->i", H, H)
    mag_idx = system.magnitude.quantize(Y)
    outage = mag_idx < 0
    dir_idx = np.full(len(H), -1)
    angle = np.full(len(H), np.nan)
    live = ~outage
    if live.any():
        dir_idx[live], angle[live] = quantize_direction(system.direction, H[live])
    return Y, mag_idx, dir_idx, angle, outage


def quantize(system: ProductSystem, h) -> QuantizedChannel:
    h = np.asarray(h, dtype=float)
    if system.direction is None:
        raise DomainError("system has no explicit direction codebook")
    if not np.all(np.isfinite(h)):
        raise DomainError("channel must be finite")
    _, m, d, _, out = _quantize_arrays(system, h[None, :])
    if out[0]:
        return QuantizedChannel(-1, -1, 0.0, None, True)
    return QuantizedChannel(int(m[0]), int(d[0]), float(system.magnitude.levels[m[0]]),
                            system.direction.vectors[d[0]].copy(), False)


def transmit_power(system: ProductSystem, qc: QuantizedChannel) -> float:
    if qc.in_outage:
        return 0.0
    return system.gamma0 / (qc.quantized_y * system.cos2_phi)


def beamformer(system: ProductSystem, qc: QuantizedChannel) -> np.ndarray:
    if qc.in_outage:
        raise NoTransmission("channel is in outage; nothing is transmitted")
    return qc.quantized_dir


def average_power_analytic(system: ProductSystem) -> float:
    """``gamma0 E[1/Y~] / cos^2 phi`` with zero power in the outage ball."""
    P = average_power(system.model, system.magnitude, system.q)
    return system.gamma0 * P / system.cos2_phi


def upper_bound_chain(system: ProductSystem) -> float:
    """Analytic power bound from the magnitude bound and the Hamming bound on phi.

    Returns ``inf`` when the Hamming term does not leave a positive denominator.
    """
    M = system.model.M
    c = system.model.constants()
    L = system.magnitude.r - 1.0
    num = 1.0 + L + c.omega * L * L
    den = 1.0 - 16.0 * lambda_M(M) ** 2 * system.direction.N ** (-2.0 / (M - 1))
    if den <= 0:
        return math.inf
    return system.csi_power * num / den


def box_muller(rng: np.random.Generator, n: int, M: int) -> np.ndarray:
    """``n`` standard normal vectors in ``R^M`` from uniform draws of ``rng``."""
    total = n * M
    half = (total + 1) // 2
    u = rng.random((2, half))
    radius = np.sqrt(-2.0 * np.log1p(-u[0]))
    angle = 2.0 * np.pi * u[1]
    z = np.concatenate([radius * np.cos(angle), radius * np.sin(angle)])[:total]
    return z.reshape(n, M)


def _shard(system: ProductSystem, seed_seq: np.random.SeedSequence, n: int):
    rng = np.random.Generator(np.random.Philox(seed_seq))
    H = box_muller(rng, n, system.model.M)
    Y, m, _, angle, out = _quantize_arrays(system, H)
    live = ~out
    power = np.zeros(n)
    cos2 = system.cos2_phi
    power[live] = system.gamma0 / (system.magnitude.levels[m[live]] * cos2)
    snr = power[live] * Y[live] * np.cos(angle[live]) ** 2
    viol = int(np.count_nonzero(snr < system.gamma0 * (1.0 - SNR_RTOL)))
    cover = int(np.count_nonzero(angle[live] > system.phi))
    return float(power.sum()), float(np.sum(power * power)), int(out.sum()), viol, cover


def monte_carlo(system: ProductSystem, samples: int = 10**6, seed: int = 0, n_jobs: int = 1) -> EvaluationReport:
    """Draw i.i.d. Gaussian channels and replay the feedback loop.

    Samples are split into fixed-size shards, each with its own Philox
    substream, so results do not depend on ``n_jobs``.
    """
    if samples < 10**4:
        raise DomainError("Monte Carlo evaluation needs at least 10^4 samples")
    if system.direction is None:
        raise DomainError("system has no explicit direction codebook")
    sizes = [SHARD_SIZE] * (samples // SHARD_SIZE)
    if samples % SHARD_SIZE:
        sizes.append(samples % SHARD_SIZE)
    seqs = np.random.SeedSequence(seed).spawn(len(sizes))
    if n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as pool:
            parts = list(pool.map(lambda a: _shard(system, *a), zip(seqs, sizes)))
    else:
        parts = [_shard(system, s, n) for s, n in zip(seqs, sizes)]
    s1 = sum(p[0] for p in parts)
    s2 = sum(p[1] for p in parts)
    mean = s1 / samples
    var = max(s2 / samples - mean * mean, 0.0) * samples / (samples - 1)
    return EvaluationReport(
        avg_power_analytic=average_power_analytic(system),
        avg_power_mc=mean,
        avg_power_mc_stderr=math.sqrt(var / samples),
        outage_empirical=sum(p[2] for p in parts) / samples,
        snr_violations=sum(p[3] for p in parts),
        covering_violations=sum(p[4] for p in parts),
        csi_power=system.csi_power,
        samples=samples,
        phi_mode=system.phi_mode,
    )
