"""Channel magnitude quantization codebooks.

A magnitude codebook is an ascending list of levels ``y_1 < ... < y_N`` for
``Y = ||h||^2``. Channels with ``Y < y_1`` are in outage and get no power;
otherwise the transmitter inverts the lower edge of the interval holding
``Y``. The normalized average power of that policy is

    P(Y) = sum_n Q_n / y_n,      Q_n = F(y_{n+1}) - F(y_n),  y_{N+1} = inf.

``y_1`` is pinned to ``F^{-1}(q)`` so the outage probability is exactly ``q``.
"""
from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded
from scipy.optimize import brentq, minimize

from .distributions import ChiSquare, MagnitudeDistribution
from .exceptions import ConvergenceWarning, DomainError, OutageTargetError

KINDS = ("uniform-dB", "numeric", "custom", "footnote")


@dataclass(frozen=True)
class MagnitudeCodebook:
    levels: np.ndarray
    kind: str = "custom"
    a: float | None = None
    r: float | None = None
    zeta: float | None = None
    converged: bool = True
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        levels = np.asarray(self.levels, dtype=float).ravel()
        if levels.size < 1:
            raise DomainError("a codebook needs at least one level")
        if not levels[0] > 0 or np.any(np.diff(levels) <= 0):
            raise DomainError("levels must be positive and strictly increasing")
        if self.kind not in KINDS:
            raise DomainError(f"unknown codebook kind {self.kind!r}")
        levels.setflags(write=False)
        object.__setattr__(self, "levels", levels)

    @property
    def size(self) -> int:
        return self.levels.size

    def levels_db(self) -> np.ndarray:
        return 10.0 * np.log10(self.levels)

    def quantize(self, y):
        """Index of the interval ``[y_n, y_{n+1})`` containing ``y``; -1 for outage."""
        return np.searchsorted(self.levels, np.asarray(y, dtype=float), side="right") - 1

    def to_dict(self, model: ChiSquare, q: float) -> dict:
        return {
            "model": {"M": int(model.M)},
            "q": float(q),
            "kind": self.kind,
            "a": self.a,
            "r": self.r,
            "zeta": self.zeta,
            "levels": [float(v) for v in self.levels],
        }

    def to_json(self, model: ChiSquare, q: float) -> str:
        return json.dumps(self.to_dict(model, q), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "MagnitudeCodebook":
        return cls(levels=np.array(d["levels"], dtype=float), kind=d.get("kind", "custom"),
                   a=d.get("a"), r=d.get("r"), zeta=d.get("zeta"))

    @classmethod
    def from_json(cls, text: str) -> "MagnitudeCodebook":
        return cls.from_dict(json.loads(text))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "y_n", "y_n_dB"])
        for n, (y, ydb) in enumerate(zip(self.levels, self.levels_db()), start=1):
            w.writerow([n, repr(float(y)), repr(float(ydb))])
        return buf.getvalue()


@dataclass(frozen=True)
class MagnitudeDiagnostics:
    gradient_norm: float
    mu: float
    tail_term: float
    zeta: float
    gradient_bound: float
    power_bound_ratio: float


def solve_Lc(c: float, n: int) -> float:
    """Positive root ``L`` of ``L (1 + L)^(n-1) = c``."""
    if not c > 0:
        raise DomainError("c must be positive")
    if n < 2:
        raise DomainError("n must be at least 2")
    logc = math.log(c)

    def g(L):
        return math.log(L) + (n - 1) * math.log1p(L) - logc

    # L <= c and L^n <= c, so min(c, c^(1/n)) bounds the root from above
    hi = min(c, c ** (1.0 / n))
    lo = hi
    while g(lo) > 0:
        lo *= 0.5
    return brentq(g, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)


def zeta(c: float, n: int) -> float:
    """Scaling exponent of ``L_c(n) = n^(-zeta)``."""
    return -math.log(solve_Lc(c, n)) / math.log(n)


def _first_level(model: MagnitudeDistribution, q: float) -> float:
    if not 0.0 < q < 1.0:
        raise DomainError(f"outage probability must lie in (0, 1), got {q!r}")
    return model.inv_cdf(q)


def build_uniform_db(model: MagnitudeDistribution, q: float, N: int) -> MagnitudeCodebook:
    """The optimal uniform-in-dB codebook ``y_n = a r^(n-1)``.

    ``a = F^{-1}(q)`` and ``r = 1 + L_{eta/a}(N)``, which places the last
    level at ``eta / (r - 1)``.
    """
    if N < 2:
        raise DomainError("uniform codebooks need at least two levels")
    a = _first_level(model, q)
    eta = model.constants().eta
    L = solve_Lc(eta / a, N)
    r = 1.0 + L
    levels = a * np.exp(np.arange(N) * math.log1p(L))
    return MagnitudeCodebook(levels=levels, kind="uniform-dB", a=a, r=r, zeta=-math.log(L) / math.log(N))


def build_footnote(model: MagnitudeDistribution, q: float, N: int) -> MagnitudeCodebook:
    """Alternative geometric codebook with ``r - 1 = N^(-1 + 1/sqrt(log2 N))``.

    Only meant for comparison against :func:`build_uniform_db`.
    """
    if N < 2:
        raise DomainError("uniform codebooks need at least two levels")
    a = _first_level(model, q)
    L = N ** (-1.0 + 1.0 / math.sqrt(math.log2(N)))
    levels = a * np.exp(np.arange(N) * math.log1p(L))
    return MagnitudeCodebook(levels=levels, kind="footnote", a=a, r=1.0 + L, zeta=-math.log(L) / math.log(N))


def single_level(model: MagnitudeDistribution, q: float) -> MagnitudeCodebook:
    """Pure outage thresholding (zero magnitude bits)."""
    a = _first_level(model, q)
    return MagnitudeCodebook(levels=np.array([a]), kind="custom", a=a)


def _check_outage(model, levels, q, rtol=1e-9):
    a = _first_level(model, q)
    if abs(levels[0] - a) > rtol * a:
        raise OutageTargetError(f"first level {levels[0]!r} does not match F^-1(q) = {a!r}")


def _interval_masses(model: MagnitudeDistribution, y: np.ndarray) -> np.ndarray:
    # survival differences keep precision in the upper tail, cdf differences in the lower
    F = np.asarray(model.cdf(y), dtype=float)
    S = np.asarray(model.sf(y), dtype=float)
    S_next = np.append(S[1:], 0.0)
    F_next = np.append(F[1:], 1.0)
    return np.where(F < 0.5, F_next - F, S - S_next)


def _levels(codebook) -> np.ndarray:
    if isinstance(codebook, MagnitudeCodebook):
        return codebook.levels
    return np.asarray(codebook, dtype=float)


def average_power(model: MagnitudeDistribution, codebook, q: float, check: bool = True) -> float:
    """Normalized average power ``E[1/Y~]``; the outage interval contributes zero."""
    y = _levels(codebook)
    if check:
        _check_outage(model, y, q)
    return float(np.sum(_interval_masses(model, y) / y))


def _gradient_all(model, y):
    Q = _interval_masses(model, y)
    f = model.pdf(y)
    g = np.empty_like(y)
    g[0] = np.nan
    g[1:] = f[1:] * (1.0 / y[:-1] - 1.0 / y[1:]) - Q[1:] / y[1:] ** 2
    return g, Q, f


def gradient(model: MagnitudeDistribution, codebook, q: float, check: bool = True) -> np.ndarray:
    """``dP/dy_n`` for ``n = 2..N``; the first level is fixed by ``q``."""
    y = _levels(codebook)
    if check:
        _check_outage(model, y, q)
    if y.size < 2:
        return np.empty(0)
    return _gradient_all(model, y)[0][1:]


def _hessian_banded(model, y):
    """Tridiagonal Hessian over ``y_2..y_N`` in LAPACK banded layout."""
    g, Q, f = _gradient_all(model, y)
    fp = model.dpdf(y)
    n = y.size
    diag = fp[1:] * (1.0 / y[:-1] - 1.0 / y[1:]) + 2.0 * f[1:] / y[1:] ** 2 + 2.0 * Q[1:] / y[1:] ** 3
    off = -f[2:] / y[1:-1] ** 2  # d g_k / d y_{k+1}, k = 2..N-1
    ab = np.zeros((3, n - 1))
    ab[0, 1:] = off
    ab[1] = diag
    ab[2, :-1] = off
    return ab, g[1:]


def _newton_polish(model, y, max_iter=50, tol=1e-13):
    P = average_power(model, y, None, check=False)
    for _ in range(max_iter):
        ab, g = _hessian_banded(model, y)
        if np.linalg.norm(g) <= tol:
            break
        try:
            step = solve_banded((1, 1), ab, -g)
        except (np.linalg.LinAlgError, ValueError):
            break
        t = 1.0
        while t > 1e-8:
            cand = y.copy()
            cand[1:] += t * step
            if cand[1] > cand[0] and np.all(np.diff(cand) > 0):
                Pc = average_power(model, cand, None, check=False)
                if Pc <= P + 1e-15 * abs(P):
                    break
            t *= 0.5
        else:
            break
        if np.array_equal(cand, y):
            break
        y, P = cand, Pc
    return y


def _to_theta(y):
    return np.log(np.maximum(np.diff(np.log(y)), 1e-12))


def _from_theta(a, theta):
    # cap keeps trial points of the line search finite
    steps = np.exp(np.minimum(theta, 5.0))
    return a * np.exp(np.minimum(np.concatenate(([0.0], np.cumsum(steps))), 600.0))


def optimize_numeric(model: MagnitudeDistribution, q: float, N: int, restarts: int = 20,
                     seed: int = 0, sigma: float = 0.3, maxiter: int = 5000) -> MagnitudeCodebook:
    """Locally optimal codebook by direct minimization of the average power.

    Each restart perturbs the uniform-dB codebook by lognormal noise, runs
    L-BFGS over log level increments (which keeps the levels ordered) and
    finishes with Newton steps on the tridiagonal Hessian. The first start
    is the unperturbed uniform-dB codebook. Best result wins, ties to the
    lowest restart index.
    """
    if N < 2:
        raise DomainError("numeric optimization needs at least two levels")
    start = build_uniform_db(model, q, N)
    a = start.a
    rng = np.random.Generator(np.random.Philox(seed))

    def fun(theta):
        y = _from_theta(a, theta)
        g, Q, _ = _gradient_all(model, y)
        P = float(np.sum(Q / y))
        # y_n depends on theta_k for every k < n
        gy = g[1:] * y[1:]
        gtheta = np.exp(theta) * np.cumsum(gy[::-1])[::-1]
        return P, gtheta

    best = None
    for i in range(max(1, restarts)):
        y0 = start.levels.copy()
        if i > 0:
            y0[1:] = np.sort(y0[1:] * rng.lognormal(0.0, sigma, size=N - 1))
        res = minimize(fun, _to_theta(y0), jac=True, method="L-BFGS-B",
                       options={"maxiter": maxiter, "maxfun": 2 * maxiter, "ftol": 1e-15, "gtol": 1e-12})
        y = _newton_polish(model, _from_theta(a, res.x))
        P = average_power(model, y, q, check=False)
        if best is None or P < best[0]:
            best = (P, y)
    P, y = best
    gnorm = float(np.linalg.norm(gradient(model, y, q, check=False)))
    converged = gnorm <= 1e-7
    if not converged:
        warnings.warn(f"numeric codebook stopped with gradient norm {gnorm:.3e}", ConvergenceWarning)
    return MagnitudeCodebook(levels=y, kind="numeric", a=a, converged=converged,
                             meta={"gradient_norm": gnorm, "restarts": restarts, "seed": seed})


def tail_term(model: MagnitudeDistribution, codebook: MagnitudeCodebook) -> float:
    """Last-level gradient magnitude ``|((r-1) y f(y) - (1 - F(y))) / y^2|`` at ``y = y_N``."""
    y = codebook.levels[-1]
    r = codebook.r if codebook.r is not None else codebook.levels[-1] / codebook.levels[-2]
    return abs(((r - 1.0) * y * model.pdf(y) - model.sf(y)) / y**2)


def power_bound(model: MagnitudeDistribution, codebook: MagnitudeCodebook) -> float:
    """Upper bound ``rho (1 + N^-zeta + omega N^-2zeta)`` on ``P`` for the uniform-dB codebook."""
    c = model.constants()
    L = codebook.r - 1.0
    return c.rho_csi * (1.0 + L + c.omega * L * L)


def diagnostics(model: MagnitudeDistribution, q: float, N: int) -> MagnitudeDiagnostics:
    if N < 4:
        raise DomainError("diagnostics need at least four levels")
    cb = build_uniform_db(model, q, N)
    g = gradient(model, cb, q)
    mu = model.fprime_max(cb.levels[0])
    D = tail_term(model, cb)
    L = cb.r - 1.0
    return MagnitudeDiagnostics(
        gradient_norm=float(np.linalg.norm(g)),
        mu=float(mu),
        tail_term=float(D),
        zeta=float(cb.zeta),
        gradient_bound=float(0.5 * mu * math.sqrt(N) * L * L + D),
        power_bound_ratio=float(power_bound(model, cb) / model.constants().rho_csi),
    )


def comparison_csv(uniform: MagnitudeCodebook, numeric: MagnitudeCodebook) -> str:
    """Rows ``(n, y_uniform_dB, y_numeric_dB)`` for plotting both codebooks."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n", "y_uniform_dB", "y_numeric_dB"])
    for n, (u, v) in enumerate(zip(uniform.levels_db(), numeric.levels_db()), start=1):
        w.writerow([n, repr(float(u)), repr(float(v))])
    return buf.getvalue()
