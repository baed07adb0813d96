"""Real Grassmannian line packings used as channel direction codebooks.

A line is stored as one unit vector ``u`` (``u`` and ``-u`` are the same
line). The distance between lines is the chordal distance
``sin(angle(u, v))`` with ``angle(u, v) = arccos |u.v|``, and a codebook is
summarized by its minimum chordal distance ``delta`` and the cap opening
``phi = arcsin(delta)``.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.integrate import quad
from scipy.optimize import minimize
from scipy.spatial import cKDTree
from scipy.special import gammaln

from .exceptions import DomainError

DENSE_LIMIT = 256
KDTREE_LIMIT = 2048
_TEMPERATURES = (1e-1, 3e-2, 1e-2, 3e-3, 1e-3, 3e-4, 1e-4, 3e-5, 1e-5)


@dataclass(frozen=True)
class DirectionCodebook:
    vectors: np.ndarray
    seed: int | None = None
    covering_radius: float | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        U = np.atleast_2d(np.asarray(self.vectors, dtype=float))
        norms = np.linalg.norm(U, axis=1, keepdims=True)
        if np.any(norms == 0):
            raise DomainError("codewords must be nonzero")
        # leave unit rows untouched so a JSON round trip is exact
        U = np.where(np.abs(norms - 1.0) > 1e-12, U / norms, U)
        U.setflags(write=False)
        object.__setattr__(self, "vectors", U)
        object.__setattr__(self, "_delta", None)
        object.__setattr__(self, "_tree", None)

    @property
    def N(self) -> int:
        return self.vectors.shape[0]

    @property
    def M(self) -> int:
        return self.vectors.shape[1]

    @property
    def delta(self) -> float:
        if self._delta is None:
            object.__setattr__(self, "_delta", min_chordal(self))
        return self._delta

    @property
    def phi(self) -> float:
        return cap_opening(self)

    def tree(self) -> cKDTree:
        if self._tree is None:
            object.__setattr__(self, "_tree", cKDTree(np.vstack([self.vectors, -self.vectors])))
        return self._tree

    def with_covering_radius(self, radius: float) -> "DirectionCodebook":
        return DirectionCodebook(self.vectors, seed=self.seed, covering_radius=float(radius), meta=self.meta)

    def to_dict(self) -> dict:
        return {
            "M": self.M,
            "N": self.N,
            "seed": self.seed,
            "vectors": [[float(v) for v in row] for row in self.vectors],
            "delta": float(self.delta),
            "phi": float(self.phi),
            "coveringRadiusEstimate": self.covering_radius,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "DirectionCodebook":
        return cls(np.array(d["vectors"], dtype=float), seed=d.get("seed"),
                   covering_radius=d.get("coveringRadiusEstimate"))

    @classmethod
    def from_json(cls, text: str) -> "DirectionCodebook":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class ExtrapolationFit:
    """``sin(phi) ~ coefficient * N^slope`` with the slope pinned to ``-1/(M-1)``."""

    coefficient: float
    slope: float
    fit_range: tuple[int, int]

    def sin_phi(self, N):
        return self.coefficient * np.asarray(N, dtype=float) ** self.slope


def min_chordal(codebook) -> float:
    """Exact minimum over pairs of ``sin(angle(u_i, u_j))``."""
    if isinstance(codebook, DirectionCodebook):
        U = codebook.vectors
    else:
        U = np.atleast_2d(np.asarray(codebook, dtype=float))
        U = U / np.linalg.norm(U, axis=1, keepdims=True)
    N = U.shape[0]
    if N < 2:
        raise DomainError("minimum distance needs at least two codewords")
    if N <= KDTREE_LIMIT:
        G = np.abs(U @ U.T)
        np.fill_diagonal(G, 0.0)
        c = min(float(G.max()), 1.0)
        return math.sqrt(max(0.0, 1.0 - c * c))
    d, idx = cKDTree(np.vstack([U, -U])).query(U, k=3)
    d = np.where(idx % N == np.arange(N)[:, None], np.inf, d)
    # closest pair located by the tree, distance recomputed from the inner product
    i = int(np.argmin(d.min(axis=1)))
    j = int(idx[i, np.argmin(d[i])]) % N
    c = min(abs(float(U[i] @ U[j])), 1.0)
    return math.sqrt(max(0.0, 1.0 - c * c))


def cap_opening(codebook) -> float:
    return math.asin(min(1.0, min_chordal(codebook) if not isinstance(codebook, DirectionCodebook)
                         else codebook.delta))


def _as_unit_rows(h):
    h = np.asarray(h, dtype=float)
    single = h.ndim == 1
    H = np.atleast_2d(h)
    norms = np.linalg.norm(H, axis=1)
    if np.any(~(norms > 0)):
        raise DomainError("cannot quantize the direction of a zero vector")
    return H / norms[:, None], single


def quantize_direction(codebook: DirectionCodebook, h):
    """Index and angle of the codeword closest in angle to ``h``.

    Accepts a single vector or a batch of row vectors. Ties go to the lowest
    index on the exhaustive path; large codebooks use a k-d tree over
    ``{u, -u}`` where exact ties have probability zero.
    """
    H, single = _as_unit_rows(h)
    if codebook.N <= KDTREE_LIMIT:
        C = np.abs(H @ codebook.vectors.T)
        idx = np.argmax(C, axis=1)
        cos = np.minimum(C[np.arange(len(H)), idx], 1.0)
    else:
        _, j = codebook.tree().query(H)
        idx = j % codebook.N
        cos = np.minimum(np.abs(np.einsum("ij,ij->i", H, codebook.vectors[idx])), 1.0)
    angle = np.arccos(cos)
    if single:
        return int(idx[0]), float(angle[0])
    return idx, angle


# --- packing construction -------------------------------------------------

def _softmin_objective(x, N, M, t):
    X = x.reshape(N, M)
    nr = np.linalg.norm(X, axis=1, keepdims=True)
    U = X / nr
    G = U @ U.T
    S = G * G
    np.fill_diagonal(S, -np.inf)
    m = S.max()
    E = np.exp((S - m) / t)
    Z = E.sum() / 2.0
    F = m + t * math.log(Z)
    gU = 2.0 * ((E / Z) * G) @ U
    gX = (gU - np.sum(gU * U, axis=1, keepdims=True) * U) / nr
    return F, gX.ravel()


def _dense_packing(M, N, rng, iterations):
    x = rng.standard_normal(N * M)
    for t in _TEMPERATURES:
        x = minimize(_softmin_objective, x, args=(N, M, t), jac=True, method="L-BFGS-B",
                     options={"maxiter": iterations, "ftol": 1e-16, "gtol": 1e-14}).x
    U = x.reshape(N, M)
    return U / np.linalg.norm(U, axis=1, keepdims=True)


def _repulsion_packing(M, N, rng, iterations, k=10, power=20.0):
    # nearest-neighbour repulsion; only the closest lines matter for delta
    U = rng.standard_normal((N, M))
    U /= np.linalg.norm(U, axis=1, keepdims=True)
    rows = np.arange(N)[:, None]
    for it in range(iterations):
        P = np.vstack([U, -U])
        d, idx = cKDTree(P).query(U, k=k + 2)
        d, idx = d[:, 1:], idx[:, 1:]
        d = np.where((idx == rows + N) | (idx == rows), np.inf, d)
        dmin = d.min(axis=1, keepdims=True)
        w = (dmin / d) ** (power + 1.0) / np.where(np.isinf(d), 1.0, d)
        F = np.einsum("ij,ijk->ik", w, U[:, None, :] - P[idx])
        F -= np.sum(F * U, axis=1, keepdims=True) * U
        fn = np.maximum(np.linalg.norm(F, axis=1, keepdims=True), 1e-300)
        step = (0.3 - 0.28 * it / max(iterations, 1)) * np.median(dmin)
        U = U + step * F / fn
        U /= np.linalg.norm(U, axis=1, keepdims=True)
    return U


def generate(M: int, N: int, restarts: int = 4, iterations: int | None = None, seed: int = 0) -> DirectionCodebook:
    """Best-of-``restarts`` line packing maximizing the minimum chordal distance.

    Up to ``DENSE_LIMIT`` lines the log-sum-exp soft maximum of the squared
    pairwise inner products is minimized over a falling temperature schedule
    with L-BFGS (``iterations`` caps each stage). Larger codebooks use a
    single run of nearest-neighbour repulsion for ``iterations`` sweeps.
    Deterministic in all arguments.
    """
    if M < 2 or N < 2:
        raise DomainError("need M >= 2 and N >= 2")
    restarts = max(1, int(restarts))
    if N <= M:
        return DirectionCodebook(np.eye(M)[:N], seed=seed, meta={"construction": "orthonormal"})
    dense = N <= DENSE_LIMIT
    if iterations is None:
        iterations = 300 if dense else 80
    if not dense:
        restarts = 1
    streams = np.random.SeedSequence(seed).spawn(restarts)
    best, best_delta = None, -1.0
    for ss in streams:
        rng = np.random.Generator(np.random.Philox(ss))
        U = _dense_packing(M, N, rng, iterations) if dense else _repulsion_packing(M, N, rng, iterations)
        d = min_chordal(U)
        if d > best_delta:
            best, best_delta = U, d
    return DirectionCodebook(best, seed=seed, meta={"restarts": restarts, "iterations": iterations,
                                                    "construction": "softmin" if dense else "repulsion"})


def covering_radius_estimate(codebook: DirectionCodebook, samples: int = 10**6, seed: int = 0,
                             refine: int = 32, chunk: int = 200_000) -> float:
    """Largest angle from a direction to its nearest codeword, estimated.

    Uniform random directions give a Monte Carlo lower estimate; the
    ``refine`` worst ones are then pushed uphill with Nelder-Mead to the
    local deep hole they sit in. Returns an angle in radians.
    """
    rng = np.random.Generator(np.random.Philox(seed))
    worst_angles, worst_points = [], []
    done = 0
    while done < samples:
        n = min(chunk, samples - done)
        H = rng.standard_normal((n, codebook.M))
        _, ang = quantize_direction(codebook, H)
        top = np.argsort(ang)[-refine:] if refine else np.array([int(np.argmax(ang))])
        worst_angles.append(ang[top])
        worst_points.append(H[top] / np.linalg.norm(H[top], axis=1, keepdims=True))
        done += n
    angles = np.concatenate(worst_angles)
    points = np.vstack(worst_points)
    best = float(angles.max())
    if refine:
        order = np.argsort(angles)[::-1][:refine]
        scale = 0.25 * max(best, 1e-6)
        simplex = np.vstack([np.zeros(codebook.M - 1), scale * np.eye(codebook.M - 1)])
        for x0 in points[order]:
            basis = np.linalg.svd(x0[None, :])[2][1:].T  # tangent directions at x0

            def neg_angle(z, x0=x0, basis=basis):
                x = x0 + basis @ z
                return -quantize_direction(codebook, x)[1]

            res = minimize(neg_angle, np.zeros(codebook.M - 1), method="Nelder-Mead",
                           options={"xatol": 1e-10, "fatol": 1e-13, "initial_simplex": simplex,
                                    "maxfev": 2000})
            best = max(best, -float(res.fun))
    return best


# --- bounds and areas ------------------------------------------------------

def lambda_M(M: int) -> float:
    """``(sqrt(pi) Gamma((M+1)/2) / Gamma(M/2))^(1/(M-1))``."""
    if M < 2:
        raise DomainError("M must be at least 2")
    log_ratio = 0.5 * math.log(math.pi) + gammaln((M + 1) / 2.0) - gammaln(M / 2.0)
    return math.exp(log_ratio / (M - 1))


def hamming_bound_real(M: int, N) -> float:
    """Asymptotic upper bound ``4 lambda_M N^(-1/(M-1))`` on delta for real lines."""
    return 4.0 * lambda_M(M) * np.asarray(N, dtype=float) ** (-1.0 / (M - 1))


def hamming_bound_complex(M: int, N) -> float:
    return 2.0 * np.asarray(N, dtype=float) ** (-1.0 / (2.0 * (M - 1)))


def _unit_ball_volume(M: int) -> float:
    return math.exp(0.5 * M * math.log(math.pi) - gammaln(M / 2.0 + 1.0))


def sphere_area(M: int) -> float:
    """Surface area of the unit sphere in ``R^M``."""
    if M < 2:
        raise DomainError("M must be at least 2")
    return M * _unit_ball_volume(M)


def cap_area(M: int, psi: float) -> float:
    """Area of the two antipodal caps of half-angle ``psi`` around a line."""
    if M < 2:
        raise DomainError("M must be at least 2")
    if not 0.0 < psi <= math.pi / 2:
        raise DomainError("cap half-angle must lie in (0, pi/2]")
    if M == 2:
        return 4.0 * psi
    integral, _ = quad(lambda t: math.sin(t) ** (M - 2), 0.0, psi, epsabs=0.0, epsrel=1e-12, limit=200)
    return 2.0 * (M - 1) * _unit_ball_volume(M - 1) * integral


def fit_extrapolation(points, M: int) -> ExtrapolationFit:
    """Least-squares intercept of ``log sin(phi)`` vs ``log N`` at slope ``-1/(M-1)``."""
    pts = [(float(n), float(s)) for n, s in points]
    if not pts:
        raise DomainError("need at least one (N, sin_phi) point")
    N = np.array([p[0] for p in pts])
    s = np.array([p[1] for p in pts])
    if np.any(N <= 0) or np.any(~((s > 0) & (s <= 1))):
        raise DomainError("points need N > 0 and sin_phi in (0, 1]")
    slope = -1.0 / (M - 1)
    intercept = float(np.mean(np.log(s) - slope * np.log(N)))
    return ExtrapolationFit(coefficient=math.exp(intercept), slope=slope,
                            fit_range=(int(N.min()), int(N.max())))


def sin_phi_csv(rows) -> str:
    """``(N, sin_phi)`` table, optionally with a fitted column."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    rows = list(rows)
    has_fit = rows and len(rows[0]) > 2
    w.writerow(["N", "sin_phi", "sin_phi_fit"] if has_fit else ["N", "sin_phi"])
    for row in rows:
        w.writerow([int(row[0])] + [repr(float(v)) for v in row[1:]])
    return buf.getvalue()


# --- on-disk cache -----------------------------------------------------------

CACHE_ENV = "FBQUANT_CACHE_DIR"


def default_cache_dir() -> Path:
    env = os.environ.get(CACHE_ENV)
    if env:
        return Path(env)
    return Path(os.environ.get("XDG_CACHE_HOME", Path.home() / ".cache")) / "fbquant"


class CodebookCache:
    """Generated packings on disk, keyed by every argument of :func:`generate`."""

    def __init__(self, directory=None, restarts: int = 4, iterations: int | None = None,
                 covering_samples: int = 0):
        self.directory = Path(directory) if directory is not None else default_cache_dir()
        self.restarts = restarts
        self.iterations = iterations
        self.covering_samples = covering_samples
        self._memo: dict = {}

    def _path(self, M, N, seed):
        it = "auto" if self.iterations is None else self.iterations
        restarts = self.restarts if N <= DENSE_LIMIT else 1
        key = f"M{M}_N{N}_seed{seed}_r{restarts}_i{it}_c{self.covering_samples}"
        digest = hashlib.sha1(key.encode()).hexdigest()[:8]
        return self.directory / f"grassmann_{key}_{digest}.json"

    def get(self, M: int, N: int, seed: int = 0) -> DirectionCodebook:
        key = (M, N, seed)
        if key in self._memo:
            return self._memo[key]
        path = self._path(M, N, seed)
        if path.exists():
            cb = DirectionCodebook.from_json(path.read_text())
        else:
            cb = generate(M, N, restarts=self.restarts, iterations=self.iterations, seed=seed)
            if self.covering_samples:
                cb = cb.with_covering_radius(covering_radius_estimate(cb, self.covering_samples, seed=seed))
            self.directory.mkdir(parents=True, exist_ok=True)
            tmp = path.with_suffix(".tmp")
            tmp.write_text(cb.to_json())
            tmp.replace(path)
        self._memo[key] = cb
        return cb
