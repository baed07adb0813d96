"""scikit-learn style front end.

Channels are rows of ``X`` with one column per transmit antenna. The
codebooks are designed for i.i.d. Gaussian channels, so ``fit`` only reads
the antenna count from ``X``; ``predict`` returns quantization indices and
``transform`` what the transmitter does with them.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .allocation import SinPhiTable, closed_form, exhaustive
from .direction import CodebookCache, generate, quantize_direction
from .distributions import ChiSquare
from .link import SystemConfig, _quantize_arrays, assemble
from .magnitude import average_power, build_uniform_db, optimize_numeric


def _check_features(est, X, reset):
    X = check_array(X, dtype=np.float64)
    if reset:
        est.n_features_in_ = X.shape[1]
    elif X.shape[1] != est.n_features_in_:
        raise ValueError(f"X has {X.shape[1]} features, but {type(est).__name__} was fitted with {est.n_features_in_}")
    return X


class MagnitudeQuantizer(TransformerMixin, BaseEstimator):
    """Quantizer for ``||h||^2`` with outage probability ``outage``.

    ``method="uniform-dB"`` builds the closed-form geometric codebook,
    ``method="numeric"`` minimizes the average power directly.
    """

    def __init__(self, n_levels=16, outage=1e-4, method="uniform-dB", restarts=20, random_state=0):
        self.n_levels = n_levels
        self.outage = outage
        self.method = method
        self.restarts = restarts
        self.random_state = random_state

    def fit(self, X, y=None):
        X = _check_features(self, X, reset=True)
        self.model_ = ChiSquare(self.n_features_in_)
        if self.method == "uniform-dB":
            self.codebook_ = build_uniform_db(self.model_, self.outage, self.n_levels)
        elif self.method == "numeric":
            self.codebook_ = optimize_numeric(self.model_, self.outage, self.n_levels,
                                              restarts=self.restarts, seed=self.random_state)
        else:
            raise ValueError(f"unknown method {self.method!r}")
        self.levels_ = np.asarray(self.codebook_.levels)
        self.average_power_ = average_power(self.model_, self.codebook_, self.outage)
        return self

    def predict(self, X):
        """Magnitude interval index, ``-1`` inside the outage ball."""
        check_is_fitted(self)
        X = _check_features(self, X, reset=False)
        return self.codebook_.quantize(np.einsum("ij,ij->i", X, X))

    def transform(self, X):
        """Quantized magnitude ``Y~`` per channel, ``0`` in outage."""
        idx = self.predict(X)
        out = np.zeros(len(idx))
        live = idx >= 0
        out[live] = self.levels_[idx[live]]
        return out[:, None]


class DirectionQuantizer(TransformerMixin, BaseEstimator):
    """Grassmannian line codebook of ``n_codewords`` lines."""

    def __init__(self, n_codewords=64, restarts=4, iterations=None, random_state=0):
        self.n_codewords = n_codewords
        self.restarts = restarts
        self.iterations = iterations
        self.random_state = random_state

    def fit(self, X, y=None):
        _check_features(self, X, reset=True)
        self.codebook_ = generate(self.n_features_in_, self.n_codewords, restarts=self.restarts,
                                  iterations=self.iterations, seed=self.random_state)
        self.delta_ = self.codebook_.delta
        self.phi_ = self.codebook_.phi
        return self

    def predict(self, X):
        check_is_fitted(self)
        X = _check_features(self, X, reset=False)
        return quantize_direction(self.codebook_, X)[0]

    def transform(self, X):
        """Quantized direction (the beamforming vector) for each channel."""
        return self.codebook_.vectors[self.predict(X)]


class ProductQuantizer(TransformerMixin, BaseEstimator):
    """Magnitude-direction product codebook with robust power control.

    ``allocation`` is ``"closed-form"``, ``"exhaustive"`` or an explicit
    ``(Bdot, Bddot)`` pair.
    """

    def __init__(self, n_bits=12, allocation="closed-form", outage=1e-4, target_snr=1.0,
                 phi_mode="paper", random_state=0, cache_dir=None, restarts=4):
        self.n_bits = n_bits
        self.allocation = allocation
        self.outage = outage
        self.target_snr = target_snr
        self.phi_mode = phi_mode
        self.random_state = random_state
        self.cache_dir = cache_dir
        self.restarts = restarts

    def fit(self, X, y=None):
        _check_features(self, X, reset=True)
        model = ChiSquare(self.n_features_in_)
        cache = CodebookCache(self.cache_dir, restarts=self.restarts)
        if self.allocation == "closed-form":
            alloc = closed_form(model.M, self.n_bits)
            split = (alloc.Bdot, alloc.Bddot)
        elif self.allocation == "exhaustive":
            alloc = exhaustive(model, self.outage, self.n_bits, SinPhiTable(model.M, cache, seed=self.random_state))
            split = (alloc.Bdot, alloc.Bddot)
        else:
            split = tuple(int(b) for b in self.allocation)
        self.allocation_ = split
        cfg = SystemConfig(model, self.outage, self.target_snr, self.n_bits, split)
        self.system_ = assemble(cfg, cache, phi_mode=self.phi_mode, seed=self.random_state)
        return self

    def predict(self, X):
        """Region index: ``0`` for the outage ball, else ``1 + m * N_dir + d``."""
        check_is_fitted(self)
        X = _check_features(self, X, reset=False)
        _, m, d, _, out = _quantize_arrays(self.system_, X)
        return np.where(out, 0, 1 + m * self.system_.direction.N + d)

    def transform(self, X):
        """Transmit power per channel."""
        check_is_fitted(self)
        X = _check_features(self, X, reset=False)
        _, m, _, _, out = _quantize_arrays(self.system_, X)
        power = np.zeros(len(X))
        live = ~out
        power[live] = self.target_snr / (self.system_.magnitude.levels[m[live]] * self.system_.cos2_phi)
        return power[:, None]

    def score(self, X, y=None):
        """Negative mean transmit power (higher is better)."""
        return -float(self.transform(X).mean())
