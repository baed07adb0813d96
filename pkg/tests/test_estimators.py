import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.pipeline import make_pipeline

from fbquant.distributions import ChiSquare
from fbquant.estimators import DirectionQuantizer, MagnitudeQuantizer, ProductQuantizer
from fbquant.magnitude import average_power


@pytest.fixture(scope="module")
def H():
    return np.random.default_rng(0).standard_normal((2000, 5))


def test_params_round_trip():
    est = MagnitudeQuantizer(n_levels=8, outage=1e-3)
    assert est.get_params() == {"n_levels": 8, "outage": 1e-3, "method": "uniform-dB",
                                "restarts": 20, "random_state": 0}
    other = clone(est).set_params(n_levels=4)
    assert other.n_levels == 4 and est.n_levels == 8


def test_magnitude_quantizer(H):
    est = MagnitudeQuantizer(n_levels=8, outage=1e-2).fit(H)
    assert est.n_features_in_ == 5
    idx = est.predict(H)
    Y = np.einsum("ij,ij->i", H, H)
    live = idx >= 0
    assert np.all(Y[~live] < est.levels_[0])
    assert np.all(est.levels_[idx[live]] <= Y[live])
    Yq = est.transform(H)
    assert Yq.shape == (2000, 1)
    assert np.all(Yq[~live] == 0)
    assert est.average_power_ == pytest.approx(average_power(ChiSquare(5), est.codebook_, 1e-2))


def test_numeric_method(H):
    est = MagnitudeQuantizer(n_levels=6, method="numeric", restarts=2).fit(H)
    assert est.codebook_.kind == "numeric"
    with pytest.raises(ValueError):
        MagnitudeQuantizer(method="other").fit(H)


def test_direction_quantizer(H):
    est = DirectionQuantizer(n_codewords=16, restarts=1, iterations=50).fit(H)
    U = est.transform(H[:10])
    assert U.shape == (10, 5)
    assert np.allclose(np.linalg.norm(U, axis=1), 1)
    assert 0 < est.delta_ <= 1
    assert est.phi_ == pytest.approx(np.arcsin(est.delta_))


def test_product_quantizer(H, tmp_path):
    est = ProductQuantizer(n_bits=8, allocation=(3, 5), outage=1e-2, cache_dir=tmp_path, restarts=1).fit(H)
    assert est.allocation_ == (3, 5)
    regions = est.predict(H)
    assert regions.min() >= 0 and regions.max() <= 8 * 32
    P = est.transform(H)[:, 0]
    assert np.all((P == 0) == (regions == 0))
    assert est.score(H) == pytest.approx(-P.mean())
    closed = ProductQuantizer(n_bits=12, cache_dir=tmp_path, restarts=1).fit(H)
    assert sum(closed.allocation_) == 12


def test_pipeline_and_validation(H):
    pipe = make_pipeline(MagnitudeQuantizer(n_levels=4, outage=1e-2))
    assert pipe.fit_transform(H).shape == (2000, 1)
    est = MagnitudeQuantizer(n_levels=4)
    with pytest.raises(NotFittedError):
        est.predict(H)
    est.fit(H)
    with pytest.raises(ValueError):
        est.predict(H[:, :3])
    with pytest.raises(ValueError):
        est.predict(np.full((2, 5), np.nan))
