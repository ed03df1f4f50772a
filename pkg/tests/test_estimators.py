import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.utils.validation import check_is_fitted

from robustpost.estimators import DirichletProcessShrinkage, ShrinkageEstimator


@pytest.fixture
def data():
    rng = np.random.default_rng(0)
    theta = rng.standard_t(5, size=80) * 2
    return theta, theta + rng.normal(size=80)


@pytest.mark.parametrize("est", [
    ShrinkageEstimator(prior="laplace", robust=False, n_scans=300, burn_in=100, random_state=0),
    ShrinkageEstimator(prior="normal", robust=True, n_scans=200, burn_in=50, random_state=0),
    ShrinkageEstimator(prior="mixture", robust=True, n_scans=200, burn_in=50, random_state=0),
    DirichletProcessShrinkage(n_scans=300, burn_in=100, random_state=0),
])
def test_fit_in_input_order(est, data):
    theta, y = data
    with pytest.raises(NotFittedError):
        check_is_fitted(est)
    out = est.fit_transform(y)
    check_is_fitted(est)
    assert out.shape == y.shape
    # estimates line up with the input, not the q-sorted order
    assert np.corrcoef(out, y)[0, 1] > 0.9
    assert np.mean((out - theta) ** 2) < np.mean((y - theta) ** 2)
    assert np.array_equal(est.order_[np.argsort(est.order_)], np.arange(80))
    again = clone(est).fit(y).theta_hat_
    assert np.array_equal(out, again)


def test_params_roundtrip():
    est = ShrinkageEstimator(prior="normal", n_scans=10)
    assert est.get_params()["prior"] == "normal"
    assert clone(est).set_params(robust=False).robust is False


def test_acceptance_and_traces(data):
    _, y = data
    est = ShrinkageEstimator(prior="laplace", n_scans=200, burn_in=50, random_state=1).fit(y)
    assert 0 < est.acceptance_rate_ < 1
    assert est.hyperparameter_trace_["eta1"].size == 200


def test_heteroscedastic_errors(data):
    _, y = data
    sd = np.linspace(0.5, 2, y.size)
    est = ShrinkageEstimator(prior="normal", robust=False, n_scans=200, burn_in=50, error_sd=sd, random_state=2)
    out = est.fit_transform(y)
    assert np.all(np.isfinite(out))


@pytest.mark.parametrize("y, kw", [
    ([1.0], {}),
    ([1.0, np.nan], {}),
    ([1.0, 2.0], {"error_sd": 0.0}),
    ([1.0, 2.0], {"prior": "cauchy"}),
])
def test_invalid_input(y, kw):
    with pytest.raises(ValueError):
        ShrinkageEstimator(n_scans=10, burn_in=1, **kw).fit(y)


def test_column_vector_accepted(data):
    _, y = data
    with pytest.warns(Warning):
        out = ShrinkageEstimator(prior="normal", robust=False, n_scans=50, burn_in=10, random_state=0).fit_transform(
            y.reshape(-1, 1))
    assert out.shape == (80,)
