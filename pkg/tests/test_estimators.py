import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.linear_model import LogisticRegression

from ggmc import ContractViolation, make_gaussian, make_synthetic_logistic_data
from ggmc.estimators import BayesianLogisticRegression, GGMCSampler


@pytest.fixture(scope="module")
def logistic_data():
    x, y, theta = make_synthetic_logistic_data(400, 3, seed=2)
    return x, y, theta


def test_params_roundtrip():
    est = GGMCSampler(step_size=0.2, friction=3.0, n_steps=10)
    params = est.get_params()
    assert params["step_size"] == 0.2 and params["friction"] == 3.0
    twin = clone(est)
    assert twin.get_params() == params
    est.set_params(temperature=2.0)
    assert est.temperature == 2.0


def test_not_fitted():
    with pytest.raises(NotFittedError):
        GGMCSampler().transform()
    with pytest.raises(NotFittedError):
        BayesianLogisticRegression().predict(np.zeros((2, 2)))


def test_fit_on_target():
    est = GGMCSampler(step_size=0.4, n_steps=20_000, burn_in=100,
                      target=make_gaussian([1.0, -1.0], [1.0, 2.0]), random_state=3)
    est.fit()
    assert est.samples_.shape == (1, 19_900, 2)
    np.testing.assert_allclose(est.posterior_mean_, [1.0, -1.0], atol=0.1)
    assert est.transform().shape == (19_900, 2)
    assert abs(est.kinetic_temperature() - 1.0) < 0.05
    u, k = est.energies()
    assert u.shape == k.shape == (1, 19_900)
    assert 0.9 < est.acceptance_rate_ <= 1.0
    assert est.summary_.n_samples == 19_900


def test_multiple_chains():
    est = GGMCSampler(n_steps=200, n_chains=3, target=make_gaussian([0.0], [1.0])).fit()
    assert est.samples_.shape == (3, 200, 1)
    assert len(est.summary_) == 3


def test_needs_data_or_target():
    with pytest.raises(ContractViolation):
        GGMCSampler().fit()


def test_sgd_parameterization(logistic_data):
    x, y, _ = logistic_data
    est = GGMCSampler(learning_rate=0.16, momentum=0.9, n_steps=50).fit(x, y)
    assert est.config_.step_size == pytest.approx(0.02)
    assert est.config_.momentum_permanence == pytest.approx(0.9)
    with pytest.raises(ContractViolation):
        GGMCSampler(learning_rate=0.1).fit(x, y)
    sgld = GGMCSampler(learning_rate=0.16, momentum=0.0, correction="none", n_steps=20)
    assert sgld.fit(x, y).integrator_.value == "sgld"


def test_pairing_error_surfaces(logistic_data):
    x, y, _ = logistic_data
    with pytest.raises(ContractViolation):
        GGMCSampler(integrator="euler_maruyama", n_steps=5).fit(x, y)


def test_blr_matches_map_estimate(logistic_data):
    x, y, _ = logistic_data
    blr = BayesianLogisticRegression(step_size=0.05, n_steps=20_000, burn_in=500,
                                     fit_intercept=False, random_state=1).fit(x, y)
    ref = LogisticRegression(C=1.0, fit_intercept=False).fit(x, y)
    np.testing.assert_allclose(blr.posterior_mean_, ref.coef_[0], atol=0.1)
    agree = np.mean(blr.predict(x) == ref.predict(x))
    assert agree > 0.97
    proba = blr.predict_proba(x)
    np.testing.assert_allclose(proba.sum(axis=1), 1.0)
    assert blr.score(x, y) > 0.6


def test_blr_string_labels_and_intercept(logistic_data):
    x, y, _ = logistic_data
    labels = np.where(y == 1, "yes", "no")
    blr = BayesianLogisticRegression(n_steps=500).fit(x, labels)
    assert set(blr.classes_) == {"no", "yes"}
    assert blr.samples_.shape[-1] == x.shape[1] + 1
    assert set(blr.predict(x[:20])) <= {"no", "yes"}
    assert blr.decision_function(x[:5]).shape == (5,)


def test_blr_rejects_bad_input(logistic_data):
    x, y, _ = logistic_data
    with pytest.raises(ValueError):
        BayesianLogisticRegression(n_steps=5).fit(x, np.arange(len(y)) % 3)
    blr = BayesianLogisticRegression(n_steps=50).fit(x, y)
    with pytest.raises(ValueError):
        blr.predict(x[:, :2])
