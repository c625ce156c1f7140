import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from semiiv import DataError, DomainError, LinearSemiIVATE, SemiIVEstimator, SpecificationError, analytic_truth, draw_sample, fixtures


def _matrix(data):
    return np.column_stack([data.d, data.y, data.z]).astype(float)


@pytest.fixture(scope="module")
def fitted_dgp():
    return SemiIVEstimator(z_policy="observed").fit_dgp(fixtures.binary_regular())


def test_params_round_trip():
    est = SemiIVEstimator(grid_size=501, backward=True)
    params = est.get_params()
    assert params["grid_size"] == 501 and params["backward"] is True
    est.set_params(rtol=1e-6)
    assert clone(est).get_params()["rtol"] == 1e-6


def test_fit_dgp_attributes(fitted_dgp):
    dgp = fixtures.binary_regular()
    assert fitted_dgp.report_.passed
    assert fitted_dgp.path_.grid.size == 1001
    err = np.abs(fitted_dgp.path_.values - analytic_truth(dgp, fitted_dgp.path_.grid).values).max()
    assert err <= 1e-4
    assert fitted_dgp.selection_probabilities().shape == (1001, 4, 2)
    assert "2-1" in fitted_dgp.effects_.weighted_ate


def test_transform_and_predict(fitted_dgp):
    dgp = fixtures.binary_regular()
    eta = np.array([0.1, 0.5, 0.9])
    X = np.column_stack([[1, 1, 2], [dgp.outcome(1, 1)(eta[0]), dgp.outcome(1, 2)(eta[1]), dgp.outcome(2, 4)(eta[2])], [1, 2, 4]])
    np.testing.assert_allclose(fitted_dgp.transform(X), eta, atol=1e-3)
    pred = fitted_dgp.predict(X, (2, 1))
    np.testing.assert_allclose(pred, dgp.outcome(2, 1)(eta), atol=1e-3)


def test_fit_on_sample():
    dgp = fixtures.binary_regular()
    X = _matrix(draw_sample(dgp, 100_000, seed=3))
    est = SemiIVEstimator(exclusion=dgp.exclusion).fit(X)
    assert est.report_.mode == "empirical"
    err = np.abs(est.path_.values - analytic_truth(dgp, est.path_.grid).values).max()
    assert err <= 5e-2
    ranks = est.transform(X)
    assert ranks.min() >= 0.0 and ranks.max() <= 1.0
    # ranks of the sample are close to uniform within each cell
    assert np.mean(ranks) == pytest.approx(0.5, abs=2e-2)
    with pytest.raises(DomainError):
        est.set_params(out_of_support="raise").transform(np.array([[1.0, 1e3, 1.0]]))
    with pytest.raises(SpecificationError):
        est.set_params(out_of_support="bogus").transform(X[:5])


def test_not_fitted_and_bad_input():
    est = SemiIVEstimator(exclusion=fixtures.binary_regular().exclusion)
    with pytest.raises(NotFittedError):
        est.transform(np.array([[1.0, 0.0, 1.0]]))
    with pytest.raises(DataError):
        est.fit(np.array([[1.0, 0.0]]))
    with pytest.raises(DataError):
        est.fit(np.array([[1.5, 0.0, 1.0]]))
    with pytest.raises(DataError):
        est.fit(np.array([[3.0, 0.0, 1.0]]))
    with pytest.raises(SpecificationError):
        SemiIVEstimator().fit(np.array([[1.0, 0.0, 1.0]]))


def test_failed_fit_keeps_report():
    est = SemiIVEstimator()
    with pytest.raises(Exception) as info:
        est.fit_dgp(fixtures.binary_irrelevant())
    assert info.value.exit_code == 4
    assert est.report_.relevance["verdict"] == "interval-degenerate"
    assert not hasattr(est, "model_")


def test_linear_ate_estimator():
    dgp = fixtures.binary_additive()
    X = _matrix(draw_sample(dgp, 100_000, seed=5))
    est = LinearSemiIVATE().fit(X)
    assert est.delta_ == pytest.approx(fixtures.ADDITIVE_PARAMS["delta"], abs=0.3)
    cells = np.array([[d, 0.0, z] for d in (1, 2) for z in range(1, 5)])
    beta, delta, a0, a1 = est.coef_
    pred = est.predict(cells)
    assert pred[0] == pytest.approx(beta)
    assert pred[1] == pytest.approx(beta + a0)
    assert pred[7] == pytest.approx(beta + delta + a1)
    with pytest.raises(NotFittedError):
        LinearSemiIVATE().predict(cells)
