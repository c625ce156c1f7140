import numpy as np
import pytest
from scipy.stats import kstest

from oracles import CELL_SHARES_REGULAR
from semiiv import Dataset, DgpSpec, LogitSelection, OutcomeFunction, SpecificationError, analytic_truth, draw_sample, fixtures
from semiiv.exclusion import full_exclusion


def test_affine_and_power_evaluation():
    assert OutcomeFunction("affine", 1.0, 2.0)(0.5) == pytest.approx(2.0)
    assert OutcomeFunction("power", 0.0, 1.0, 2.0)(0.0) == 0.0
    q = OutcomeFunction("power", 0.5, 2.0, 0.7)
    y = q(np.array([0.1, 0.6]))
    np.testing.assert_allclose(q.inverse(y), [0.1, 0.6], atol=1e-12)


def test_nonincreasing_outcome_rejected():
    with pytest.raises(SpecificationError):
        OutcomeFunction("affine", 0.0, -1.0)


def test_probability_floor_enforced():
    sel = LogitSelection(np.array([[0.0, 9.0], [0.0, 0.0]]), np.zeros((2, 2)))
    with pytest.raises(SpecificationError):
        DgpSpec(full_exclusion(2, 2), (OutcomeFunction("affine", 0, 1),) * 2, sel)


def test_analytic_truth_monotone():
    for make in fixtures.FIXTURES.values():
        dgp = make()
        path = analytic_truth(dgp)
        assert np.all(np.diff(path.values, axis=0) > 0)


def test_reproducible_bit_for_bit():
    dgp = fixtures.binary_regular()
    a = draw_sample(dgp, 5000, seed=3)
    b = draw_sample(dgp, 5000, seed=3)
    np.testing.assert_array_equal(a.y, b.y)
    np.testing.assert_array_equal(a.d, b.d)
    c = draw_sample(dgp, 5000, seed=4)
    assert not np.array_equal(a.y, c.y)


def test_constant_selection_frequencies():
    dgp = fixtures.constant_selection()
    data = draw_sample(dgp, 200_000, seed=5)
    p2 = dgp.selection_probs(np.array([0.3]))[0, :, 1]
    for z in (1, 2):
        freq = np.mean(data.d[data.z == z] == 2)
        assert abs(freq - p2[z - 1]) < 0.01


def test_cell_frequencies_match_quadrature():
    data = draw_sample(fixtures.binary_regular(), 1_000_000, seed=1)
    for z in range(1, 5):
        sel = data.z == z
        freq = np.mean(data.d[sel] == 2)
        se = np.sqrt(CELL_SHARES_REGULAR[z - 1] * (1 - CELL_SHARES_REGULAR[z - 1]) / sel.sum())
        assert abs(freq - CELL_SHARES_REGULAR[z - 1]) < 3 * se


def test_cell_ranges_approach_outcome_bounds():
    dgp = fixtures.binary_regular()
    data = draw_sample(dgp, 100_000, seed=2)
    for d in (1, 2):
        for z in range(1, 5):
            y = data.cell(d, z)
            q = dgp.outcome(d, z)
            assert abs(y.min() - q(0.0)) < 0.01 and abs(y.max() - q(1.0)) < 0.01


def test_hidden_rank_uniform_within_each_cell():
    data = draw_sample(fixtures.binary_regular(), 100_000, seed=9, debug_eta=True)
    for z in range(1, 5):
        assert kstest(data.eta[data.z == z], "uniform").pvalue > 1e-3


def test_rank_column_only_with_debug_flag(tmp_path):
    dgp = fixtures.standard_iv()
    plain = draw_sample(dgp, 100, seed=1)
    assert plain.eta is None
    debug = draw_sample(dgp, 100, seed=1, debug_eta=True)
    debug.to_csv(tmp_path / "d.csv")
    back = Dataset.from_csv(tmp_path / "d.csv")
    np.testing.assert_array_equal(back.y, debug.y)
    assert back.eta is not None
    plain.to_csv(tmp_path / "p.csv")
    assert (tmp_path / "p.csv").read_text().splitlines()[1] == "d,y,z"


def test_dgp_json_round_trip(tmp_path):
    dgp = fixtures.three_alternatives()
    dgp.to_json(tmp_path / "dgp.json")
    back = DgpSpec.from_json(tmp_path / "dgp.json")
    np.testing.assert_allclose(back.qtilde(0.3), dgp.qtilde(0.3))
    np.testing.assert_allclose(back.selection_probs(0.3), dgp.selection_probs(0.3))


def test_sample_size_must_be_positive():
    with pytest.raises(SpecificationError):
        draw_sample(fixtures.standard_iv(), 0, seed=1)
