import json

import numpy as np
import pytest

from semiiv import (
    DgpSpec,
    DomainError,
    LogitSelection,
    MonotonePath,
    OutcomeFunction,
    SpecificationError,
    analytic_density,
    assemble_m_tilde,
    counterfactual,
    estimate_linear_ate,
    fixtures,
    inputs_from_dgp,
    rank_of,
    recover_selection_probs,
    relevance_profile,
    treatment_effects,
)
from semiiv.exclusion import full_exclusion
from semiiv.inference import QTE_LEVELS

from conftest import _solve


@pytest.fixture(scope="module")
def regular_model(regular_solved):
    dgp, dens, path = regular_solved
    return dgp, recover_selection_probs(path, dgp.exclusion_map, dens)


@pytest.fixture(scope="module")
def constant_model():
    dgp, dens, path = _solve(fixtures.constant_selection())
    return dgp, recover_selection_probs(path, dgp.exclusion_map, dens)


def test_probabilities_recovered(regular_model):
    dgp, model = regular_model
    assert np.max(np.abs(model.probabilities - dgp.selection_probs(model.grid))) <= 1e-3
    assert model.row_sum_deviation <= 1e-3
    np.testing.assert_allclose(model.probabilities.sum(axis=2), 1.0, atol=1e-12)
    assert np.all((model.probabilities >= 0) & (model.probabilities <= 1))


def test_constant_selection_probabilities_flat(constant_model):
    dgp, model = constant_model
    p = model.probabilities
    assert np.max(np.abs(p - p[500])) <= 1e-3


def test_rank_of_inverse(regular_model):
    dgp, model = regular_model
    for d, z in ((1, 1), (2, 3)):
        q = dgp.outcome(d, z)
        assert rank_of(q(0.5), d, z, model) == pytest.approx(0.5, abs=1e-8)
        assert rank_of(q(0.0), d, z, model) == pytest.approx(0.0, abs=1e-12)


def test_rank_of_closed_form(constant_model):
    # second outcome is 1 + 2 eta
    _, model = constant_model
    assert rank_of(2.0, 2, 1, model) == pytest.approx(0.5, abs=1e-9)


def test_rank_out_of_support(regular_model):
    _, model = regular_model
    with pytest.raises(DomainError):
        rank_of(-5.0, 1, 1, model)


def test_counterfactual_identity_and_truth(regular_model):
    dgp, model = regular_model
    eta = np.linspace(0.05, 0.95, 19)
    y = dgp.outcome(1, 2)(eta)
    np.testing.assert_allclose(counterfactual(y, (1, 2), (1, 2), model), y, atol=1e-10)
    np.testing.assert_allclose(counterfactual(y, (1, 2), (2, 4), model), dgp.outcome(2, 4)(eta), atol=1e-3)


def test_counterfactual_round_trip(regular_model, rng):
    dgp, model = regular_model
    q = dgp.outcome(1, 1)
    y = q(rng.uniform(0, 1, 100))
    back = counterfactual(counterfactual(y, (1, 1), (2, 2), model), (2, 2), (1, 1), model)
    np.testing.assert_allclose(back, y, atol=1e-8)


def test_pooled_cells_identical_counterfactuals():
    dgp, dens, path = _solve(fixtures.conditional_regular())
    model = recover_selection_probs(path, dgp.exclusion_map, dens)
    y = dgp.outcome(1, 1)(np.linspace(0.1, 0.9, 9))
    np.testing.assert_array_equal(counterfactual(y, (1, 1), (2, 2), model), counterfactual(y, (1, 1), (2, 3), model))


def test_null_effect():
    sel = LogitSelection(np.array([[0.0, -0.5], [0.0, 0.6]]), np.array([[0.0, 1.0], [0.0, 0.8]]))
    q = OutcomeFunction("affine", 0.2, 1.5)
    dgp, dens, path = _solve(DgpSpec(full_exclusion(2, 2), (q, q), sel))
    table = treatment_effects(recover_selection_probs(path, dgp.exclusion_map, dens))
    for ite in table.columns.values():
        assert np.max(np.abs(ite)) <= 1e-8


def test_additive_constant_effect():
    dgp, dens, path = _solve(fixtures.binary_additive())
    model = recover_selection_probs(path, dgp.exclusion_map, dens)
    table = treatment_effects(model, "fixed", z0=1, z1=1)
    (name, ite), = table.columns.items()
    np.testing.assert_allclose(ite, fixtures.ADDITIVE_PARAMS["delta"], atol=1e-8)
    assert table.summary[name]["ate"] == pytest.approx(2.0, abs=1e-8)


def test_affine_ate_value(constant_model):
    # q_2 - q_1 = 1 + eta
    _, model = constant_model
    table = treatment_effects(model, "observed")
    for row in table.summary.values():
        assert row["ate"] == pytest.approx(1.5, abs=1e-8)
    assert table.weighted_ate["2-1"] == pytest.approx(1.5, abs=1e-8)


def test_qte_equals_ite_at_rank(regular_model):
    _, model = regular_model
    table = treatment_effects(model, "all-pairs")
    assert len(table.columns) == 16
    for name, row in table.summary.items():
        ite = table.columns[name]
        for u in QTE_LEVELS:
            i = int(round(u * (model.grid.size - 1)))
            assert row["qte"][f"{u:.1f}"] == pytest.approx(ite[i], abs=1e-12)
        # quantile of the ITE distribution over uniform ranks
        assert np.quantile(ite, 0.5) == pytest.approx(ite[500], abs=1e-9) or not np.all(np.diff(ite) > 0)


def test_weighted_ate_convention(regular_model):
    _, model = regular_model
    table = treatment_effects(model, "observed")
    w = model.z_weights / model.z_weights.sum()
    same = [table.summary[f"2-1|{z}-{z}"]["ate"] for z in range(1, 5)]
    assert table.weighted_ate["2-1"] == pytest.approx(float(np.dot(w, same)))


def test_fixed_policy_needs_values(regular_model):
    _, model = regular_model
    with pytest.raises(SpecificationError):
        treatment_effects(model, "fixed")
    with pytest.raises(SpecificationError):
        treatment_effects(model, "bogus")


def test_gapped_path_effects(regular_solved):
    dgp, dens, path = regular_solved
    values = path.values.copy()
    values[400:601] = np.nan
    gapped = MonotonePath(path.grid, values, path.labels, {})
    model = recover_selection_probs(gapped, dgp.exclusion_map, dens)
    assert np.all(np.isnan(model.probabilities[400:601]))
    assert np.all(np.isfinite(model.probabilities[:400]))
    table = treatment_effects(model, "observed")
    row = table.summary["2-1|1-1"]
    assert row["identified_mass"] == pytest.approx(0.399 + 0.399, abs=1e-9)


def test_sign_pattern_from_recovered_probabilities(singular_solved):
    dgp, dens, path = singular_solved
    emap = dgp.exclusion_map
    model = recover_selection_probs(path, emap, dens)
    prof = relevance_profile(emap, dgp, grid=path.grid)
    chi = emap.chi
    for i in range(0, path.grid.size, 10):
        m = np.zeros(chi.shape)
        for z in range(1, 5):
            for d in (1, 2):
                m[z - 1, emap.column(d, z)] = model.probabilities[i, z - 1, d - 1]
        det = np.linalg.det(m)
        if abs(prof.det[i]) > 1e-4:
            assert np.sign(det) == np.sign(prof.det[i])


def test_pipeline_matches_closed_form_delta():
    dgp, dens, path = _solve(fixtures.binary_additive())
    model = recover_selection_probs(path, dgp.exclusion_map, dens)
    ate = treatment_effects(model, "fixed", z0=1, z1=1).summary["2-1|1-1"]["ate"]
    delta = estimate_linear_ate(inputs_from_dgp(dgp)).delta
    assert abs(ate - delta) <= 1e-2


def test_effects_exports(tmp_path, regular_model):
    _, model = regular_model
    table = treatment_effects(model, "observed")
    table.to_csv(tmp_path / "e.csv")
    table.to_json(tmp_path / "e.json")
    lines = (tmp_path / "e.csv").read_text().splitlines()
    assert lines[0] == "#schema=semiiv.effects/1"
    assert lines[1].startswith("eta,ite[2-1|1-1]")
    doc = json.loads((tmp_path / "e.json").read_text())
    assert doc["z_policy"] == "observed" and "2-1" in doc["weighted_ate"]


def test_rank_clipping(regular_model):
    dgp, model = regular_model
    lo, hi = dgp.outcome(1, 1)(0.0), dgp.outcome(1, 1)(1.0)
    np.testing.assert_allclose(rank_of(np.array([lo - 1.0, hi + 1.0]), 1, 1, model, clip=True), [0.0, 1.0])
    with pytest.raises(DomainError):
        rank_of(hi + 1.0, 1, 1, model)
