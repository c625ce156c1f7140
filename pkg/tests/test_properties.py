import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from semiiv import (
    ExclusionSpec,
    LinearAteInputs,
    WeakRelevanceError,
    ate_weighted_formula,
    build_exclusion_map,
    counterfactual,
    estimate_linear_ate,
    rank_of,
    recover_selection_probs,
)
from semiiv.exclusion import rational_rank, structural_rank
from semiiv.system import adjugate

finite = st.floats(-5, 5, allow_nan=False, allow_infinity=False)


@given(arrays(float, (4, 4), elements=finite))
def test_adjugate_identity(m):
    lhs = m @ adjugate(m)
    scale = max(1.0, float(np.abs(m).max())) ** 4
    np.testing.assert_allclose(lhs, np.linalg.det(m) * np.eye(4), atol=1e-9 * scale)


@st.composite
def exclusion_specs(draw):
    J = draw(st.integers(1, 3))
    nz = draw(st.integers(1, 5))
    rows = []
    for _ in range(J):
        n_d = draw(st.integers(1, nz))
        row = list(range(1, n_d + 1)) + draw(st.lists(st.integers(1, n_d), min_size=nz - n_d, max_size=nz - n_d))
        rows.append(draw(st.permutations(row)))
    return ExclusionSpec(J, nz, rows)


@given(exclusion_specs())
def test_exclusion_round_trip_and_rank(spec):
    again = ExclusionSpec.from_dict(spec.to_dict())
    assert again == spec
    emap = build_exclusion_map(spec)
    assert emap.chi.shape == (spec.support_size, spec.n_q)
    r = rational_rank(emap.chi)
    assert r <= structural_rank(emap.chi) <= min(emap.chi.shape)


@settings(max_examples=200)
@given(
    arrays(float, 4, elements=finite),
    arrays(float, 4, elements=st.floats(0.05, 0.95)),
)
def test_weighted_formula_matches_solve(means, probs):
    inputs = LinearAteInputs(means, probs)
    try:
        res = estimate_linear_ate(inputs)
    except WeakRelevanceError:
        return
    assert ate_weighted_formula(inputs) == pytest.approx(res.delta, rel=1e-7, abs=1e-7 * res.cond)


@pytest.fixture(scope="module")
def model(regular_solved):
    dgp, dens, path = regular_solved
    return dgp, recover_selection_probs(path, dgp.exclusion_map, dens)


@given(st.floats(0.0, 1.0), st.sampled_from([(1, 1), (1, 2), (2, 3), (2, 4)]))
def test_monotone_inverse_round_trip(model, eta, cell):
    dgp, rec = model
    y = float(dgp.outcome(*cell)(eta))
    u = rank_of(y, *cell, rec)
    assert u == pytest.approx(eta, abs=1e-3)
    back = counterfactual(np.array([y]), cell, cell, rec)
    assert back[0] == pytest.approx(y, abs=1e-9)
