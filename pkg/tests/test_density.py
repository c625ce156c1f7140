import warnings

import numpy as np
import pytest
from scipy.integrate import quad

from oracles import CELL_SHARES_REGULAR
from semiiv import (
    DataInsufficiencyError,
    Dataset,
    DgpSpec,
    LogitSelection,
    OutcomeFunction,
    SpecificationError,
    analytic_density,
    draw_sample,
    empirical_density,
    export_density_lattice,
    fixtures,
    support_bounds,
)
from semiiv.density import DENSITY_FLOOR, BandwidthPolicy
from semiiv.exclusion import full_exclusion


def _constant_dgp(slope):
    sel = LogitSelection(np.zeros((2, 2)), np.zeros((2, 2)))
    outs = (OutcomeFunction("affine", 0.0, slope),) * 2
    return DgpSpec(full_exclusion(2, 2), outs, sel)


def test_identity_outcome_half_density():
    dens = analytic_density(_constant_dgp(1.0))
    np.testing.assert_allclose(dens.joint_density(1, np.array([0.1, 0.5, 0.9]), 1), 0.5, atol=1e-14)


def test_jacobian_of_scaled_outcome():
    dens = analytic_density(_constant_dgp(2.0))
    np.testing.assert_allclose(dens.joint_density(2, np.array([0.2, 1.0, 1.8]), 2), 0.25, atol=1e-14)
    assert dens.joint_density(1, np.array([-0.1, 2.1]), 1).tolist() == [0.0, 0.0]


def test_mass_equals_integrated_probability():
    dgp = fixtures.binary_regular()
    dens = analytic_density(dgp)
    for z in range(1, 5):
        q = dgp.outcome(2, z)
        mass = quad(lambda y: float(dens.joint_density(2, np.array([y]), z)[0]), q(0.0), q(1.0), epsabs=1e-12)[0]
        assert mass == pytest.approx(CELL_SHARES_REGULAR[z - 1], abs=1e-9)


def test_density_identity_on_grid():
    dgp = fixtures.binary_singular("quadratic")
    dens = analytic_density(dgp)
    eta = np.linspace(0.0, 1.0, 101)
    p = dgp.selection_probs(eta)
    for z in range(1, 5):
        for d in (1, 2):
            q = dgp.outcome(d, z)
            expected = p[:, z - 1, d - 1] / q.derivative(eta)
            np.testing.assert_allclose(dens.joint_density(d, q(eta), z), expected, rtol=0, atol=1e-10)


def _total_mass(dens, dgp, z, n=4001):
    total = 0.0
    for d in range(1, dgp.exclusion.num_alternatives + 1):
        lo, hi = dens.cell_support(d, z)
        y = np.linspace(lo, hi, n)
        total += np.trapezoid(dens.joint_density(d, y, z), y)
    return total


def test_normalization_analytic():
    dgp = fixtures.binary_regular()
    dens = analytic_density(dgp)
    for z in range(1, 5):
        assert abs(_total_mass(dens, dgp, z) - 1.0) < 1e-6


def test_normalization_empirical(regular_sample):
    dgp = fixtures.binary_regular()
    dens = empirical_density(regular_sample, dgp.exclusion_map)
    for z in range(1, 5):
        assert abs(_total_mass(dens, dgp, z) - 1.0) < 1e-2


def test_cdf_matches_density_integral():
    dgp = fixtures.standard_iv()
    dens = analytic_density(dgp)
    q = dgp.outcome(2, 1)
    y = q(0.6)
    integral = quad(lambda t: float(dens.joint_density(2, np.array([t]), 1)[0]), q(0.0), y)[0]
    assert float(dens.joint_cdf(2, np.array([y]), 1)[0]) == pytest.approx(integral, abs=1e-10)


def test_empirical_gap_shrinks_with_n():
    dgp = fixtures.binary_regular()
    exact = analytic_density(dgp)
    gaps = []
    for n in (10_000, 100_000):
        dens = empirical_density(draw_sample(dgp, n, seed=21), dgp.exclusion_map)
        gap = 0.0
        for z in range(1, 5):
            for d in (1, 2):
                q = dgp.outcome(d, z)
                y = q(np.linspace(0.02, 0.98, 200))
                gap = max(gap, np.max(np.abs(dens.joint_density(d, y, z) - exact.joint_density(d, y, z))))
        gaps.append(gap)
    assert gaps[1] < gaps[0]


def test_frequencies_sum_to_one(regular_sample):
    dens = empirical_density(regular_sample, fixtures.binary_regular().exclusion_map)
    for z in range(1, 5):
        assert dens.cell_probability(1, z) + dens.cell_probability(2, z) == pytest.approx(1.0, abs=1e-15)


def test_empty_cell_named():
    emap = fixtures.standard_iv().exclusion_map
    data = Dataset(np.array([1, 1, 1]), np.array([0.1, 0.2, 0.3]), np.array([1, 1, 1]))
    with pytest.raises(DataInsufficiencyError) as info:
        empirical_density(data, emap)
    assert (2, 1) in info.value.missing and (1, 2) in info.value.missing
    assert "(d=2, z=2)" in str(info.value)


def test_analytic_support_endpoints():
    sel = LogitSelection(np.zeros((2, 2)), np.zeros((2, 2)))
    dgp = DgpSpec(full_exclusion(2, 2), (OutcomeFunction("affine", 1.0, 2.0),) * 2, sel)
    b = support_bounds(analytic_density(dgp))
    np.testing.assert_allclose(b.lo, [1.0, 1.0])
    np.testing.assert_allclose(b.hi, [3.0, 3.0])


def test_empirical_support_close_to_truth(regular_sample):
    dgp = fixtures.binary_regular()
    b = support_bounds(empirical_density(regular_sample, dgp.exclusion_map))
    truth = support_bounds(analytic_density(dgp))
    assert np.max(np.abs(b.lo - truth.lo)) < 0.01
    assert np.max(np.abs(b.hi - truth.hi)) < 0.01
    assert b.warnings == ()


def test_pooled_cells_share_bounds():
    dgp = fixtures.conditional_regular()
    dens = analytic_density(dgp)
    assert dens.cell_support(2, 2) == dens.cell_support(2, 3)


def test_incompatible_pooled_supports_warn():
    rng = np.random.default_rng(0)
    n = 4000
    z = rng.integers(1, 3, n)
    d = rng.integers(1, 3, n)
    y = rng.uniform(0, 1, n) + np.where((d == 2) & (z == 2), 5.0, 0.0)
    dens = empirical_density(Dataset(d, y, z), fixtures.standard_iv().exclusion_map)
    with warnings.catch_warnings(record=True):
        warnings.simplefilter("always")
        b = support_bounds(dens)
    assert any("exclusion violation" in w for w in b.warnings)


def test_bandwidth_policy():
    assert BandwidthPolicy.parse("silverman").kind == "silverman"
    fixed = BandwidthPolicy.parse("fixed:0.05")
    assert fixed.kind == "fixed" and fixed.value == 0.05
    for bad in ("gaussian", "fixed:-1", "fixed:abc"):
        with pytest.raises(SpecificationError):
            BandwidthPolicy.parse(bad)


def test_fixed_bandwidth_used(regular_sample):
    dens = empirical_density(regular_sample, fixtures.binary_regular().exclusion_map, bandwidth="fixed:0.03")
    assert np.all(dens.bandwidths == 0.03)


def test_floor_inside_support_only(regular_sample):
    dens = empirical_density(regular_sample, fixtures.binary_regular().exclusion_map, bandwidth="fixed:0.001")
    lo, hi = dens.cell_support(1, 1)
    y = np.array([lo - 1.0, 0.5 * (lo + hi), hi + 1.0])
    f = dens.joint_density(1, y, 1)
    assert f[0] == 0.0 and f[2] == 0.0 and f[1] >= DENSITY_FLOOR


def test_density_lattice_export(tmp_path):
    dens = analytic_density(fixtures.standard_iv())
    export_density_lattice(dens, tmp_path / "lat.csv", n_points=11)
    lines = (tmp_path / "lat.csv").read_text().splitlines()
    assert lines[0] == "#schema=semiiv.density/1"
    assert lines[1] == "d,z,y,density"
    assert len(lines) == 2 + 2 * 2 * 11
