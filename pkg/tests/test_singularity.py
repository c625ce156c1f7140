import numpy as np
import pytest

from semiiv import RankDeficiencyError, analytic_density, cross_singularity, fixtures
from semiiv.singularity import locate_equilibrium
from semiiv.solver import build_system


def _system(dgp):
    dens = analytic_density(dgp)
    return build_system(dgp.exclusion_map, dens)[0]


@pytest.mark.parametrize("family", ["affine", "quadratic"])
def test_certificate_properties(family):
    dgp = fixtures.binary_singular(family)
    sys = _system(dgp)
    guess = dgp.qtilde(0.5) + 1e-4 * np.array([1.0, -0.5, 0.3, 0.2])
    cert = cross_singularity(sys, guess, 0.5)
    assert cert.g_norm <= 1e-6
    assert abs(cert.trace) <= 1e-6
    assert cert.third_singular_ratio <= 1e-6
    assert cert.opposite_signs
    assert not cert.kernel_one_signed
    assert cert.deficiency == 1
    assert np.all(cert.direction > 0)
    # equilibria form a manifold: the nearest one to the start is returned
    assert np.max(np.abs(cert.q_star - guess)) <= 1e-4


def test_branch_matches_true_tangent():
    dgp = fixtures.binary_singular()
    cert = cross_singularity(_system(dgp), dgp.qtilde(0.5), 0.5)
    slopes = np.array([q.derivative(0.5) for q in dgp.outcomes])
    np.testing.assert_allclose(cert.direction, slopes, rtol=1e-4)


def test_equilibrium_from_perturbed_start():
    dgp = fixtures.binary_singular()
    sys = _system(dgp)
    q, _ = locate_equilibrium(sys, dgp.qtilde(0.5) + 1e-3)
    assert np.linalg.norm(sys.field(q)) < 1e-10


def test_certificate_serializes():
    dgp = fixtures.binary_singular()
    doc = cross_singularity(_system(dgp), dgp.qtilde(0.5), 0.5).to_dict()
    assert set(doc) >= {"g_norm", "trace", "eigenvalues", "branch_sign", "kernel_vector"}
    assert doc["branch_sign"] == [1, 1, 1, 1]


def test_deficiency_two_refused():
    dgp = fixtures.deficiency_two()
    with pytest.raises(RankDeficiencyError) as info:
        cross_singularity(_system(dgp), dgp.qtilde(0.5), 0.5)
    assert info.value.singular_values is not None
