import json

import pytest

from semiiv import SolverOptions, fixtures
from semiiv.exclusion import build_exclusion_map, check_exclusion_necessary, no_exclusion
from semiiv.pipeline import run_solve
from semiiv.report import compile_report


@pytest.fixture(scope="module")
def clean_run():
    return run_solve(fixtures.binary_regular(), options=SolverOptions(backward=True))


def test_clean_run_passes(clean_run):
    rep = clean_run.report
    assert rep.passed and rep.exit_code == 0
    names = {c["name"] for c in rep.checks}
    assert {"identity_residual", "terminal_gap_relative", "monotone", "forward_backward_gap", "probability_row_sum"} <= names
    assert rep.relevance["verdict"] == "identified"
    assert rep.certificates == []


def test_irrelevant_run_fails():
    art = run_solve(fixtures.binary_irrelevant())
    rep = art.report
    assert not rep.passed
    assert rep.exit_code == 4
    assert rep.relevance["verdict"] == "interval-degenerate"
    assert rep.error["type"] == "SetIdentificationError"
    assert "interval" in rep.error


def test_singular_run_has_one_certificate():
    rep = run_solve(fixtures.binary_singular()).report
    assert rep.passed
    assert len(rep.certificates) == 1
    assert rep.relevance["verdict"] == "isolated-singularities"
    assert any(c["name"] == "crossing_1_opposite_eigenvalues" and c["passed"] for c in rep.checks)


def test_invalid_exclusion():
    validity = check_exclusion_necessary(build_exclusion_map(no_exclusion(2, 2)))
    rep = compile_report(validity)
    assert not rep.passed
    assert rep.exit_code == 4


def test_json_is_deterministic(clean_run):
    first = clean_run.report.to_json()
    second = run_solve(fixtures.binary_regular(), options=SolverOptions(backward=True)).report.to_json()
    assert first == second
    doc = json.loads(first)
    assert doc["verdict"] == "pass"
    assert list(doc) == sorted(doc)


def test_render_text(clean_run, tmp_path):
    text = clean_run.report.render_text()
    assert text.startswith("verdict: PASS")
    assert "[pass] identity_residual" in text
    clean_run.report.write(tmp_path / "r.json")
    assert json.loads((tmp_path / "r.json").read_text())["mode"] == "analytic"
