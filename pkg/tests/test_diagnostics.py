import pytest
from rich.console import Console

from protoquad.evaluation.diagnostics import SUITES, DiagnosticSuite, available_checks


def test_suites_cover_checks():
    assert available_checks() == SUITES["core"] + SUITES["appendix"]


def test_appendix_checks_pass():
    suite = DiagnosticSuite(seed=0, instances=3)
    results = suite.run("appendix")

    assert results["passed"]
    assert list(results["checks"]) == SUITES["appendix"]


def test_single_check_matches_suite_run():
    """A check draws from its own stream, so running it alone gives the same value."""
    suite = DiagnosticSuite(seed=1, instances=2)
    alone = suite.run_check("submodularity-ratio")
    within = suite.run("appendix")["checks"]["submodularity-ratio"]

    assert alone["value"] == within["value"]
    assert alone["margin"] == within["margin"]


def test_block_inverse_check():
    result = DiagnosticSuite().run_check("block-inverse")

    assert result["passed"]
    assert result["value"] <= result["threshold"]


def test_unknown_names():
    suite = DiagnosticSuite()

    with pytest.raises(ValueError):
        suite.run("everything")
    with pytest.raises(ValueError):
        suite.run_check("nope")


def test_report_table_and_view():
    suite = DiagnosticSuite(instances=1)
    console = Console(record=True, width=120)
    suite.print_report(console)
    assert "No diagnostic results" in console.export_text()

    results = suite.run("appendix")
    suite.print_report(console)
    assert "orthoproj" in console.export_text()
    view = DiagnosticSuite.deterministic_view(results)
    assert all("seconds" not in c for c in view["checks"].values())
    assert all("seconds" in c for c in results["checks"].values())
