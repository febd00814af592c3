"""Tests for the seeded invariant battery."""

import math

import pytest

from fixedrank.verify import (
    DEFAULT_INSTANCES,
    PROPERTIES,
    PropertyCheck,
    format_report,
    run_verification,
)


def test_property_names_unique_and_grouped():
    names = [name for name, _, _ in PROPERTIES]
    assert len(names) == len(set(names))
    prefixes = {name.split("/")[0] for name in names}
    assert prefixes == {"balanced", "stiefel", "counterexample"}


def test_default_instances_cover_boundary_and_rank_one():
    assert any(p == 1 for _, _, p in DEFAULT_INSTANCES)
    assert any(p == min(m, n) for m, n, p in DEFAULT_INSTANCES)


def test_battery_passes_quickly():
    report = run_verification(trials=2, seed=0)
    assert report.passed
    assert len(report.checks) == len(PROPERTIES)
    assert report.failures == ()
    assert report.trials == 2


def test_battery_deterministic():
    first = run_verification(trials=2, seed=3)
    second = run_verification(trials=2, seed=3)
    observed = [(c.name, c.observed) for c in first.checks]
    assert observed == [(c.name, c.observed) for c in second.checks]


def test_tolerance_override_can_force_failure():
    report = run_verification(
        trials=1, seed=0,
        tolerances={"balanced/lift-roundtrip": 1e-30})
    assert not report.passed
    # only the overridden property fails
    assert [c.name for c in report.failures] == ["balanced/lift-roundtrip"]


def test_tolerance_override_unknown_name_rejected():
    with pytest.raises(ValueError, match="unknown"):
        run_verification(trials=1, tolerances={"bogus/property": 1.0})


def test_trials_must_be_positive():
    with pytest.raises(ValueError):
        run_verification(trials=0)


def test_witness_property_reports_min_over_instances():
    report = run_verification(trials=3, seed=1)
    by_name = {c.name: c for c in report.checks}
    gap = by_name["counterexample/euclidean-metric-gap"]
    assert gap.mode == "witness"
    # a genuine gap: comfortably above the threshold, not merely at it
    assert gap.observed >= 1e-1
    scaled = by_name["counterexample/scaled-metric-gap"]
    assert scaled.mode == "upper"
    assert scaled.observed <= 1e-10


def test_instance_subset_restricts_samples():
    report = run_verification(trials=1, seed=0, instances=((6, 5, 2),))
    by_name = {c.name: c for c in report.checks}
    assert by_name["balanced/lift-roundtrip"].samples == 1
    # the great-circle check applies only at p = 1, absent here
    circle = by_name["stiefel/exp-great-circle"]
    assert circle.samples == 0
    assert circle.passed
    assert math.isnan(circle.observed)


def test_format_report_lines():
    report = run_verification(trials=1, seed=0, instances=((5, 4, 2),))
    text = format_report(report)
    lines = text.splitlines()
    # one line per property plus the summary
    assert len(lines) == len(PROPERTIES) + 1
    assert all(line.startswith(("PASS", "FAIL")) for line in lines[:-1])
    assert f"{len(PROPERTIES)}/{len(PROPERTIES)} properties passed" in lines[-1]
    assert "seed=0" in lines[-1]


def test_failed_check_line_carries_location():
    check = PropertyCheck(
        name="balanced/lift-roundtrip", tolerance=1e-30, mode="upper",
        observed=3e-12, passed=False, samples=4,
        worst_case="m=7 n=5 p=2 trial=3")
    line = check.line()
    assert line.startswith("FAIL")
    assert "worst at m=7 n=5 p=2 trial=3" in line


def test_elapsed_recorded():
    report = run_verification(trials=1, seed=0, instances=((5, 4, 1),))
    assert report.elapsed > 0.0
