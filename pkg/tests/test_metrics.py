from fractions import Fraction

import numpy as np
import pytest

from sanjeh.catalog import load_catalog
from sanjeh.config import parse_config
from sanjeh.errors import UndefinedMetricError
from sanjeh.genderres import Registry, resolve
from sanjeh.metrics import (
    DomainSkew,
    coverage_report,
    domain_summary,
    ds_gsi,
    female_ratio,
    group_stats,
    language_gap,
)
from sanjeh.models import Attempt, Gender, GenerationRecord, OracleVerdict, Verdict
from sanjeh.prompting import enumerate_probes, load_templates


@pytest.fixture(scope="module")
def catalog():
    return load_catalog()


@pytest.fixture(scope="module")
def plan(catalog):
    config = parse_config({
        "models": [{"model_id": "m0", "base_url": "http://stub/v1"}],
        "oracles": [{"oracle_id": "A", "adapter": "genderize", "base_url": "http://stub/g"},
                    {"oracle_id": "B", "adapter": "namsor", "base_url": "http://stub/n"}],
        "languages": ["en"],
        "trials_per_category": 4,
        "trace_path": "/tmp/trace.jsonl",
        "out_dir": "/tmp/out",
    })
    return enumerate_probes(config, catalog, load_templates())


def valid(task, name):
    return GenerationRecord(
        task=task.task_key, name=name,
        attempts=[Attempt(index=0, request_text=task.prompt.text, response_text=name,
                          latency_ms=0, verdict=Verdict.VALID_NAME)])


def failed(task):
    return GenerationRecord(
        task=task.task_key, failure="non_name",
        attempts=[Attempt(index=i, request_text=task.prompt.text, response_text="42",
                          latency_ms=0, verdict=Verdict.INVALID, reason="non_name")
                  for i in range(3)])


def label(oracle_id, gender):
    return OracleVerdict(oracle_id=oracle_id, label=gender,
                         confidence=None if gender == Gender.UNKNOWN else 0.9)


RESOLUTIONS = {
    ("Emily", "en"): resolve("Emily", label("A", Gender.FEMALE), label("B", Gender.FEMALE),
                             Registry(), "en"),
    ("James", "en"): resolve("James", label("A", Gender.MALE), label("B", Gender.MALE),
                             Registry(), "en"),
    ("Kai", "en"): resolve("Kai", label("A", Gender.MALE), label("B", Gender.FEMALE),
                           Registry(), "en"),
}


@pytest.fixture(scope="module")
def records(plan):
    """
    academic: all James; profession: all Kai (unresolved);
    color: Emily, Emily, James, failed; sport: no records.
    """
    out = {}
    for task in plan:
        if task.domain == "academic_discipline":
            out[task.key] = valid(task, "James")
        elif task.domain == "profession":
            out[task.key] = valid(task, "Kai")
        elif task.domain == "color":
            out[task.key] = (failed(task) if task.trial_index == 3
                             else valid(task, "Emily" if task.trial_index < 2 else "James"))
    return out


# ── female_ratio / ds_gsi ────────────────────────────────────────────────

def test_female_ratio():
    assert female_ratio(3, 1) == Fraction(3, 4)
    assert female_ratio(0, 0) is None
    with pytest.raises(ValueError):
        female_ratio(-1, 2)


def test_ds_gsi_extremes():
    assert ds_gsi([Fraction(0)] * 10) == 1
    assert ds_gsi([Fraction(1), Fraction(0)]) == 1
    assert ds_gsi([Fraction(1, 2)] * 10) == 0


def test_ds_gsi_exact():
    worked = [Fraction(9, 10), Fraction(1, 10), Fraction(1, 2), Fraction(1)]
    assert ds_gsi(worked) == Fraction(13, 20)
    assert ds_gsi([0.9, 0.1, 0.5, 1.0]) == pytest.approx(0.65, abs=1e-12)
    assert ds_gsi([0.25, 0.75]) == 0.5


def test_ds_gsi_matches_direct_evaluation():
    rng = np.random.default_rng(2025)
    worst = 0.0
    for _ in range(1000):
        ps = rng.random(int(rng.integers(1, 70)))
        direct = float(np.mean(np.abs(2 * ps - 1)))
        worst = max(worst, abs(ds_gsi(ps.tolist()) - direct))
    assert worst <= 1e-12


def test_ds_gsi_errors():
    with pytest.raises(UndefinedMetricError):
        ds_gsi([])
    with pytest.raises(ValueError):
        ds_gsi([Fraction(1, 2), 1.01])
    with pytest.raises(ValueError):
        ds_gsi([None])


def test_ds_gsi_properties():
    rng = np.random.default_rng(7)
    for _ in range(1000):
        n = int(rng.integers(1, 40))
        totals = rng.integers(1, 200, size=n)
        females = [int(rng.integers(0, t + 1)) for t in totals]
        ps = [Fraction(f, int(t)) for f, t in zip(females, totals)]

        value = ds_gsi(ps)
        assert 0 <= value <= 1
        assert ds_gsi([1 - p for p in ps]) == value
        assert ds_gsi(list(reversed(ps))) == value

        # pushing one ratio away from parity never lowers the index
        j = int(rng.integers(0, n))
        pushed = list(ps)
        pushed[j] = (ps[j] + 1) / 2 if ps[j] >= Fraction(1, 2) else ps[j] / 2
        assert ds_gsi(pushed) >= value
        assert ds_gsi([float(p) for p in ps]) == pytest.approx(float(value), abs=1e-12)


# ── domain summary ───────────────────────────────────────────────────────

def test_domain_summary(plan, records):
    summary = domain_summary(records, RESOLUTIONS, plan)
    assert len(summary.stats) == 96
    skews = {k.domain: k for k in summary.skews}

    assert skews["academic_discipline"].value == 1
    assert skews["academic_discipline"].n_categories == 66
    assert skews["color"].value == Fraction(1, 3)
    assert set(skews["color"].ratios) == {Fraction(2, 3)}

    assert ("m0", "en", "profession") in summary.undefined
    assert ("m0", "en", "sport") in summary.undefined
    assert len(summary.dropped) == 20

    color = [s for s in summary.stats if s.domain == "color"]
    assert all((s.n_female, s.n_male, s.n_unresolved, s.n_failed) == (2, 1, 0, 1)
               for s in color)
    assert all(s.trials == 4 for s in summary.stats)


def test_coverage(plan, records):
    summary = domain_summary(records, RESOLUTIONS, plan)
    cov = coverage_report(summary.stats, RESOLUTIONS.values())
    assert cov["totals"] == {"planned": 384, "valid": 334, "failed": 50, "unresolved": 40}
    en = cov["languages"]["en"]
    assert en["unique_names"] == 3
    assert en["disagreement_rate"] == Fraction(1, 3)
    assert cov["models"]["m0"]["en"]["valid"] == 334


def test_group_stats(plan, records, catalog):
    summary = domain_summary(records, RESOLUTIONS, plan)
    groups = group_stats(summary.stats, catalog)
    assert [g.group for g in groups] == catalog.group_ids()
    assert len(groups) == 10
    assert sum(g.n_male for g in groups) == 66 * 4
    assert all(g.n_female == 0 and g.p == 0 for g in groups)
    eng = next(g for g in groups if g.group == "engineering_technology")
    assert eng.n_male == 9 * 4


def test_language_gap():
    skews = [
        DomainSkew("color", "m0", "fa", 10, Fraction(1, 5)),
        DomainSkew("color", "m0", "en", 10, Fraction(1, 2)),
        DomainSkew("sport", "m0", "fa", 10, Fraction(3, 5)),
        DomainSkew("color", "m1", "en", 10, Fraction(1, 2)),
    ]
    [gap] = language_gap(skews, base="fa", other="en")
    assert (gap.model_id, gap.domain) == ("m0", "color")
    assert gap.delta == Fraction(3, 10)
