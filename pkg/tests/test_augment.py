"""Per-arm density plans built from a dataset."""

import csv
import warnings

import pytest

from uree.augment import EE_TABLE_COLUMNS, build_plan, ee_table, write_ee_table
from uree.reading import URKind
from uree.study import URCase

from .test_study import EXTRACTED_DEATHS


@pytest.fixture(scope="module")
def plans(ulmca):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return build_plan(ulmca)


def test_one_plan_per_arm_in_order(plans, ulmca):
    assert len(plans) == 2 * len(ulmca.studies)
    assert [p.arm for p in plans[:2]] == ["treatment", "control"]
    assert [p.study_id for p in plans[::2]] == [s.id for s in ulmca.studies]


def test_centres_match_extracted_deaths(plans):
    for p in plans:
        if p.study_id in EXTRACTED_DEATHS:
            expected = EXTRACTED_DEATHS[p.study_id][0 if p.arm == "treatment" else 1]
            assert p.s_star == pytest.approx(expected, abs=0.006)


def test_ur_kind_follows_case(plans):
    kinds = {URCase.ROUNDED: URKind.ROUNDED_UNIFORM, URCase.MEASURED: URKind.NORMAL_APPROX,
             URCase.NO_KM: URKind.DEGENERATE}
    for p in plans:
        assert p.ur.kind is kinds[p.ur_case]


def test_exact_ratio_switch(ulmca):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        exact = build_plan(ulmca, exact_ratio=True)
    assert any(p.ur.kind is URKind.RATIO_OF_UNIFORMS for p in exact)


def test_truncation_inside_raw_bounds(plans):
    for p in plans:
        assert p.ee.lb_raw <= p.ee.lb_sym <= p.ee.center <= p.ee.ub_sym <= p.ee.ub_raw
        assert p.ee.center - p.ee.lb_sym == pytest.approx(p.ee.ub_sym - p.ee.center)


def test_no_followup_study_is_point_mass(plans):
    chieffo = [p for p in plans if p.study_id == "Chieffo"]
    assert all(p.ee.is_point_mass and p.ur.is_degenerate for p in chieffo)
    assert [p.s_star for p in chieffo] == [3.0, 9.0]


def test_reported_ci_overrides_regime(plans):
    assert {p.variance_source for p in plans if p.study_id == "Serryus"} == {"reported-ci"}


def test_notes_become_warnings(ulmca):
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        build_plan(ulmca)
    assert any("Chieffo" in str(w.message) for w in caught)


def test_ee_table_round_trip(plans, tmp_path):
    rows = ee_table(plans)
    assert len(rows) == len(plans) and tuple(rows[0]) == EE_TABLE_COLUMNS
    path = tmp_path / "ee.csv"
    write_ee_table(plans, path)
    with open(path, newline="") as fh:
        read = list(csv.DictReader(fh))
    assert len(read) == len(plans)
    assert float(read[0]["B"]) == pytest.approx(plans[0].ee.B, rel=1e-9)
