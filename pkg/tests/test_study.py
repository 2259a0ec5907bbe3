"""Study records, validation, JSON round trips and availability profiles."""

import json
import random
from dataclasses import replace

import pytest

from uree.errors import DatasetFormatError, NoUsableData
from uree.study import (ArmExtract, FollowUpKind, FollowUpSummary, MetaDataset, StudyExtract, TimeUnit, URCase,
                        availability_profile, checklist, dataset_from_json, dataset_to_json, iter_arms, validate)

# availability checkmarks, one set per study (both arms share the pattern)
CHECKMARKS = {
    "Brener": {"n", "r", "x", "y", "m", "v"},
    "Palmerini": {"n", "r", "x", "y", "Q1", "Q2", "Q3"},
    "Seung": {"n", "r", "kappa", "Q1", "Q2", "Q3"},
    "Wu": {"n", "r", "kappa", "m"},
    "Sanmartin": {"n", "r", "x", "y", "m", "v"},
    "Buszman": {"n", "r", "kappa", "m", "v"},
    "Makikallio": {"n", "x", "y", "m", "v"},
    "White": {"n", "x", "y", "Q1", "Q2", "Q3"},
    "Serryus": {"n", "kappa", "a-", "a+", "m", "v"},
    "Chieffo": {"n", "e"},
}

# best-guess extracted deaths (treatment, control)
EXTRACTED_DEATHS = {
    "Brener": (6.52, 11.08), "Palmerini": (16.68, 20.28), "Seung": (17.89, 20.05),
    "Wu": (21.74, 7.97), "Sanmartin": (11.04, 40.55), "Buszman": (0.99, 3.98),
    "Makikallio": (2.74, 26.23), "White": (6.83, 4.56), "Serryus": (14.99, 15.66),
    "Chieffo": (3.0, 9.0),
}


def _arm(**kw):
    base = dict(n=100, kappa_star=0.9, round_digits=3)
    base.update(kw)
    return ArmExtract(**base)


def _dataset(*arms):
    studies = [StudyExtract(f"s{i}", a, _arm()) for i, a in enumerate(arms)]
    return MetaDataset(tuple(studies))


def test_bundled_ulmca_is_valid(ulmca):
    assert validate(ulmca) == []
    assert ulmca.k == 10
    assert ulmca.total_n() == 3773


def test_bundled_simulated_is_valid(appendix_b):
    ds, _ = appendix_b
    assert validate(ds) == []
    assert ds.k == 10


def test_zero_n_gives_one_violation_naming_arm():
    v = validate(_dataset(_arm(n=0, kappa_star=None, e=0)))
    assert len(v) == 1
    assert v[0].study_id == "s0" and "treatment" in v[0].field


def test_measurement_x_above_y_flagged():
    v = validate(_dataset(_arm(kappa_star=None, round_digits=None, x_star=8.0, y_star=5.0, tick_width=0.5)))
    assert any("x_star" in x.message and "y_star" in x.message for x in v)


def test_validate_order_independent_and_idempotent(ulmca):
    studies = list(ulmca.studies)
    bad = replace(studies[0], treatment=replace(studies[0].treatment, e=500))
    studies[0] = bad
    v1 = validate(MetaDataset(tuple(studies)))
    random.Random(1).shuffle(studies)
    v2 = validate(MetaDataset(tuple(studies)))
    assert sorted(map(repr, v1)) == sorted(map(repr, v2))
    assert validate(MetaDataset(tuple(studies))) == v2


def test_duplicate_ids_flagged():
    a = StudyExtract("x", _arm(), _arm())
    assert validate(MetaDataset((a, a)))


def test_extracted_deaths_match_table2(ulmca):
    for sid, (t, c) in EXTRACTED_DEATHS.items():
        st = ulmca.study(sid)
        assert st.resolved_arm("treatment").extracted_deaths() == pytest.approx(t, abs=0.011)
        assert st.resolved_arm("control").extracted_deaths() == pytest.approx(c, abs=0.011)


def test_checklist_reproduces_table1(ulmca):
    for sid, expected in CHECKMARKS.items():
        st = ulmca.study(sid)
        for arm in ("treatment", "control"):
            got = checklist(st.arm(arm))
            if st.arm(arm).followup.kind is FollowUpKind.NONE:
                got |= checklist(st.resolved_arm(arm)) & {"m", "v", "Q1", "Q2", "Q3"}
            assert got == expected, (sid, arm)


def test_profile_rounded_meanvar_no_e_r():
    arm = _arm(followup=FollowUpSummary(FollowUpKind.MEAN_VAR, mean=2.0, variance=1.0))
    p = availability_profile(arm)
    assert (p.ur_case, p.followup_case, p.bound_case) == (URCase.ROUNDED, 1, 4)


def test_profile_chieffo_pattern():
    p = availability_profile(ArmExtract(n=107, e=3))
    assert p.ur_case is URCase.NO_KM and p.followup_case is None and p.bound_case == 2


def test_profile_measured_quartiles_r():
    arm = ArmExtract(n=100, r=80, x_star=8.0, y_star=10.0, tick_width=0.2,
                     followup=FollowUpSummary(FollowUpKind.QUARTILES, q1=1.0, q2=2.0, q3=3.0))
    p = availability_profile(arm)
    assert (p.ur_case, p.followup_case, p.bound_case) == (URCase.MEASURED, 2, 3)


def test_profile_no_usable_data():
    with pytest.raises(NoUsableData):
        availability_profile(ArmExtract(n=10))


def test_pooled_followup_copied_to_both_arms(ulmca):
    st = ulmca.study("Seung")
    t, c = st.resolved_arm("treatment").followup, st.resolved_arm("control").followup
    assert t == c and t.pooled
    assert availability_profile(st.resolved_arm("control")).followup_case == 3


def test_ulmca_profiles(ulmca):
    cases = {sid: availability_profile(ulmca.study(sid).resolved_arm("treatment")) for sid in CHECKMARKS}
    assert {s for s, p in cases.items() if p.ur_case is URCase.MEASURED} == \
        {"Brener", "Palmerini", "Sanmartin", "Makikallio", "White"}
    assert {s for s, p in cases.items() if p.ur_case is URCase.ROUNDED} == {"Seung", "Wu", "Buszman", "Serryus"}
    assert cases["Chieffo"].ur_case is URCase.NO_KM
    assert cases["Wu"].followup_case == 4
    assert cases["Serryus"].has_ci


def test_json_round_trip(ulmca):
    doc = dataset_to_json(ulmca)
    again = dataset_from_json(json.loads(json.dumps(doc)))
    assert again == ulmca


def test_json_rejects_nulls_and_unknown_fields():
    good = {"id": "a", "treatment": {"n": 10, "e": 2}, "control": {"n": 10, "e": 3}}
    dataset_from_json([good])
    with pytest.raises(DatasetFormatError):
        dataset_from_json([{**good, "treatment": {"n": 10, "e": None}}])
    with pytest.raises(DatasetFormatError):
        dataset_from_json([{**good, "treatment": {"n": 10, "deaths": 2}}])


def test_without_strips_fields(appendix_b):
    ds, _ = appendix_b
    obs = ds.without("kappa_star", "round_digits")
    assert all(a.kappa_star is None for _, _, a in iter_arms(obs))
    assert validate(obs) == []


def test_time_unit_days():
    assert TimeUnit.YEARS.days == pytest.approx(365.25)
    assert TimeUnit.DAYS.days == 1
