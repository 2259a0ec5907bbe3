"""Extracted study data: types, JSON ingestion, validation and availability profiles.

A study contributes two arms (``treatment`` is j=1, ``control`` is j=0).  Each arm
carries whatever was extractable from the publication: baseline size, possibly
observed deaths, number at risk at the horizon, a rounded KM survival reading,
ruler measurements off the KM plot, a KM confidence interval and a follow-up
time summary.  Fields that were not extracted are ``None`` (and are omitted in
JSON, never null-sentineled).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any, Iterable

from .errors import DatasetFormatError, NoUsableData

ARMS = ("treatment", "control")


class TimeUnit(str, Enum):
    DAYS = "Days"
    MONTHS = "Months"
    YEARS = "Years"

    @property
    def days(self) -> float:
        return {"Days": 1.0, "Months": 365.25 / 12.0, "Years": 365.25}[self.value]


class FollowUpKind(str, Enum):
    MEAN_VAR = "MeanVar"
    QUARTILES = "Quartiles"
    MEAN_ONLY = "MeanOnly"
    NONE = "None"


_KIND_FIELDS = {
    FollowUpKind.MEAN_VAR: {"mean", "variance"},
    FollowUpKind.QUARTILES: {"q1", "q2", "q3"},
    FollowUpKind.MEAN_ONLY: {"mean"},
    FollowUpKind.NONE: set(),
}


@dataclass(frozen=True)
class FollowUpSummary:
    kind: FollowUpKind = FollowUpKind.NONE
    mean: float | None = None
    variance: float | None = None
    q1: float | None = None
    q2: float | None = None
    q3: float | None = None
    pooled: bool = False

    @property
    def present_fields(self) -> set[str]:
        names = ("mean", "variance", "q1", "q2", "q3")
        return {n for n in names if getattr(self, n) is not None}


NO_FOLLOWUP = FollowUpSummary()


@dataclass(frozen=True)
class ArmExtract:
    n: int
    e: int | None = None
    r: int | None = None
    kappa_star: float | None = None
    round_digits: int | None = None
    x_star: float | None = None
    y_star: float | None = None
    tick_width: float | None = None
    ci_lo: float | None = None
    ci_hi: float | None = None
    followup: FollowUpSummary = NO_FOLLOWUP

    @property
    def has_measurement(self) -> bool:
        return self.x_star is not None and self.y_star is not None

    @property
    def has_ci(self) -> bool:
        return self.ci_lo is not None and self.ci_hi is not None

    def extracted_deaths(self) -> float:
        """Best-guess death count ``s*`` used by the naive approach.

        A rounded reading wins over plot measurements, which win over observed
        deaths.
        """
        if self.kappa_star is not None:
            return self.n * (1.0 - self.kappa_star)
        if self.has_measurement:
            return self.n * (1.0 - self.x_star / self.y_star)
        if self.e is not None:
            return float(self.e)
        raise NoUsableData("arm has no survival reading, measurements or observed deaths")


@dataclass(frozen=True)
class StudyExtract:
    id: str
    treatment: ArmExtract
    control: ArmExtract
    time_unit: TimeUnit = TimeUnit.YEARS
    horizon: float = 1.0

    def arm(self, name: str) -> ArmExtract:
        if name not in ARMS:
            raise KeyError(name)
        return getattr(self, name)

    def resolved_arm(self, name: str) -> ArmExtract:
        """Arm with a pooled follow-up summary of the other arm copied in."""
        arm = self.arm(name)
        if arm.followup.kind is not FollowUpKind.NONE:
            return arm
        other = self.arm("control" if name == "treatment" else "treatment")
        if other.followup.pooled:
            return replace(arm, followup=other.followup)
        return arm


@dataclass(frozen=True)
class MetaDataset:
    studies: tuple[StudyExtract, ...]
    description: str = ""
    notes: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self):
        object.__setattr__(self, "studies", tuple(self.studies))

    @property
    def k(self) -> int:
        return len(self.studies)

    @property
    def ids(self) -> list[str]:
        return [s.id for s in self.studies]

    def study(self, study_id: str) -> StudyExtract:
        for s in self.studies:
            if s.id == study_id:
                return s
        raise KeyError(study_id)

    def total_n(self) -> int:
        return sum(s.treatment.n + s.control.n for s in self.studies)

    def without(self, *fields: str) -> "MetaDataset":
        """Copy with the named arm fields removed from every arm."""
        blank = {f: None for f in fields if f != "followup"}
        if "followup" in fields:
            blank["followup"] = NO_FOLLOWUP
        studies = [
            replace(s, treatment=replace(s.treatment, **blank), control=replace(s.control, **blank))
            for s in self.studies
        ]
        return replace(self, studies=tuple(studies))


# --------------------------------------------------------------------------- #
# JSON
# --------------------------------------------------------------------------- #

_ARM_FIELDS = {
    "n": int, "e": int, "r": int, "kappa_star": float, "round_digits": int,
    "x_star": float, "y_star": float, "tick_width": float,
    "ci_lo": float, "ci_hi": float,
}
_FOLLOWUP_FIELDS = {"mean", "variance", "q1", "q2", "q3"}


def _followup_from_dict(d: dict[str, Any], where: str) -> FollowUpSummary:
    unknown = set(d) - _FOLLOWUP_FIELDS - {"kind", "pooled"}
    if unknown:
        raise DatasetFormatError(f"{where}: unknown follow-up fields {sorted(unknown)}")
    try:
        kind = FollowUpKind(d.get("kind", "None"))
    except ValueError as exc:
        raise DatasetFormatError(f"{where}: bad follow-up kind {d.get('kind')!r}") from exc
    vals = {k: float(d[k]) for k in _FOLLOWUP_FIELDS if k in d}
    return FollowUpSummary(kind=kind, pooled=bool(d.get("pooled", False)), **vals)


def _arm_from_dict(d: dict[str, Any], where: str) -> ArmExtract:
    if not isinstance(d, dict):
        raise DatasetFormatError(f"{where}: arm must be an object")
    unknown = set(d) - set(_ARM_FIELDS) - {"followup"}
    if unknown:
        raise DatasetFormatError(f"{where}: unknown arm fields {sorted(unknown)}")
    if "n" not in d:
        raise DatasetFormatError(f"{where}: missing n")
    kwargs: dict[str, Any] = {}
    for name, typ in _ARM_FIELDS.items():
        if name in d:
            value = d[name]
            if value is None:
                raise DatasetFormatError(f"{where}.{name}: absent fields must be omitted, not null")
            if typ is int and (isinstance(value, float) and not value.is_integer()):
                raise DatasetFormatError(f"{where}.{name}: expected an integer count")
            kwargs[name] = typ(value)
    if "followup" in d:
        kwargs["followup"] = _followup_from_dict(d["followup"], f"{where}.followup")
    return ArmExtract(**kwargs)


def study_from_dict(d: dict[str, Any]) -> StudyExtract:
    sid = d.get("id")
    if sid is None:
        raise DatasetFormatError("study without id")
    unknown = set(d) - {"id", "treatment", "control", "time_unit", "horizon", "note"}
    if unknown:
        raise DatasetFormatError(f"{sid}: unknown study fields {sorted(unknown)}")
    try:
        unit = TimeUnit(d.get("time_unit", "Years"))
    except ValueError as exc:
        raise DatasetFormatError(f"{sid}: bad time_unit {d.get('time_unit')!r}") from exc
    return StudyExtract(
        id=str(sid),
        treatment=_arm_from_dict(d.get("treatment"), f"{sid}.treatment"),
        control=_arm_from_dict(d.get("control"), f"{sid}.control"),
        time_unit=unit,
        horizon=float(d.get("horizon", 1.0)),
    )


def dataset_from_json(obj: Any) -> MetaDataset:
    """Build a dataset from a parsed document (a list of studies or ``{"studies": [...]}``)."""
    if isinstance(obj, dict):
        studies = obj.get("studies")
        description = str(obj.get("description", ""))
        notes = obj.get("notes", ())
        if isinstance(notes, str):
            notes = (notes,)
    else:
        studies, description, notes = obj, "", ()
    if not isinstance(studies, list):
        raise DatasetFormatError("expected a list of study objects")
    return MetaDataset(tuple(study_from_dict(s) for s in studies), description, tuple(notes))


def _followup_to_dict(f: FollowUpSummary) -> dict[str, Any]:
    out: dict[str, Any] = {"kind": f.kind.value}
    for name in ("mean", "variance", "q1", "q2", "q3"):
        value = getattr(f, name)
        if value is not None:
            out[name] = value
    if f.pooled:
        out["pooled"] = True
    return out


def arm_to_dict(arm: ArmExtract) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for name in _ARM_FIELDS:
        value = getattr(arm, name)
        if value is not None:
            out[name] = value
    if arm.followup.kind is not FollowUpKind.NONE:
        out["followup"] = _followup_to_dict(arm.followup)
    return out


def dataset_to_json(ds: MetaDataset) -> dict[str, Any]:
    out: dict[str, Any] = {}
    if ds.description:
        out["description"] = ds.description
    if ds.notes:
        out["notes"] = list(ds.notes)
    out["studies"] = [
        {
            "id": s.id,
            "time_unit": s.time_unit.value,
            "horizon": s.horizon,
            "treatment": arm_to_dict(s.treatment),
            "control": arm_to_dict(s.control),
        }
        for s in ds.studies
    ]
    return out


def load_dataset(path: str | Path) -> MetaDataset:
    with open(path, encoding="utf-8") as fh:
        return dataset_from_json(json.load(fh))


def save_dataset(ds: MetaDataset, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(dataset_to_json(ds), fh, indent=2)
        fh.write("\n")


def bundled_path(name: str) -> Path:
    return Path(__file__).parent / "data" / name


def load_ulmca() -> MetaDataset:
    """The ten-study left-main stenosis dataset (PCI vs CABG, mortality at one year)."""
    return load_dataset(bundled_path("ulmca.json"))


# --------------------------------------------------------------------------- #
# Validation
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class Violation:
    study_id: str
    field: str
    message: str

    def __str__(self) -> str:
        return f"{self.study_id}.{self.field}: {self.message}"


def _check_followup(f: FollowUpSummary, where: str, sid: str) -> list[Violation]:
    out = []
    expected = _KIND_FIELDS[f.kind]
    if f.present_fields != expected:
        out.append(Violation(sid, where, f"kind {f.kind.value} requires exactly {sorted(expected)}"))
    if f.kind in (FollowUpKind.MEAN_VAR, FollowUpKind.MEAN_ONLY) and f.mean is not None and not f.mean > 0:
        out.append(Violation(sid, f"{where}.mean", "mean > 0"))
    if f.kind is FollowUpKind.MEAN_VAR and f.variance is not None and not f.variance >= 0:
        out.append(Violation(sid, f"{where}.variance", "variance >= 0"))
    if f.kind is FollowUpKind.QUARTILES and None not in (f.q1, f.q2, f.q3):
        if not (0 < f.q1 <= f.q2 <= f.q3):
            out.append(Violation(sid, where, "0 < q1 <= q2 <= q3"))
    return out


def _check_arm(arm: ArmExtract, where: str, sid: str) -> list[Violation]:
    out = []

    def bad(name: str, msg: str) -> None:
        out.append(Violation(sid, f"{where}.{name}", msg))

    if arm.n < 1:
        bad("n", "n >= 1")
    if arm.e is not None and not 0 <= arm.e <= arm.n:
        bad("e", "0 <= e <= n")
    if arm.r is not None and not 0 <= arm.r <= arm.n:
        bad("r", "0 <= r <= n")
    if arm.kappa_star is not None and not 0 < arm.kappa_star < 1:
        bad("kappa_star", "kappa_star in (0, 1)")
    if arm.round_digits is not None and arm.round_digits < 1:
        bad("round_digits", "round_digits >= 1")
    if (arm.x_star is None) != (arm.y_star is None):
        bad("x_star", "x_star and y_star are extracted together")
    if arm.has_measurement and not 0 < arm.x_star <= arm.y_star:
        bad("x_star", "x_star <= y_star (0 < x_star)")
    if arm.tick_width is not None:
        if not arm.tick_width > 0:
            bad("tick_width", "tick_width > 0")
        elif arm.x_star is not None and not arm.tick_width < 2 * arm.x_star:
            bad("tick_width", "tick_width < 2 x_star")
    if arm.has_measurement and arm.tick_width is None:
        bad("tick_width", "plot measurements need the ruler tick width")
    for name in ("ci_lo", "ci_hi"):
        value = getattr(arm, name)
        if value is not None and not 0 <= value <= 1:
            bad(name, f"{name} in [0, 1]")
    if arm.has_ci and arm.kappa_star is not None and not arm.ci_lo <= arm.kappa_star <= arm.ci_hi:
        bad("ci_lo", "ci_lo <= kappa_star <= ci_hi")
    if arm.has_ci and arm.ci_lo > arm.ci_hi:
        bad("ci_lo", "ci_lo <= ci_hi")
    out.extend(_check_followup(arm.followup, f"{where}.followup", sid))
    return out


def validate(dataset: MetaDataset) -> list[Violation]:
    """Every invariant violation in ``dataset``; an empty list means admissible."""
    out: list[Violation] = []
    if dataset.k < 1:
        out.append(Violation("<dataset>", "studies", "k >= 1"))
    seen: set[str] = set()
    for s in dataset.studies:
        if s.id in seen:
            out.append(Violation(s.id, "id", "study ids must be unique"))
        seen.add(s.id)
        if not (s.horizon > 0 and math.isfinite(s.horizon)):
            out.append(Violation(s.id, "horizon", "horizon > 0"))
        for name in ARMS:
            out.extend(_check_arm(s.arm(name), name, s.id))
        t, c = s.treatment.followup, s.control.followup
        if t.pooled and c.pooled and t != c:
            out.append(Violation(s.id, "control.followup", "pooled summaries must agree across arms"))
    return out


# --------------------------------------------------------------------------- #
# Availability profile
# --------------------------------------------------------------------------- #

class URCase(str, Enum):
    ROUNDED = "rounded"
    MEASURED = "measured"
    NO_KM = "no-KM"


@dataclass(frozen=True)
class AvailabilityProfile:
    ur_case: URCase
    followup_case: int | None
    bound_case: int
    has_ci: bool

    @property
    def uses_observed_deaths(self) -> bool:
        return self.ur_case is URCase.NO_KM


def followup_case(f: FollowUpSummary) -> int | None:
    """Follow-up case 1-4 (mean/var, quartiles, pooled, mean only); None if absent."""
    if f.kind is FollowUpKind.NONE:
        return None
    if f.pooled:
        return 3
    return {FollowUpKind.MEAN_VAR: 1, FollowUpKind.QUARTILES: 2, FollowUpKind.MEAN_ONLY: 4}[f.kind]


def bound_case(arm: ArmExtract) -> int:
    has_e, has_r = arm.e is not None, arm.r is not None
    if has_e and has_r:
        return 1
    if has_e:
        return 2
    if has_r:
        return 3
    return 4


def availability_profile(arm: ArmExtract) -> AvailabilityProfile:
    """Which reading, follow-up and bound cases apply to ``arm``.

    Pass the arm from :meth:`StudyExtract.resolved_arm` so that pooled
    follow-up summaries are visible.
    """
    if arm.kappa_star is not None:
        ur = URCase.ROUNDED
    elif arm.has_measurement:
        ur = URCase.MEASURED
    elif arm.e is not None:
        ur = URCase.NO_KM
    else:
        raise NoUsableData("arm has no survival reading, measurements or observed deaths")
    return AvailabilityProfile(ur, followup_case(arm.followup), bound_case(arm), arm.has_ci)


CHECKLIST_COLUMNS = ("n", "e", "r", "x", "y", "kappa", "a-", "a+", "m", "v", "Q1", "Q2", "Q3")


def checklist(arm: ArmExtract) -> set[str]:
    """Extractable components of an arm, labelled like the usual checklist table."""
    have = {"n"}
    pairs = [("e", arm.e), ("r", arm.r), ("x", arm.x_star), ("y", arm.y_star),
             ("kappa", arm.kappa_star), ("a-", arm.ci_lo), ("a+", arm.ci_hi),
             ("m", arm.followup.mean), ("v", arm.followup.variance),
             ("Q1", arm.followup.q1), ("Q2", arm.followup.q2), ("Q3", arm.followup.q3)]
    have.update(name for name, value in pairs if value is not None)
    return have


def iter_arms(dataset: MetaDataset) -> Iterable[tuple[StudyExtract, str, ArmExtract]]:
    for s in dataset.studies:
        for name in ARMS:
            yield s, name, s.resolved_arm(name)
