"""Per-arm reading and estimated-events densities for a whole dataset.

``build_plan`` walks every arm, works out which reading, follow-up and bound
cases apply, and returns the densities the UR-EE sampler augments with.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from typing import Iterable

from . import events as ev
from . import reading as rd
from .errors import ExtractionWarning
from .study import ARMS, MetaDataset, URCase, availability_profile


@dataclass(frozen=True)
class ArmPlan:
    study_id: str
    arm: str
    n: int
    s_star: float
    ur: rd.URDensity
    ee: ev.EEDensity
    ur_case: URCase
    followup_case: int | None
    bound_case: int
    followup: ev.FollowUpModel | None = None
    censoring: ev.CensoringSummary | None = None
    b: float = 0.0
    variance_source: str = ""
    notes: tuple[str, ...] = field(default=())

    @property
    def label(self) -> str:
        return f"{self.study_id}_{self.arm}"


def _arm_plan(dataset: MetaDataset, study, arm_name: str, exact_ratio: bool) -> ArmPlan:
    arm = study.resolved_arm(arm_name)
    profile = availability_profile(arm)
    notes: list[str] = []
    n = arm.n

    fm = ev.resolve_followup(dataset, study.id, arm_name)
    cens = ev.censoring_summary(fm, n, study.horizon) if fm is not None else None

    if profile.ur_case is URCase.NO_KM:
        if cens is None:
            # no KM and no follow-up information: assume nobody was censored
            notes.append("no follow-up information; zero censoring assumed (s = e)")
            s_star = float(arm.e)
            ur = rd.degenerate(s_star, n)
            ee = ev.ee_density(s_star, 0.0, n, s_star, s_star)
            return ArmPlan(study.id, arm_name, n, s_star, ur, ee, profile.ur_case, None,
                           profile.bound_case, notes=tuple(notes), variance_source="none")
        s_star, in_domain = ev.no_km_death_estimate(arm.e, n, cens.auc_fraction, strict=False)
        if not in_domain:
            notes.append("outside inflation domain; raw observed deaths used")
        ur = rd.degenerate(s_star, n)
    elif profile.ur_case is URCase.ROUNDED:
        ur = rd.ur_rounded(arm.kappa_star, arm.round_digits if arm.round_digits is not None else 3, n)
        s_star = ur.center
    else:
        make = rd.ur_measured_exact if exact_ratio else rd.ur_measured_normal
        ur = make(arm.x_star, arm.y_star, arm.tick_width, n)
        s_star = ur.center

    if cens is None:
        notes.append("no follow-up information; censoring taken as zero")
        cens_used = ev.CensoringSummary(0.0, 0.0, 0.0)
    else:
        cens_used = cens

    lb, ub = ev.event_bounds(profile.bound_case, n, arm.e, arm.r, cens_used.c)
    kappa = 1.0 - s_star / n
    if arm.has_ci:
        b = ev.ci_variance(arm.ci_lo, arm.ci_hi)
        source = "reported-ci"
    else:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            b = ev.km_variance(kappa, n, arm.e, cens_used.c, cens_used.auc_fraction, fallback_e=s_star)
        if caught:
            notes.append("Greenwood used round(s+) for missing observed deaths")
        source = ev.km_variance_regime(cens_used.c / n)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        ee = ev.ee_density(s_star, b, n, lb, ub)
    if ee.clamped:
        notes.append(f"s*={s_star:.3f} outside [{lb:.3f}, {ub:.3f}]; clamped")
    return ArmPlan(study.id, arm_name, n, s_star, ur, ee, profile.ur_case, profile.followup_case,
                   profile.bound_case, fm, cens, b, source, tuple(notes))


def build_plan(dataset: MetaDataset, exact_ratio: bool = False) -> list[ArmPlan]:
    """Arm plans in dataset order, treatment before control within each study."""
    plans = []
    for study in dataset.studies:
        for name in ARMS:
            plan = _arm_plan(dataset, study, name, exact_ratio)
            for note in plan.notes:
                warnings.warn(f"{plan.label}: {note}", ExtractionWarning, stacklevel=2)
            plans.append(plan)
    return plans


EE_TABLE_COLUMNS = ("study", "arm", "n", "ur_case", "followup_case", "bound_case", "s_star",
                    "psi", "phi_sd", "lambda", "c", "auc", "LB", "UB", "lb_sym", "ub_sym",
                    "b", "B", "variance_source")


def ee_table(plans: Iterable[ArmPlan]) -> list[dict]:
    rows = []
    for p in plans:
        fm, cs = p.followup, p.censoring
        rows.append({
            "study": p.study_id, "arm": p.arm, "n": p.n, "ur_case": p.ur_case.value,
            "followup_case": "" if p.followup_case is None else p.followup_case,
            "bound_case": p.bound_case, "s_star": p.s_star,
            "psi": "" if fm is None else fm.psi, "phi_sd": "" if fm is None else fm.phi_sd,
            "lambda": "" if cs is None else cs.lam, "c": "" if cs is None else cs.c,
            "auc": "" if cs is None else cs.auc_fraction,
            "LB": p.ee.lb_raw, "UB": p.ee.ub_raw, "lb_sym": p.ee.lb_sym, "ub_sym": p.ee.ub_sym,
            "b": p.b, "B": p.ee.B, "variance_source": p.variance_source,
        })
    return rows


def write_ee_table(plans: Iterable[ArmPlan], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=EE_TABLE_COLUMNS)
        writer.writeheader()
        for row in ee_table(plans):
            writer.writerow({k: (f"{v:.10g}" if isinstance(v, float) else v) for k, v in row.items()})


__all__ = ["ArmPlan", "build_plan", "ee_table", "write_ee_table", "EE_TABLE_COLUMNS"]
