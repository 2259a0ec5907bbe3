"""Estimated-events densities for the true death count ``s`` given ``s+``.

Censoring before the horizon is modelled through a lognormal follow-up time
distribution fitted to whatever summary the study reported.  The censoring
probability, expected censored count and the person-time lost feed the event
bounds and the variance of the KM survival estimate; together they define a
symmetric truncated normal for ``s`` around ``s+``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import integrate, stats

from .errors import (
    DomainViolation,
    ExtractionWarning,
    InconsistentBounds,
    InvalidSummary,
    MissingObservedDeaths,
    NoDonorStudies,
)
from .study import FollowUpKind, FollowUpSummary, MetaDataset, TimeUnit

IQR_Z = stats.norm.ppf(0.75) - stats.norm.ppf(0.25)


class FollowUpSource(str, Enum):
    MEAN_VAR = "MeanVar"
    QUARTILES = "Quartiles"
    POOLED = "Pooled"
    MEAN_ONLY = "MeanOnly"


@dataclass(frozen=True)
class FollowUpModel:
    """Log follow-up time ~ N(psi, phi_sd^2), in the study's time unit."""

    psi: float
    phi_sd: float
    source_case: FollowUpSource = FollowUpSource.MEAN_VAR

    def __post_init__(self):
        if not self.phi_sd >= 0:
            raise InvalidSummary("phi_sd must be non-negative")

    def cdf(self, t):
        t = np.asarray(t, dtype=float)
        with np.errstate(divide="ignore", over="ignore"):
            logt = np.log(t)
            if self.phi_sd == 0:
                return (logt >= self.psi).astype(float)
            return stats.norm.cdf((logt - self.psi) / self.phi_sd)

    def mean(self) -> float:
        return math.exp(self.psi + 0.5 * self.phi_sd ** 2)

    def variance(self) -> float:
        s2 = self.phi_sd ** 2
        return math.expm1(s2) * math.exp(2 * self.psi + s2)


@dataclass(frozen=True)
class CensoringSummary:
    lam: float
    c: float
    auc_fraction: float


def followup_from_mean_var(m: float, v: float) -> FollowUpModel:
    """Lognormal matching mean ``m`` and variance ``v`` of the follow-up times."""
    if not (m > 0 and v >= 0):
        raise InvalidSummary(f"need m > 0 and v >= 0, got m={m}, v={v}")
    psi = math.log(m * m / math.sqrt(v + m * m))
    return FollowUpModel(psi, math.sqrt(math.log1p(v / (m * m))), FollowUpSource.MEAN_VAR)


def followup_from_quartiles(q1: float, q2: float, q3: float) -> FollowUpModel:
    """Lognormal with median ``q2`` and IQR matched on the log scale."""
    if not 0 < q1 <= q2 <= q3:
        raise InvalidSummary(f"need 0 < q1 <= q2 <= q3, got {q1}, {q2}, {q3}")
    return FollowUpModel(math.log(q2), (math.log(q3) - math.log(q1)) / IQR_Z, FollowUpSource.QUARTILES)


def _from_summary(f: FollowUpSummary) -> FollowUpModel:
    if f.kind is FollowUpKind.MEAN_VAR:
        return followup_from_mean_var(f.mean, f.variance)
    if f.kind is FollowUpKind.QUARTILES:
        return followup_from_quartiles(f.q1, f.q2, f.q3)
    raise InvalidSummary(f"cannot fit a lognormal to a {f.kind.value} summary directly")


def followup_pooled(f: FollowUpSummary) -> FollowUpModel:
    """Model for a summary covering both arms; the caller gives it to both arms."""
    model = _from_summary(f)
    return FollowUpModel(model.psi, model.phi_sd, FollowUpSource.POOLED)


def donor_sds(dataset: MetaDataset, exclude_study: str, unit: TimeUnit) -> list[float]:
    """Follow-up SDs (in ``unit``) from arms of other studies that report a variance."""
    sds = []
    for s in dataset.studies:
        if s.id == exclude_study:
            continue
        scale = s.time_unit.days / unit.days
        seen_pooled = False
        for name in ("treatment", "control"):
            f = s.resolved_arm(name).followup
            if f.kind is FollowUpKind.MEAN_VAR:
                if f.pooled:
                    if seen_pooled:
                        continue
                    seen_pooled = True
                sds.append(math.sqrt(f.variance) * scale)
    return sds


def followup_mean_only(m: float, donors: list[float]) -> FollowUpModel:
    """Mean-only summary: borrow the average SD of other studies as the variance."""
    if not donors:
        raise NoDonorStudies("no other study reports a follow-up variance")
    sd = float(np.mean(donors))
    model = followup_from_mean_var(m, sd * sd)
    return FollowUpModel(model.psi, model.phi_sd, FollowUpSource.MEAN_ONLY)


def resolve_followup(dataset: MetaDataset, study_id: str, arm: str) -> FollowUpModel | None:
    """Follow-up model for one arm using the case that matches its summary; None when absent."""
    study = dataset.study(study_id)
    f = study.resolved_arm(arm).followup
    if f.kind is FollowUpKind.NONE:
        return None
    if f.kind is FollowUpKind.MEAN_ONLY:
        return followup_mean_only(f.mean, donor_sds(dataset, study_id, study.time_unit))
    if f.pooled:
        return followup_pooled(f)
    return _from_summary(f)


def censoring_summary(fm: FollowUpModel, n: float, horizon: float) -> CensoringSummary:
    """Censoring probability before ``horizon``, expected censored count and lost person-time fraction.

    The lost fraction is the integral of the follow-up CDF over ``[0, horizon]``
    divided by ``horizon``: the expected share of the interval a subject is not
    under observation.
    """
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    lam = float(fm.cdf(horizon))
    if fm.phi_sd == 0:
        auc = max(0.0, horizon - math.exp(fm.psi)) / horizon
    else:
        # integrate in log time for accuracy when the CDF has a long flat start
        def integrand(logt):
            return stats.norm.cdf((logt - fm.psi) / fm.phi_sd) * math.exp(logt)
        lo = min(fm.psi - 12 * fm.phi_sd, math.log(horizon) - 1.0)
        val, _ = integrate.quad(integrand, lo, math.log(horizon), epsabs=1e-12 * horizon, epsrel=1e-10, limit=200)
        auc = min(max(val / horizon, 0.0), lam)
    return CensoringSummary(lam, n * lam, auc)


def event_bounds(case: int, n: float, e: float | None = None, r: float | None = None,
                 c: float = 0.0) -> tuple[float, float]:
    """Raw (LB, UB) for the true death count under bound cases 1-4."""
    if case == 1:
        lb, ub = e, n - r
    elif case == 2:
        lb, ub = e, min(float(n), e + c)
    elif case == 3:
        lb, ub = max(0.0, n - r - c), n - r
    elif case == 4:
        lb, ub = 0.0, n
    else:
        raise ValueError(f"unknown bound case {case}")
    if lb > ub:
        raise InconsistentBounds(f"LB={lb} > UB={ub}")
    return float(lb), float(ub)


def km_variance_regime(f: float) -> str:
    if f < 0.25:
        return "greenwood"
    if f < 0.35:
        return "greenwood+censoring"
    if f < 0.50:
        return "censoring"
    if f < 0.70:
        return "censoring+auc"
    return "auc"


def km_variance(kappa: float, n: float, e: float | None, c: float, auc_fraction: float,
                fallback_e: float | None = None) -> float:
    """Approximate variance of the KM survival estimate, chosen by censored fraction ``c/n``.

    Greenwood (simplified) below 25% censoring, censoring-proportional between
    35% and 50%, AUC-proportional from 70%; averages of neighbours in the
    25-35% and 50-70% bands.  Bands are left-closed.
    """
    f = c / n
    if not 0 <= f < 1:
        raise ValueError(f"censored fraction must be in [0, 1), got {f}")
    regime = km_variance_regime(f)
    binom = kappa * (1.0 - kappa)

    def greenwood() -> float:
        events = e
        if events is None:
            if fallback_e is None:
                raise MissingObservedDeaths("Greenwood estimate needs observed deaths")
            events = float(round(fallback_e))
            warnings.warn(f"observed deaths missing; using round(s+) = {events:g} in Greenwood",
                          MissingObservedDeaths, stacklevel=3)
        if events >= n:
            return 0.0
        return kappa ** 2 * events / (n * (n - events))

    if regime == "greenwood":
        return greenwood()
    if regime == "greenwood+censoring":
        return 0.5 * (greenwood() + f * binom)
    if regime == "censoring":
        return f * binom
    if regime == "censoring+auc":
        return 0.5 * (f * binom + auc_fraction * binom)
    return auc_fraction * binom


def ci_variance(ci_lo: float, ci_hi: float, z: float = 1.959963984540054) -> float:
    """KM variance implied by a reported symmetric 95% interval."""
    return ((ci_hi - ci_lo) / (2.0 * z)) ** 2


@dataclass(frozen=True)
class EEDensity:
    """Truncated normal for ``s`` centred at ``s+`` with symmetric truncation points."""

    center: float
    B: float
    lb_raw: float
    ub_raw: float
    lb_sym: float
    ub_sym: float
    clamped: bool = False

    @property
    def half_width(self) -> float:
        return self.ub_sym - self.center

    @property
    def is_point_mass(self) -> bool:
        return self.B <= 0 or self.half_width <= 0

    def _ab(self):
        sd = math.sqrt(self.B)
        return (self.lb_sym - self.center) / sd, (self.ub_sym - self.center) / sd, sd

    def pdf(self, s):
        if self.is_point_mass:
            raise ValueError("point mass has no density")
        a, b, sd = self._ab()
        return stats.truncnorm.pdf(s, a, b, loc=self.center, scale=sd)

    def mean(self) -> float:
        return self.center

    def variance(self) -> float:
        if self.is_point_mass:
            return 0.0
        a, b, sd = self._ab()
        return float(stats.truncnorm.var(a, b, loc=self.center, scale=sd))

    def sample(self, rng: np.random.Generator, size: int | None = None):
        if self.is_point_mass:
            return np.full(size, self.center) if size is not None else self.center
        a, b, sd = self._ab()
        return stats.truncnorm.rvs(a, b, loc=self.center, scale=sd, size=size, random_state=rng)


def symmetric_half_width(s_plus, lb: float, ub: float):
    return np.minimum(np.asarray(s_plus) - lb, ub - np.asarray(s_plus))


def ee_density(s_plus: float, b: float, n: float, lb: float, ub: float) -> EEDensity:
    """Symmetric truncated normal ``TN(s+, n^2 b)`` on ``s+ -/+ min(s+ - LB, UB - s+)``.

    A centre outside ``[LB, UB]`` is clamped to the nearest bound (point mass).
    """
    if lb > ub:
        raise InconsistentBounds(f"LB={lb} > UB={ub}")
    clamped = False
    if not lb <= s_plus <= ub:
        warnings.warn(f"s+={s_plus:.4g} outside [{lb:.4g}, {ub:.4g}]; clamping", ExtractionWarning, stacklevel=2)
        s_plus = min(max(s_plus, lb), ub)
        clamped = True
    h = float(symmetric_half_width(s_plus, lb, ub))
    return EEDensity(float(s_plus), float(n * n * b), float(lb), float(ub), s_plus - h, s_plus + h, clamped)


def inflate_observed_rate(e_over_n, auc_fraction):
    """Death-probability estimate (e/n) / (1 - auc); vectorised, no domain checks."""
    return np.asarray(e_over_n) / (1.0 - np.asarray(auc_fraction))


def no_km_death_estimate(e: float, n: float, auc_fraction: float, strict: bool = True) -> tuple[float, bool]:
    """Deaths implied by observed deaths corrected for person-time lost.

    Returns ``(s_plus, in_domain)``.  Outside 0 < e/n < 0.5, 0 <= auc < 0.5 a
    :class:`DomainViolation` is raised, or with ``strict=False`` the raw ``e``
    is returned with ``in_domain=False``.
    """
    rate = e / n
    ok = 0 < rate < 0.5 and 0 <= auc_fraction < 0.5
    if not ok:
        if strict:
            raise DomainViolation(f"e/n={rate:.3f}, auc={auc_fraction:.3f} outside (0, 0.5)")
        warnings.warn(f"e/n={rate:.3f}, auc={auc_fraction:.3f} outside the inflation domain; using e",
                      ExtractionWarning, stacklevel=2)
        return float(e), False
    return float(n * inflate_observed_rate(rate, auc_fraction)), True
