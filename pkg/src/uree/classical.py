"""Classical random-effects pooling of log odds ratios (DerSimonian-Laird and ML)."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DegenerateCell, ExtractionWarning, NonConvergence

Z95 = 1.959963984540054


@dataclass(frozen=True)
class StudyEffect:
    O: float
    sigma2_hat: float
    study_id: str = ""
    corrected: bool = False

    def __post_init__(self):
        if not self.sigma2_hat > 0:
            raise ValueError("sigma2_hat must be positive")


@dataclass(frozen=True)
class PooledEstimate:
    d_hat: float
    var_d: float
    tau2_hat: float
    Q: float
    method: str
    converged: bool = True
    iterations: int = 0

    @property
    def se(self) -> float:
        return math.sqrt(self.var_d)

    def interval(self, z: float = Z95) -> tuple[float, float]:
        return self.d_hat - z * self.se, self.d_hat + z * self.se


def _check_cells(s1, n1, s0, n0):
    for s, n in ((s1, n1), (s0, n0)):
        if not 0 < s < n:
            raise DegenerateCell(f"need 0 < s < n, got s={s}, n={n}")


def log_odds(s1: float, n1: float, s0: float, n0: float) -> float:
    """Log odds ratio of treatment (s1/n1) vs control (s0/n0); counts may be real."""
    _check_cells(s1, n1, s0, n0)
    return math.log(s1 / (n1 - s1)) - math.log(s0 / (n0 - s0))


def sampling_variance(s1: float, n1: float, s0: float, n0: float) -> float:
    """Woolf variance of the log odds ratio: 1/s1 + 1/(n1-s1) + 1/s0 + 1/(n0-s0)."""
    _check_cells(s1, n1, s0, n0)
    return 1.0 / s1 + 1.0 / (n1 - s1) + 1.0 / s0 + 1.0 / (n0 - s0)


def study_effect(s1, n1, s0, n0, study_id: str = "", correction: float = 0.5) -> StudyEffect:
    """Log OR and its variance, adding ``correction`` to all four cells if any is empty."""
    try:
        return StudyEffect(log_odds(s1, n1, s0, n0), sampling_variance(s1, n1, s0, n0), study_id)
    except DegenerateCell:
        warnings.warn(f"{study_id or 'study'}: zero cell, adding {correction} to all cells",
                      ExtractionWarning, stacklevel=2)
        s1c, s0c = s1 + correction, s0 + correction
        n1c, n0c = n1 + 2 * correction, n0 + 2 * correction
        return StudyEffect(log_odds(s1c, n1c, s0c, n0c), sampling_variance(s1c, n1c, s0c, n0c),
                           study_id, corrected=True)


def effects_from_events(dataset, events: np.ndarray | None = None) -> list[StudyEffect]:
    """Study effects from a dataset; ``events`` is a (k, 2) array ordered (treatment, control)."""
    out = []
    for i, s in enumerate(dataset.studies):
        if events is None:
            s1, s0 = s.resolved_arm("treatment").extracted_deaths(), s.resolved_arm("control").extracted_deaths()
        else:
            s1, s0 = float(events[i, 0]), float(events[i, 1])
        out.append(study_effect(s1, s.treatment.n, s0, s.control.n, study_id=s.id))
    return out


def _arrays(effects: Sequence[StudyEffect]):
    if len(effects) < 1:
        raise ValueError("need at least one study")
    O = np.array([e.O for e in effects], dtype=float)
    v = np.array([e.sigma2_hat for e in effects], dtype=float)
    return O, v


def _weighted_mean(O, v, tau2):
    w = 1.0 / (v + tau2)
    return float(np.sum(w * O) / np.sum(w)), float(1.0 / np.sum(w))


def dsl_fit(effects: Sequence[StudyEffect]) -> PooledEstimate:
    """DerSimonian-Laird moment estimate of tau^2 followed by inverse-variance pooling."""
    O, v = _arrays(effects)
    k = len(O)
    a = 1.0 / v
    d_fixed = np.sum(a * O) / np.sum(a)
    Q = float(np.sum(a * (O - d_fixed) ** 2))
    denom = np.sum(a) - np.sum(a ** 2) / np.sum(a)
    tau2 = max(0.0, (Q - (k - 1)) / denom) if k > 1 else 0.0
    d_hat, var_d = _weighted_mean(O, v, tau2)
    return PooledEstimate(d_hat, var_d, tau2, Q, "DSL")


def ml_tau2_update(effects: Sequence[StudyEffect], d: float, tau2: float,
                   printed_update: bool = False) -> float:
    """Right-hand side of the ML stationary equation for tau^2 (not floored).

    The stationary point of the normal log likelihood weights residuals by
    w^2 = (sigma_i^2 + tau^2)^-2.  ``printed_update=True`` uses first-power
    weights instead, which is a commonly printed simplification that does not
    maximise the likelihood.
    """
    O, v = _arrays(effects)
    w = 1.0 / (v + tau2)
    if printed_update:
        return float(np.sum(w * ((O - d) ** 2 - v)) / np.sum(w))
    return float(np.sum(w ** 2 * ((O - d) ** 2 - v)) / np.sum(w ** 2))


def ml_fit(effects: Sequence[StudyEffect], tol: float = 1e-10, max_iter: int = 10_000,
           printed_update: bool = False) -> PooledEstimate:
    """Maximum-likelihood (d, tau^2) by fixed-point iteration from tau^2 = 0."""
    O, v = _arrays(effects)
    a = 1.0 / v
    Q = float(np.sum(a * (O - np.sum(a * O) / np.sum(a)) ** 2))
    tau2 = 0.0
    d, _ = _weighted_mean(O, v, tau2)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        d_new, _ = _weighted_mean(O, v, tau2)
        tau2_new = max(0.0, ml_tau2_update(effects, d_new, tau2, printed_update))
        done = abs(tau2_new - tau2) < tol and abs(d_new - d) < tol
        d, tau2 = d_new, tau2_new
        if done:
            converged = True
            break
    if not converged:
        warnings.warn(f"ML iteration did not converge in {max_iter} steps", NonConvergence, stacklevel=2)
    d, var_d = _weighted_mean(O, v, tau2)
    return PooledEstimate(d, var_d, tau2, Q, "ML", converged=converged, iterations=it)


def ml_loglik(effects: Sequence[StudyEffect], d: float, tau2: float) -> float:
    O, v = _arrays(effects)
    t = v + tau2
    return float(-0.5 * len(O) * math.log(2 * math.pi) - 0.5 * np.sum(np.log(t))
                 - 0.5 * np.sum((O - d) ** 2 / t))
