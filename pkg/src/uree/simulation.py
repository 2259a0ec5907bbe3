"""Censored-trial simulation, product-limit KM, the bundled simulated fixture and
brute-force Monte Carlo oracles.

The oracles here deliberately avoid calling the closed-form code they are used
to check.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats
from scipy.special import expit

from .study import (ARMS, ArmExtract, FollowUpKind, FollowUpSummary, MetaDataset, StudyExtract,
                    TimeUnit, bundled_path, load_dataset)

# --------------------------------------------------------------------------- #
# configuration and records
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class SimConfig:
    """Generative settings.  Follow-up times are lognormal with log-scale mean
    ``psi`` and SD ``phi_sd`` in days.

    ``literal_d`` switches the pooled log odds ratio to 1.0 instead of ``d``.
    """

    k: int = 10
    mean_arm_size: int = 100
    d: float = 0.0
    tau2: float = 0.4
    m: float = -0.8
    sigma2: float = 0.1
    treatment_followup: tuple[float, float] = (5.89, 0.83)
    control_followup: tuple[float, float] = (7.05, 0.63)
    horizon: float = 365.25
    seed: int = 7
    literal_d: bool = False
    kappa_digits: int = 2

    def __post_init__(self):
        if self.k < 1 or self.mean_arm_size < 1:
            raise ValueError("k and mean_arm_size must be >= 1")
        if self.tau2 < 0 or self.sigma2 < 0:
            raise ValueError("variances must be non-negative")
        if self.treatment_followup[1] <= 0 or self.control_followup[1] <= 0:
            raise ValueError("follow-up SDs must be positive")
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")

    @property
    def effective_d(self) -> float:
        return 1.0 if self.literal_d else self.d

    def followup(self, arm: str) -> tuple[float, float]:
        return self.treatment_followup if arm == "treatment" else self.control_followup


@dataclass(frozen=True)
class SimArm:
    n: int
    s: int
    e: int
    lost: int
    kappa: float
    greenwood_var: float = float("nan")

    def __post_init__(self):
        if not 0 <= self.e <= self.s <= self.n:
            raise ValueError(f"need 0 <= e <= s <= n, got e={self.e}, s={self.s}, n={self.n}")
        if not 0.0 <= self.kappa <= 1.0:
            raise ValueError("kappa must lie in [0, 1]")


@dataclass(frozen=True)
class SimStudy:
    id: str
    treatment: SimArm
    control: SimArm
    delta: float = float("nan")
    u: float = float("nan")

    def arm(self, name: str) -> SimArm:
        return self.treatment if name == "treatment" else self.control


# --------------------------------------------------------------------------- #
# Kaplan-Meier
# --------------------------------------------------------------------------- #

def km_estimate(event_times, censor_times, horizon: float) -> tuple[float, float]:
    """Product-limit survival at ``horizon`` and its Greenwood variance.

    One entry per subject; use ``inf`` for "no event" or "never censored".
    A death and a censoring at the same time count the death first.
    """
    t_event = np.asarray(event_times, dtype=float)
    t_cens = np.asarray(censor_times, dtype=float)
    if t_event.shape != t_cens.shape:
        raise ValueError("event_times and censor_times must have the same shape")
    if np.any(t_event <= 0) or np.any(t_cens <= 0):
        raise ValueError("times must be positive")
    time = np.minimum(t_event, t_cens)
    died = t_event <= t_cens
    death_times = np.unique(time[died & (time <= horizon)])
    kappa, gw = 1.0, 0.0
    for t in death_times:
        at_risk = np.count_nonzero(time >= t)
        deaths = np.count_nonzero((time == t) & died)
        kappa *= 1.0 - deaths / at_risk
        if at_risk > deaths:
            gw += deaths / (at_risk * (at_risk - deaths))
    return kappa, kappa * kappa * gw


# --------------------------------------------------------------------------- #
# generation
# --------------------------------------------------------------------------- #

def _arm_sizes(cfg: SimConfig, rng: np.random.Generator) -> tuple[int, int]:
    lo = max(1, int(round(0.2 * cfg.mean_arm_size)))
    hi = 2 * cfg.mean_arm_size - lo
    return int(rng.integers(lo, hi + 1)), int(rng.integers(lo, hi + 1))


def simulate_arm(n: int, pi: float, psi: float, phi_sd: float, horizon: float,
                 rng: np.random.Generator) -> SimArm:
    """One arm: deaths by ``horizon`` with probability ``pi`` at a uniform time, lognormal censoring."""
    dies = rng.random(n) < pi
    death = np.where(dies, rng.uniform(0.0, horizon, n), np.inf)
    death = np.where(death <= 0, np.finfo(float).tiny, death)
    censor = np.exp(psi + phi_sd * rng.standard_normal(n))
    s = int(dies.sum())
    e = int(np.count_nonzero(death <= censor))
    lost = int(np.count_nonzero((censor < death) & (censor < horizon)))
    kappa, gw = km_estimate(death, censor, horizon)
    return SimArm(n, s, e, lost, kappa, gw)


def generate_study(cfg: SimConfig, index: int, rng: np.random.Generator) -> SimStudy:
    delta = rng.normal(cfg.effective_d, math.sqrt(cfg.tau2))
    u = rng.normal(cfg.m, math.sqrt(cfg.sigma2))
    n_t, n_c = _arm_sizes(cfg, rng)
    arms = {}
    for name, n, sign in (("treatment", n_t, 0.5), ("control", n_c, -0.5)):
        psi, phi = cfg.followup(name)
        arms[name] = simulate_arm(n, float(expit(u + sign * delta)), psi, phi, cfg.horizon, rng)
    return SimStudy(f"S{index + 1:02d}", arms["treatment"], arms["control"], delta, u)


def lognormal_quartiles(psi: float, phi_sd: float) -> tuple[float, float, float]:
    z = stats.norm.ppf(0.75)
    return math.exp(psi - z * phi_sd), math.exp(psi), math.exp(psi + z * phi_sd)


def generate_dataset(cfg: SimConfig = SimConfig()) -> tuple[MetaDataset, list[SimStudy]]:
    """Simulated studies as extractable records (rounded KM, observed deaths,
    follow-up quartiles) plus the hidden truths."""
    streams = np.random.SeedSequence(cfg.seed).spawn(cfg.k)
    truths = [generate_study(cfg, i, np.random.default_rng(streams[i])) for i in range(cfg.k)]
    studies = []
    for t in truths:
        arms = {}
        for name in ARMS:
            a = t.arm(name)
            q1, q2, q3 = lognormal_quartiles(*cfg.followup(name))
            kappa = round(a.kappa, cfg.kappa_digits)
            usable = 0.0 < kappa < 1.0
            arms[name] = ArmExtract(
                n=a.n, e=a.e,
                kappa_star=kappa if usable else None,
                round_digits=cfg.kappa_digits if usable else None,
                followup=FollowUpSummary(FollowUpKind.QUARTILES, q1=q1, q2=q2, q3=q3),
            )
        studies.append(StudyExtract(t.id, arms["treatment"], arms["control"], TimeUnit.DAYS, cfg.horizon))
    desc = f"simulated: k={cfg.k}, d={cfg.effective_d}, tau2={cfg.tau2}, m={cfg.m}, sigma2={cfg.sigma2}, seed={cfg.seed}"
    return MetaDataset(tuple(studies), desc), truths


def truths_to_json(truths: list[SimStudy]) -> dict:
    def arm(a: SimArm) -> dict:
        out = {"n": a.n, "s": a.s, "e": a.e, "lost": a.lost, "kappa": a.kappa}
        if not math.isnan(a.greenwood_var):
            out["greenwood_var"] = a.greenwood_var
        return out

    return {"studies": [{"id": t.id, "treatment": arm(t.treatment), "control": arm(t.control)} for t in truths]}


def truths_from_json(obj: dict) -> list[SimStudy]:
    out = []
    for row in obj["studies"]:
        arms = {name: SimArm(**{k: row[name][k] for k in ("n", "s", "e", "lost", "kappa")}) for name in ARMS}
        out.append(SimStudy(row["id"], arms["treatment"], arms["control"]))
    return out


def true_deaths(truths: list[SimStudy]) -> np.ndarray:
    """(k, 2) array of true death counts ordered (treatment, control)."""
    return np.array([[t.treatment.s, t.control.s] for t in truths], dtype=float)


def load_appendix_b() -> tuple[MetaDataset, list[SimStudy]]:
    """The bundled ten-study simulated fixture and its true death counts."""
    ds = load_dataset(bundled_path("simulated.json"))
    with open(bundled_path("simulated_truth.json"), encoding="utf-8") as fh:
        truths = truths_from_json(json.load(fh))
    return ds, truths


# --------------------------------------------------------------------------- #
# Monte Carlo oracles
# --------------------------------------------------------------------------- #

def sample_ratio_of_uniforms(x: float, y: float, w: float, z: float, size: int,
                             rng: np.random.Generator) -> np.ndarray:
    """Draws of U(x-w, x+w) / U(y-z, y+z) (``w``, ``z`` half-widths)."""
    return rng.uniform(x - w, x + w, size) / rng.uniform(y - z, y + z, size)


def ks_distance(samples: np.ndarray, cdf) -> float:
    """Kolmogorov-Smirnov sup distance between the empirical CDF of ``samples`` and ``cdf``."""
    return float(stats.kstest(np.asarray(samples, dtype=float), cdf).statistic)


def sample_truncated_normal(center: float, var: float, lo: float, hi: float, size: int,
                            rng: np.random.Generator) -> np.ndarray:
    """Rejection sampler for N(center, var) restricted to [lo, hi]."""
    sd = math.sqrt(var)
    out = np.empty(0)
    while out.size < size:
        draw = rng.normal(center, sd, 2 * (size - out.size) + 16)
        out = np.concatenate([out, draw[(draw >= lo) & (draw <= hi)]])
    return out[:size]


def mc_censoring_fraction(psi: float, phi_sd: float, horizon: float, size: int,
                          rng: np.random.Generator) -> tuple[float, float]:
    """Monte Carlo (fraction censored before ``horizon``, mean of F over [0, horizon] / horizon)."""
    t = np.exp(psi + phi_sd * rng.standard_normal(size))
    lam = float(np.mean(t < horizon))
    auc = float(np.mean(np.clip(1.0 - t / horizon, 0.0, None)))  # E[(H - T)+]/H = int_0^H F / H
    return lam, auc


@dataclass(frozen=True)
class MSEPoint:
    death_prob: float
    auc: float
    mse_kstar: float
    mse_naive: float


def mse_point(p: float, auc: float, n: int, reps: int, rng: np.random.Generator,
              chunk: int = 5_000) -> MSEPoint:
    """Brute-force MSE of (e/n)/(1-auc) and e/n against the realised s/n.

    Each subject dies by the horizon with probability ``p`` at a uniform time;
    censoring times are U(0, 1/(2 auc)) in horizon units, which makes the
    horizon-averaged censoring CDF equal ``auc``.
    """
    if not (0 < auc < 0.5 and 0 < p < 1):
        raise ValueError("need 0 < p < 1 and 0 < auc < 0.5")
    cens_max = 1.0 / (2.0 * auc)
    sse_k = sse_n = 0.0
    done = 0
    while done < reps:
        m = min(chunk, reps - done)
        u = rng.random((m, n))
        dies = u < p
        death_time = u / p  # uniform on (0, 1) given death
        censor = rng.uniform(0.0, cens_max, (m, n))
        s = dies.sum(axis=1)
        e = (dies & (death_time <= censor)).sum(axis=1)
        truth = s / n
        naive = e / n
        kstar = naive / (1.0 - auc)
        sse_k += float(np.sum((kstar - truth) ** 2))
        sse_n += float(np.sum((naive - truth) ** 2))
        done += m
    return MSEPoint(p, auc, sse_k / reps, sse_n / reps)


def mse_sweep(death_probs, aucs, n: int = 100, reps: int = 100_000, seed: int = 0) -> list[MSEPoint]:
    """:func:`mse_point` over a grid, one independent stream per point."""
    death_probs, aucs = list(death_probs), list(aucs)
    streams = np.random.SeedSequence(seed).spawn(len(death_probs) * len(aucs))
    out = []
    for i, p in enumerate(death_probs):
        for j, a in enumerate(aucs):
            out.append(mse_point(p, a, n, reps, np.random.default_rng(streams[i * len(aucs) + j])))
    return out
