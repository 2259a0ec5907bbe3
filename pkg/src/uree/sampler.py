"""Hybrid Gibbs/Metropolis sampler for the binomial random-effects model.

Model, per study i and arm j (treatment j=1, control j=0)::

    s_ij ~ Bin(n_ij, pi_ij)
    logit pi_i1 = u_i + delta_i / 2,   logit pi_i0 = u_i - delta_i / 2
    delta_i ~ N(d, tau2),  u_i ~ N(m, sigma2)
    d ~ N, m ~ N, tau2 ~ IG, sigma2 ~ IG

The naive mode treats extracted death counts as observed ``s``.  The UR-EE mode
adds two latent counts per arm: ``s+`` (what the study's KM estimate implies)
with the reading density, and the true ``s`` with the estimated-events
density centred at ``s+``.  Counts are continuous; the binomial is extended
through gamma functions.

d, m, tau2 and sigma2 have conjugate updates.  delta_i and u_i, and the latent
counts, use random-walk Metropolis with step sizes tuned during burn-in toward
20-50% acceptance and frozen afterwards.  Given the hyperparameters the
per-study (and per-arm) updates are independent, so each block is updated for
all studies at once.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import erf, gammaln

from .augment import ArmPlan, build_plan
from .errors import EmptySupport, InsufficientChains, NonFiniteLikelihood
from .reading import URKind
from .reporting import MetaResult
from .study import ARMS, MetaDataset

ARM_SIGN = np.array([0.5, -0.5])  # columns follow ARMS: treatment, control

FIXED, TIED, S_ONLY, FULL = 0, 1, 2, 3
_UR_CODES = {URKind.ROUNDED_UNIFORM: 1, URKind.NORMAL_APPROX: 2, URKind.RATIO_OF_UNIFORMS: 3}


@dataclass(frozen=True)
class Priors:
    """Prior hyperparameters.

    Variance priors IG(a, b) use the inverted-gamma convention in which the
    precision 1/x ~ Gamma(shape a, scale b), i.e. density proportional to
    x^-(a+1) exp(-1/(b x)) and mean 1/(b (a - 1)).  The equivalent textbook
    inverse-gamma scale is 1/b; see :meth:`from_ig_scale`.
    """

    d_mean: float = 0.0
    d_sd: float = 2.35
    m_mean: float = 0.0
    m_sd: float = 1.98
    tau2_shape: float = 3.0
    tau2_scale: float = 2.0
    sigma2_shape: float = 3.0
    sigma2_scale: float = 2.0

    def __post_init__(self):
        if not (self.d_sd > 0 and self.m_sd > 0):
            raise ValueError("prior SDs must be positive")
        if min(self.tau2_shape, self.tau2_scale, self.sigma2_shape, self.sigma2_scale) <= 0:
            raise ValueError("inverse-gamma shape and scale must be positive")

    @classmethod
    def with_variance_prior(cls, shape: float, scale: float, **kw) -> "Priors":
        """Same IG(shape, scale) for tau2 and sigma2, in this class's convention."""
        return cls(tau2_shape=shape, tau2_scale=scale, sigma2_shape=shape, sigma2_scale=scale, **kw)

    @classmethod
    def from_ig_scale(cls, shape: float, ig_scale: float, **kw) -> "Priors":
        """Variance priors with density proportional to x^-(shape+1) exp(-ig_scale / x)."""
        return cls.with_variance_prior(shape, 1.0 / ig_scale, **kw)

    @property
    def tau2_beta(self) -> float:
        return 1.0 / self.tau2_scale

    @property
    def sigma2_beta(self) -> float:
        return 1.0 / self.sigma2_scale


@dataclass(frozen=True)
class ChainConfig:
    chains: int = 3
    burn_in: int = 2_000
    iterations: int = 100_000
    thin: int = 10
    seed: int = 20240101
    delta_step: float = 0.5
    u_step: float = 0.3
    adapt_every: int = 50
    threads: int = 1

    def __post_init__(self):
        if self.chains < 1 or self.thin < 1 or self.iterations < 1 or self.burn_in < 0:
            raise ValueError("chains, thin, iterations must be >= 1 and burn_in >= 0")

    @property
    def retained(self) -> int:
        return self.iterations // self.thin


@dataclass
class PosteriorDraws:
    """Retained draws, one (chains, draws) array per named quantity."""

    method: str
    columns: dict[str, np.ndarray]
    study_ids: list[str]
    acceptance: dict[str, list[float]] = field(default_factory=dict)
    diagnostics: list[str] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.columns[name]

    @property
    def n_chains(self) -> int:
        return next(iter(self.columns.values())).shape[0]

    @property
    def n_draws(self) -> int:
        return next(iter(self.columns.values())).shape[1]

    def pooled(self, name: str) -> np.ndarray:
        return self.columns[name].reshape(-1)

    def to_csv(self, path) -> None:
        names = list(self.columns)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["chain", "draw", *names])
            for c in range(self.n_chains):
                block = np.column_stack([self.columns[nm][c] for nm in names])
                for t, row in enumerate(block):
                    w.writerow([c, t, *(repr(float(v)) for v in row)])

    @classmethod
    def from_csv(cls, path, method: str = "") -> "PosteriorDraws":
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], np.array(rows[1:], dtype=float)
        names = header[2:]
        chains = body[:, 0].astype(int)
        n_chains = chains.max() + 1
        cols = {nm: np.stack([body[chains == c, 2 + j] for c in range(n_chains)]) for j, nm in enumerate(names)}
        ids = [nm[len("delta_"):] for nm in names if nm.startswith("delta_")]
        return cls(method, cols, ids)


# --------------------------------------------------------------------------- #
# model arrays
# --------------------------------------------------------------------------- #

@dataclass
class _Model:
    ids: list[str]
    n: np.ndarray
    s0: np.ndarray
    sp0: np.ndarray
    mode: np.ndarray
    plo: np.ndarray
    phi: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    B: np.ndarray
    ur_code: np.ndarray
    ur_mu: np.ndarray
    ur_sd: np.ndarray
    geo: np.ndarray
    prior_only: bool = False
    diagnostics: list[str] = field(default_factory=list)

    @property
    def k(self) -> int:
        return len(self.ids)

    @property
    def latent(self) -> bool:
        return bool(np.any(self.mode != FIXED))


def _fixed_model(ids, n, s, prior_only=False) -> _Model:
    k = len(ids)
    z = np.zeros((k, 2))
    return _Model(list(ids), n.astype(float), s.astype(float), s.astype(float), np.zeros((k, 2), int),
                  z.copy(), z.copy(), z.copy(), z.copy(), z.copy(), np.zeros((k, 2), int),
                  z.copy(), z.copy(), np.zeros((k, 2, 4)), prior_only)


def _model_from_plans(ids: list[str], plans: Sequence[ArmPlan], strict: bool, prior_only: bool) -> _Model:
    k = len(ids)
    by_key = {(p.study_id, p.arm): p for p in plans}
    n = np.zeros((k, 2))
    model = _fixed_model(ids, n, np.zeros((k, 2)), prior_only)
    for i, sid in enumerate(ids):
        for j, arm in enumerate(ARMS):
            p = by_key[(sid, arm)]
            ur, ee = p.ur, p.ee
            model.n[i, j] = p.n
            lb, ub = ee.lb_raw, ee.ub_raw
            model.lb[i, j], model.ub[i, j], model.B[i, j] = lb, ub, ee.B
            plo, phi = (ur.center, ur.center) if ur.is_degenerate else (ur.lower, ur.upper)
            plo, phi = max(plo, lb), min(phi, ub)
            if plo > phi:
                msg = f"{p.label}: reading support and event bounds [{lb:.3f}, {ub:.3f}] are disjoint"
                if strict:
                    raise EmptySupport(msg)
                clamp = min(max(p.s_star, lb), ub)
                model.diagnostics.append(msg + f"; fixed at {clamp:.3f}")
                model.s0[i, j] = model.sp0[i, j] = clamp
                continue
            width = phi - plo
            sp = min(max(p.s_star, plo + 0.01 * width), phi - 0.01 * width) if width > 0 else plo
            model.plo[i, j], model.phi[i, j] = plo, phi
            model.sp0[i, j] = model.s0[i, j] = sp
            h = min(sp - lb, ub - sp)
            ee_point = ee.B <= 0 or lb == ub
            if width <= 0:
                model.mode[i, j] = FIXED if (ee_point or h <= 0) else S_ONLY
            elif ee_point:
                model.mode[i, j] = TIED
            else:
                model.mode[i, j] = FULL
            if model.mode[i, j] in (TIED, FULL):
                model.ur_code[i, j] = _UR_CODES[ur.kind]
                model.ur_mu[i, j], model.ur_sd[i, j] = ur.center, ur.sd
                if ur.geometry is not None:
                    model.geo[i, j] = ur.geometry
    return model


# --------------------------------------------------------------------------- #
# densities
# --------------------------------------------------------------------------- #

def _log_pi(delta, u):
    eta = u[:, None] + ARM_SIGN * delta[:, None]
    return -np.logaddexp(0.0, -eta), -np.logaddexp(0.0, eta)


def _loglik(delta, u, s, n):
    logp, log1mp = _log_pi(delta, u)
    return np.sum(s * logp + (n - s) * log1mp, axis=1)


def _log_binom(x, n, logp, log1mp):
    return gammaln(n + 1.0) - gammaln(x + 1.0) - gammaln(n - x + 1.0) + x * logp + (n - x) * log1mp


def _ratio_pdf_fast(p, x, y, w, z):
    # (Y_hi^2 - Y_lo^2) / (8 w z) over the admissible range of the denominator
    with np.errstate(divide="ignore", invalid="ignore"):
        ylo = np.maximum(y - z, (x - w) / p)
        yhi = np.minimum(y + z, (x + w) / p)
        val = (yhi * yhi - ylo * ylo) / (8.0 * w * z)
    return np.where((p > 0) & (yhi > ylo), val, 0.0)


def _ur_logpdf(x, code, mu, sd, geo, n):
    out = np.zeros_like(x)
    normal = code == 2
    if np.any(normal):
        out[normal] = -0.5 * ((x[normal] - mu[normal]) / sd[normal]) ** 2
    ratio = code == 3
    if np.any(ratio):
        g = geo[ratio]
        dens = _ratio_pdf_fast(1.0 - x[ratio] / n[ratio], g[:, 0], g[:, 1], g[:, 2], g[:, 3])
        with np.errstate(divide="ignore"):
            out[ratio] = np.log(dens)
    return out


def _ee_log(s, sp, lb, ub, B):
    """log TN(s | sp, B) with symmetric truncation; -inf outside."""
    h = np.minimum(sp - lb, ub - sp)
    ok = (h > 0) & (np.abs(s - sp) <= h)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = -0.5 * (s - sp) ** 2 / B - np.log(erf(h / np.sqrt(2.0 * B)))
    return np.where(ok, val, -np.inf)


def _reflect(x, lo, hi):
    w = np.maximum(hi - lo, 1e-300)
    y = np.mod(x - lo, 2.0 * w)
    return lo + np.where(y > w, 2.0 * w - y, y)


def _tune(step, accepted, window, cap=None):
    rate = accepted / window
    step = step * np.where(rate < 0.2, 0.7, np.where(rate > 0.5, 1.4, 1.0))
    if cap is not None:
        step = np.minimum(step, cap)
    return step


def _ig_mean_sd(shape, beta):
    mean = beta / (shape - 1.0) if shape > 1 else beta
    sd = mean / math.sqrt(shape - 2.0) if shape > 2 else mean
    return mean, sd


# --------------------------------------------------------------------------- #
# one chain
# --------------------------------------------------------------------------- #

def _run_chain(model: _Model, priors: Priors, cfg: ChainConfig, seed, chain: int):
    rng = np.random.default_rng(seed)
    k = model.k
    n = model.n
    s = model.s0.copy()
    sp = model.sp0.copy()

    lg = np.log((s + 0.5) / (n - s + 0.5))
    delta = lg[:, 0] - lg[:, 1]
    u = lg.mean(axis=1)
    d, m = priors.d_mean, priors.m_mean
    tau2, tau2_sd = _ig_mean_sd(priors.tau2_shape, priors.tau2_beta)
    sigma2, sigma2_sd = _ig_mean_sd(priors.sigma2_shape, priors.sigma2_beta)
    if chain > 0:
        d += rng.uniform(-0.5, 0.5) * priors.d_sd
        m += rng.uniform(-0.5, 0.5) * priors.m_sd
        tau2 = max(0.05 * tau2, tau2 + rng.uniform(-0.5, 0.5) * tau2_sd)
        sigma2 = max(0.05 * sigma2, sigma2 + rng.uniform(-0.5, 0.5) * sigma2_sd)
        delta = delta + rng.uniform(-0.5, 0.5, k)
        u = u + rng.uniform(-0.5, 0.5, k)

    def loglik(dl, uu):
        if model.prior_only:
            return np.zeros(k)
        return _loglik(dl, uu, s, n)

    ll = loglik(delta, u)
    if not np.all(np.isfinite(ll)):
        bad = [model.ids[i] for i in np.flatnonzero(~np.isfinite(ll))]
        raise NonFiniteLikelihood(f"non-finite log likelihood at start for {bad}")

    # latent index sets over the flattened (k, 2) arrays
    mode = model.mode.ravel()
    idx_s = np.flatnonzero((mode == S_ONLY) | (mode == FULL))
    idx_full = np.flatnonzero(mode == FULL)
    idx_tied = np.flatnonzero(mode == TIED)
    nf, lbf, ubf, Bf = n.ravel(), model.lb.ravel(), model.ub.ravel(), model.B.ravel()
    plof, phif = model.plo.ravel(), model.phi.ravel()
    code, mu, sd, geo = model.ur_code.ravel(), model.ur_mu.ravel(), model.ur_sd.ravel(), model.geo.reshape(-1, 4)
    sf, spf = s.reshape(-1), sp.reshape(-1)  # views

    step_delta = np.full(k, cfg.delta_step)
    step_u = np.full(k, cfg.u_step)
    cap_s = np.maximum(ubf[idx_s] - lbf[idx_s], 1e-9)
    step_s = np.minimum(np.maximum(np.sqrt(Bf[idx_s]), 0.05), 0.5 * cap_s)
    cap_full = np.maximum(phif[idx_full] - plof[idx_full], 1e-12)
    step_full = 0.3 * cap_full
    cap_tied = np.maximum(phif[idx_tied] - plof[idx_tied], 1e-12)
    step_tied = 0.3 * cap_tied

    acc = {name: 0.0 for name in ("delta", "u", "s", "splus", "tied")}
    acc_arr = {"delta": np.zeros(k), "u": np.zeros(k), "s": np.zeros(len(idx_s)),
               "splus": np.zeros(len(idx_full)), "tied": np.zeros(len(idx_tied))}
    total = cfg.burn_in + cfg.iterations
    n_keep = cfg.retained
    out = {"d": np.empty(n_keep), "tau2": np.empty(n_keep), "m": np.empty(n_keep), "sigma2": np.empty(n_keep),
           "delta": np.empty((n_keep, k)), "u": np.empty((n_keep, k))}
    if model.latent:
        out["s"] = np.empty((n_keep, k, 2))
        out["splus"] = np.empty((n_keep, k, 2))
    keep = 0
    d_prec0 = 1.0 / priors.d_sd ** 2
    m_prec0 = 1.0 / priors.m_sd ** 2

    for it in range(total):
        # delta_i | rest
        prop = delta + step_delta * rng.standard_normal(k)
        ll_prop = loglik(prop, u)
        log_r = ll_prop - ll - 0.5 * ((prop - d) ** 2 - (delta - d) ** 2) / tau2
        ok = np.log(rng.random(k)) < log_r
        delta = np.where(ok, prop, delta)
        ll = np.where(ok, ll_prop, ll)
        acc_arr["delta"] += ok

        # u_i | rest
        prop = u + step_u * rng.standard_normal(k)
        ll_prop = loglik(delta, prop)
        log_r = ll_prop - ll - 0.5 * ((prop - m) ** 2 - (u - m) ** 2) / sigma2
        ok = np.log(rng.random(k)) < log_r
        u = np.where(ok, prop, u)
        ll = np.where(ok, ll_prop, ll)
        acc_arr["u"] += ok

        # conjugate hyperparameters
        prec = k / tau2 + d_prec0
        d = (delta.sum() / tau2 + priors.d_mean * d_prec0) / prec + rng.standard_normal() / math.sqrt(prec)
        tau2 = (priors.tau2_beta + 0.5 * np.sum((delta - d) ** 2)) / rng.gamma(priors.tau2_shape + 0.5 * k)
        prec = k / sigma2 + m_prec0
        m = (u.sum() / sigma2 + priors.m_mean * m_prec0) / prec + rng.standard_normal() / math.sqrt(prec)
        sigma2 = (priors.sigma2_beta + 0.5 * np.sum((u - m) ** 2)) / rng.gamma(priors.sigma2_shape + 0.5 * k)

        if model.latent:
            logp, log1mp = _log_pi(delta, u)
            logp, log1mp = logp.ravel(), log1mp.ravel()
            if len(idx_s):
                ii = idx_s
                cur, spc, lb_, ub_, B_ = sf[ii], spf[ii], lbf[ii], ubf[ii], Bf[ii]
                h = np.minimum(spc - lb_, ub_ - spc)
                lo, hi = np.maximum(0.0, spc - h), np.minimum(nf[ii], spc + h)
                prop = _reflect(cur + step_s * rng.standard_normal(len(ii)), lo, hi)
                t_cur = _log_binom(cur, nf[ii], logp[ii], log1mp[ii]) - 0.5 * (cur - spc) ** 2 / B_
                t_prop = _log_binom(prop, nf[ii], logp[ii], log1mp[ii]) - 0.5 * (prop - spc) ** 2 / B_
                if model.prior_only:
                    t_cur = -0.5 * (cur - spc) ** 2 / B_
                    t_prop = -0.5 * (prop - spc) ** 2 / B_
                ok = np.log(rng.random(len(ii))) < t_prop - t_cur
                sf[ii] = np.where(ok, prop, cur)
                acc_arr["s"] += ok
            if len(idx_full):
                ii = idx_full
                cur, sc = spf[ii], sf[ii]
                prop = _reflect(cur + step_full * rng.standard_normal(len(ii)), plof[ii], phif[ii])
                t_cur = _ur_logpdf(cur, code[ii], mu[ii], sd[ii], geo[ii], nf[ii]) + _ee_log(sc, cur, lbf[ii], ubf[ii], Bf[ii])
                t_prop = _ur_logpdf(prop, code[ii], mu[ii], sd[ii], geo[ii], nf[ii]) + _ee_log(sc, prop, lbf[ii], ubf[ii], Bf[ii])
                with np.errstate(invalid="ignore"):
                    ok = np.log(rng.random(len(ii))) < t_prop - t_cur
                spf[ii] = np.where(ok, prop, cur)
                acc_arr["splus"] += ok
            if len(idx_tied):
                ii = idx_tied
                cur = spf[ii]
                prop = _reflect(cur + step_tied * rng.standard_normal(len(ii)), plof[ii], phif[ii])
                t_cur = _ur_logpdf(cur, code[ii], mu[ii], sd[ii], geo[ii], nf[ii])
                t_prop = _ur_logpdf(prop, code[ii], mu[ii], sd[ii], geo[ii], nf[ii])
                if not model.prior_only:
                    t_cur = t_cur + _log_binom(cur, nf[ii], logp[ii], log1mp[ii])
                    t_prop = t_prop + _log_binom(prop, nf[ii], logp[ii], log1mp[ii])
                with np.errstate(invalid="ignore"):
                    ok = np.log(rng.random(len(ii))) < t_prop - t_cur
                new = np.where(ok, prop, cur)
                spf[ii] = new
                sf[ii] = new
                acc_arr["tied"] += ok
            ll = loglik(delta, u)

        if it < cfg.burn_in:
            if (it + 1) % cfg.adapt_every == 0:
                w = cfg.adapt_every
                step_delta = _tune(step_delta, acc_arr["delta"], w)
                step_u = _tune(step_u, acc_arr["u"], w)
                step_s = _tune(step_s, acc_arr["s"], w, 2.0 * cap_s)
                step_full = _tune(step_full, acc_arr["splus"], w, 2.0 * cap_full)
                step_tied = _tune(step_tied, acc_arr["tied"], w, 2.0 * cap_tied)
                for a in acc_arr.values():
                    a[:] = 0.0
            if it == cfg.burn_in - 1:
                for a in acc_arr.values():
                    a[:] = 0.0
            continue

        j = it - cfg.burn_in
        if (j + 1) % cfg.thin == 0 and keep < n_keep:
            out["d"][keep], out["tau2"][keep], out["m"][keep], out["sigma2"][keep] = d, tau2, m, sigma2
            out["delta"][keep], out["u"][keep] = delta, u
            if model.latent:
                out["s"][keep], out["splus"][keep] = s, sp
            keep += 1

    for name, a in acc_arr.items():
        acc[name] = float(a.mean()) / cfg.iterations if a.size else float("nan")
    if not np.all(np.isfinite(out["d"])):
        raise NonFiniteLikelihood("non-finite draws")
    return out, acc


def _run(model: _Model, method: str, priors: Priors, cfg: ChainConfig) -> PosteriorDraws:
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.chains)
    if cfg.threads > 1 and cfg.chains > 1:
        with ProcessPoolExecutor(max_workers=min(cfg.threads, cfg.chains)) as pool:
            futures = [pool.submit(_run_chain, model, priors, cfg, seeds[c], c) for c in range(cfg.chains)]
            results = [f.result() for f in futures]
    else:
        results = [_run_chain(model, priors, cfg, seeds[c], c) for c in range(cfg.chains)]

    cols: dict[str, np.ndarray] = {}
    for name in ("d", "tau2", "m", "sigma2"):
        cols[name] = np.stack([r[0][name] for r in results])
    for i, sid in enumerate(model.ids):
        cols[f"delta_{sid}"] = np.stack([r[0]["delta"][:, i] for r in results])
    for i, sid in enumerate(model.ids):
        cols[f"u_{sid}"] = np.stack([r[0]["u"][:, i] for r in results])
    if model.latent:
        for key, prefix in (("s", "s"), ("splus", "splus")):
            for i, sid in enumerate(model.ids):
                for j, arm in enumerate(ARMS):
                    cols[f"{prefix}_{sid}_{arm}"] = np.stack([r[0][key][:, i, j] for r in results])
    acceptance = {name: [r[1][name] for r in results] for name in results[0][1]}
    meta = {"method": method, "priors": asdict(priors), "config": asdict(cfg),
            "prior_only": model.prior_only, "arm_modes": model.mode.tolist()}
    return PosteriorDraws(method, cols, list(model.ids), acceptance, list(model.diagnostics), meta)


def run_naive(dataset: MetaDataset, s_star: np.ndarray | None = None, priors: Priors = Priors(),
              config: ChainConfig = ChainConfig(), prior_only: bool = False) -> PosteriorDraws:
    """Naive Bayesian random-effects fit treating extracted deaths as observed.

    ``s_star`` is a (k, 2) array ordered (treatment, control); by default each
    arm's best-guess count from its reading or observed deaths is used.
    """
    if dataset.k < 1:
        raise ValueError("dataset has no studies")
    n = np.array([[st.treatment.n, st.control.n] for st in dataset.studies], dtype=float)
    if s_star is None:
        s_star = np.array([[st.resolved_arm(a).extracted_deaths() for a in ARMS] for st in dataset.studies])
    s_star = np.asarray(s_star, dtype=float)
    if s_star.shape != n.shape or np.any(s_star < 0) or np.any(s_star > n):
        raise ValueError("s_star must be a (k, 2) array with 0 <= s <= n")
    return _run(_fixed_model(dataset.ids, n, s_star, prior_only), "NaiveBayes", priors, config)


def run_uree(dataset: MetaDataset, priors: Priors = Priors(), config: ChainConfig = ChainConfig(),
             plans: Sequence[ArmPlan] | None = None, exact_ratio: bool = False, strict: bool = False,
             prior_only: bool = False) -> PosteriorDraws:
    """UR-EE fit: augments the naive model with latent ``s+`` and ``s`` per arm."""
    if dataset.k < 1:
        raise ValueError("dataset has no studies")
    if plans is None:
        plans = build_plan(dataset, exact_ratio=exact_ratio)
    model = _model_from_plans(dataset.ids, plans, strict, prior_only)
    return _run(model, "UREE", priors, config)


# --------------------------------------------------------------------------- #
# diagnostics and summaries
# --------------------------------------------------------------------------- #

def gelman_rubin(draws: PosteriorDraws | np.ndarray, parameter: str = "d") -> float:
    """Potential scale reduction factor sqrt(V/W) from (chains, draws) output."""
    x = np.asarray(draws[parameter] if isinstance(draws, PosteriorDraws) else draws, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2:
        raise InsufficientChains("need at least two chains")
    n = x.shape[1]
    means = x.mean(axis=1)
    W = x.var(axis=1, ddof=1).mean()
    B = n * means.var(ddof=1)
    if W == 0:
        return 1.0 if B == 0 else math.inf
    V = (n - 1) / n * W + B / n
    return float(math.sqrt(V / W))


def summarize(draws: PosteriorDraws, transform: Callable[[np.ndarray], np.ndarray] = np.exp,
              parameter: str = "d", level: float = 0.95) -> MetaResult:
    """Pooled-chain mean, SD and central interval of ``parameter`` and its transform."""
    x = draws.pooled(parameter)
    if x.size == 0:
        raise ValueError("no draws")
    a = (1.0 - level) / 2.0
    lo, hi = np.quantile(x, [a, 1.0 - a])
    tx = transform(x)
    per_study = {}
    for sid in draws.study_ids:
        v = draws.pooled(f"delta_{sid}")
        q = np.quantile(v, [a, 1.0 - a])
        per_study[sid] = (float(v.mean()), float(v.std(ddof=1)) if v.size > 1 else 0.0, float(q[0]), float(q[1]))
    rhat = {}
    if draws.n_chains >= 2:
        for name in ("d", "tau2", "m", "sigma2"):
            if name in draws.columns:
                rhat[name] = gelman_rubin(draws, name)
    acc = {k: float(np.nanmean(v)) for k, v in draws.acceptance.items() if v and not all(map(math.isnan, v))}
    return MetaResult(
        method=draws.method,
        d_mean=float(x.mean()), d_sd=float(x.std(ddof=1)) if x.size > 1 else 0.0,
        interval_lo=float(min(lo, x.mean())), interval_hi=float(max(hi, x.mean())),
        or_mean=float(tx.mean()), or_lo=float(transform(lo)), or_hi=float(transform(hi)),
        per_study=per_study, diagnostics={"rhat": rhat, "acceptance": acc, "notes": list(draws.diagnostics)},
    )


def parameter_table(draws: PosteriorDraws, names: Sequence[str] = ("d", "sigma2", "m", "tau2")) -> dict[str, tuple[float, float]]:
    return {nm: (float(draws.pooled(nm).mean()), float(draws.pooled(nm).std(ddof=1))) for nm in names}


def save_metadata(draws: PosteriorDraws, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({**draws.metadata, "acceptance": draws.acceptance, "diagnostics": draws.diagnostics},
                  fh, indent=2, sort_keys=True)
