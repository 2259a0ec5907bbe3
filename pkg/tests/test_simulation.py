"""Synthetic trials, the product-limit estimator, the simulated fixture and Monte Carlo oracles."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uree.events import FollowUpModel, censoring_summary
from uree.simulation import (SimArm, SimConfig, generate_dataset, generate_study, km_estimate,
                             lognormal_quartiles, mc_censoring_fraction, mse_point, sample_truncated_normal,
                             simulate_arm, true_deaths, truths_from_json, truths_to_json)

INF = math.inf


# ---- product-limit -------------------------------------------------------------------

def test_km_no_censoring():
    events = [0.1, 0.2, 0.3] + [INF] * 7
    kappa, var = km_estimate(events, [INF] * 10, 1.0)
    assert kappa == pytest.approx(0.7)
    assert var == pytest.approx(0.7 * 0.3 / 10)


def test_km_hand_example():
    kappa, _ = km_estimate([1, INF, 3, INF], [INF, 2, INF, INF], 10.0)
    assert kappa == pytest.approx(0.375)


def test_km_all_censored_first():
    kappa, var = km_estimate([5, 6], [1, 2], 10.0)
    assert kappa == 1.0 and var == 0.0


def test_km_ignores_deaths_after_horizon():
    kappa, _ = km_estimate([0.5, 2.0], [INF, INF], 1.0)
    assert kappa == 0.5


def test_km_rejects_nonpositive_times():
    with pytest.raises(ValueError):
        km_estimate([0.0], [1.0], 1.0)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0.01, 3.0), min_size=1, max_size=40))
def test_km_zero_censoring_property(times):
    kappa, _ = km_estimate(times, [INF] * len(times), 1.0)
    assert kappa == pytest.approx(1 - sum(t <= 1.0 for t in times) / len(times), abs=1e-12)


# ---- arm generation -------------------------------------------------------------------

def test_arm_without_censoring(rng):
    a = simulate_arm(200, 0.3, 50.0, 0.1, 1.0, rng)
    assert a.e == a.s and a.lost == 0
    assert a.kappa == pytest.approx(1 - a.s / a.n)


def test_arm_zero_risk(rng):
    a = simulate_arm(100, 0.0, 0.0, 1.0, 1.0, rng)
    assert a.s == a.e == 0 and a.kappa == 1.0


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 300), st.floats(0, 1), st.floats(-3, 3), st.floats(0.05, 2), st.integers(0, 2**32 - 1))
def test_arm_accounting(n, pi, psi, sd, seed):
    a = simulate_arm(n, pi, psi, sd, 1.0, np.random.default_rng(seed))
    survivors = n - a.e - a.lost
    assert 0 <= a.e <= a.s <= n
    assert survivors >= 0 and survivors <= n - a.s
    assert a.lost >= a.s - a.e
    assert 0 <= a.kappa <= 1


def test_simarm_validation():
    with pytest.raises(ValueError):
        SimArm(10, 3, 4, 0, 0.7)


def test_simulated_censoring_matches_lognormal():
    cfg = SimConfig(k=1, mean_arm_size=20000, seed=3, tau2=0.0, sigma2=0.0)
    study = generate_study(cfg, 0, np.random.default_rng(1))
    for name, target in (("treatment", 0.50), ("control", 0.03)):
        a = study.arm(name)
        lam = censoring_summary(FollowUpModel(*cfg.followup(name)), a.n, cfg.horizon).lam
        # censored-before-horizon fraction among those not already dead
        survivors_lost = a.lost - (a.s - a.e)
        frac = survivors_lost / (a.n - a.s) if a.n > a.s else 0
        assert abs(frac - lam) < 0.02 and abs(lam - target) < 0.01


def test_config_validation():
    with pytest.raises(ValueError):
        SimConfig(k=0)
    with pytest.raises(ValueError):
        SimConfig(tau2=-1)
    assert SimConfig().effective_d == 0.0 and SimConfig(literal_d=True).effective_d == 1.0


def test_generate_is_reproducible():
    a_ds, a_t = generate_dataset(SimConfig(seed=99))
    b_ds, b_t = generate_dataset(SimConfig(seed=99))
    assert a_ds == b_ds and a_t == b_t
    c_ds, _ = generate_dataset(SimConfig(seed=100))
    assert c_ds != a_ds


def test_generated_records():
    cfg = SimConfig()
    ds, truths = generate_dataset(cfg)
    assert ds.k == cfg.k == len(truths)
    q = lognormal_quartiles(*cfg.treatment_followup)
    arm = ds.studies[0].treatment
    assert (arm.followup.q1, arm.followup.q2, arm.followup.q3) == pytest.approx(q)
    assert arm.e == truths[0].treatment.e


def test_truth_json_round_trip():
    _, truths = generate_dataset(SimConfig(k=3))
    back = truths_from_json(truths_to_json(truths))
    assert np.array_equal(true_deaths(back), true_deaths(truths))


# ---- bundled fixture -------------------------------------------------------------------

def test_fixture_rows(appendix_b):
    ds, truths = appendix_b
    t1 = truths[0].treatment
    assert (t1.n, t1.e, t1.s, t1.kappa, t1.lost) == (45, 17, 23, 0.53, 16)
    c5 = truths[4].control
    assert (c5.n, c5.e, c5.s, c5.kappa, c5.lost) == (187, 72, 73, 0.61, 4)
    assert ds.studies[0].treatment.kappa_star == 0.53


def test_fixture_invariants(appendix_b):
    ds, truths = appendix_b
    assert len(truths) == 10
    for t in truths:
        for a in (t.treatment, t.control):
            assert a.e <= a.s <= a.n and 0.53 <= a.kappa <= 0.87
    lost_t = sum(t.treatment.lost for t in truths)
    lost_c = sum(t.control.lost for t in truths)
    assert lost_t > 10 * lost_c


# ---- oracles ---------------------------------------------------------------------------

@pytest.mark.parametrize("psi, sd", [(5.89, 0.83), (7.05, 0.63), (0.0, 1.0)])
def test_mc_censoring_agrees_with_quadrature(psi, sd, rng):
    horizon = 365.25 if psi > 1 else 1.0
    cs = censoring_summary(FollowUpModel(psi, sd), 1, horizon)
    lam, auc = mc_censoring_fraction(psi, sd, horizon, 400_000, rng)
    assert lam == pytest.approx(cs.lam, abs=0.004)
    assert auc == pytest.approx(cs.auc_fraction, abs=0.003)


def test_truncated_normal_oracle(rng):
    x = sample_truncated_normal(10.0, 4.0, 8.0, 12.0, 200_000, rng)
    assert x.min() >= 8 and x.max() <= 12
    assert x.mean() == pytest.approx(10.0, abs=0.01)


def test_mse_point_example():
    pt = mse_point(0.2, 0.3, 50, 2000, np.random.default_rng(0))
    assert pt.mse_kstar < pt.mse_naive


def test_mse_point_domain():
    with pytest.raises(ValueError):
        mse_point(0.2, 0.6, 50, 10, np.random.default_rng(0))
