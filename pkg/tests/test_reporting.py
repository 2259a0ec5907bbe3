"""Result records, L1 distances, effective sample size, tables and forest plots."""

import math
import xml.etree.ElementTree as ET

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from uree.errors import GridTooCoarse
from uree.reporting import (MetaResult, common_bandwidth, effective_sample_size, ess_table, forest_plot,
                            format_table3, l1_distance, l1_from_draws, load_results, save_results, sd_inflation,
                            table3_rows, write_table3)

GRID = np.linspace(-12, 14, 4001)


def _result(method, mean=0.0, sd=0.1, per_study=None):
    lo, hi = mean - 1.96 * sd, mean + 1.96 * sd
    return MetaResult(method, mean, sd, lo, hi, math.exp(mean), math.exp(lo), math.exp(hi), per_study or {})


def _normal(mu, sd=1.0):
    return stats.norm(mu, sd).pdf


# ---- MetaResult -------------------------------------------------------------------------

def test_result_validation():
    with pytest.raises(ValueError):
        _result("Bogus")
    with pytest.raises(ValueError):
        MetaResult("DSL", 1.0, 0.1, 0.0, 0.5, 1, 1, 1)


def test_result_json_round_trip(tmp_path):
    rs = [_result("DSL", per_study={"A": (0.1, 0.2, -0.3, 0.5)}), _result("UREE", 0.2, 0.3)]
    save_results(rs, tmp_path / "r.json")
    assert load_results(tmp_path / "r.json") == rs


def test_includes_one():
    assert _result("ML", 0.0).or_interval_includes_one
    assert not _result("ML", 1.0, 0.1).or_interval_includes_one


# ---- L1 ---------------------------------------------------------------------------------

def test_l1_identical():
    assert l1_distance(_normal(0), _normal(0), GRID) == 0.0


def test_l1_disjoint():
    a = lambda x: stats.uniform(0, 1).pdf(x)
    b = lambda x: stats.uniform(3, 1).pdf(x)
    assert l1_distance(a, b, np.linspace(-1, 5, 60001)) == pytest.approx(1.0, abs=1e-4)


def test_l1_two_normals_quadrature_oracle():
    diff = lambda x: abs(stats.norm.pdf(x) - stats.norm.pdf(x, 2))
    oracle = 0.5 * (integrate.quad(diff, -np.inf, 1.0)[0] + integrate.quad(diff, 1.0, np.inf)[0])
    assert l1_distance(_normal(0), _normal(2), GRID) == pytest.approx(oracle, abs=1e-6)


def test_l1_coarse_grid():
    with pytest.raises(GridTooCoarse):
        l1_distance(_normal(0, 0.05), _normal(0.1, 0.05), np.linspace(-3, 3, 20))


def test_l1_rejects_bad_grid():
    with pytest.raises(ValueError):
        l1_distance(_normal(0), _normal(1), np.array([0.0, 0.0, 1.0]))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.floats(-3, 3), st.floats(0.3, 2.0)), min_size=3, max_size=3))
def test_l1_metric_properties(params):
    f, g, h = (_normal(mu, sd) for mu, sd in params)
    ab = l1_distance(f, g, GRID)
    ba = l1_distance(g, f, GRID)
    assert ab == pytest.approx(ba, abs=1e-12)
    assert 0.0 <= ab <= 1.0
    assert ab <= l1_distance(f, h, GRID) + l1_distance(h, g, GRID) + 1e-6


def test_l1_from_draws(rng):
    a = rng.normal(0, 1, 20000)
    b = rng.normal(2, 1, 20000)
    value, h = l1_from_draws(a, b)
    assert h == pytest.approx(common_bandwidth(a, b))
    assert value == pytest.approx(2 * stats.norm.cdf(1) - 1, abs=0.03)
    same, _ = l1_from_draws(a, rng.normal(0, 1, 20000))
    assert same < 0.05


# ---- ESS --------------------------------------------------------------------------------

def test_ess_examples():
    assert effective_sample_size(0.04, 0.04, 1000) == 1000
    assert effective_sample_size(0.57, 1.0, 1000) == pytest.approx(570)
    assert sd_inflation(0.22, 0.22 * 1.33) == pytest.approx(0.33)


@settings(max_examples=100, deadline=None)
@given(st.floats(1e-4, 10), st.floats(1e-4, 10), st.floats(1, 1e5), st.floats(0.1, 10))
def test_ess_homogeneous(vn, vu, n, c):
    assert effective_sample_size(vn, vu, c * n) == pytest.approx(c * effective_sample_size(vn, vu, n), rel=1e-12)


def test_ess_rejects_zero():
    with pytest.raises(ValueError):
        effective_sample_size(0.0, 1.0, 10)


def test_ess_table_consistency():
    t = ess_table(_result("NaiveBayes", sd=0.22), _result("UREE", sd=0.29), 2000)
    assert t["reduction"] == pytest.approx(1 - (0.22 / 0.29) ** 2)
    assert t["sd_inflation"] == pytest.approx(0.29 / 0.22 - 1)


# ---- parameter summary table ---------------------------------------------------------------

def test_table3_layout(tmp_path):
    naive = {"d": (-0.09, 0.22), "sigma2": (0.25, 0.1), "m": (-2.65, 0.2), "tau2": (0.23, 0.1)}
    uree = {k: (v[0], v[1] * 1.3) for k, v in naive.items()}
    rows = table3_rows(naive, uree)
    assert [r[0] for r in rows] == ["d", "sigma^2", "m", "tau^2"]
    write_table3(naive, uree, tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "parameter,naive_mean,naive_sd,uree_mean,uree_sd" and len(lines) == 5
    assert "-0.09" in format_table3(naive, uree)


# ---- forest plot -----------------------------------------------------------------------------

def test_forest_single_row():
    svg, text = forest_plot([], study_rows=[("A", 0.5, 0.1, 0.9)])
    root = ET.fromstring(svg)
    assert root.tag.endswith("svg")
    assert len(text.splitlines()) == 2
    assert f"{math.exp(0.5):8.3f}" in text


def test_forest_deterministic():
    rs = [_result("UREE", 0.1, 0.3), _result("DSL", 0.05, 0.2, {"S1": (0.2, 0.3, -0.4, 0.8)})]
    assert forest_plot(rs) == forest_plot(list(rs))


def test_forest_order_and_reference_line():
    rs = [_result(m, 0.0, sd) for m, sd in (("UREE", 0.3), ("NaiveBayes", 0.22), ("ML", 0.2), ("DSL", 0.19))]
    svg, text = forest_plot(rs)
    labels = [ln.split()[0] for ln in text.splitlines()[1:]]
    assert labels == ["DSL", "ML", "NaiveBayes", "UREE"]
    assert 'stroke-dasharray' in svg
    ET.fromstring(svg)


def test_forest_needs_rows():
    with pytest.raises(ValueError):
        forest_plot([])
