"""Cross-model comparison: L1 distances, effective sample size, forest plots, tables."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy import stats

from .errors import GridTooCoarse

METHODS = ("DSL", "ML", "NaiveBayes", "UREE")
TABLE3_PARAMETERS = ("d", "sigma2", "m", "tau2")
TABLE3_LABELS = {"d": "d", "sigma2": "sigma^2", "m": "m", "tau2": "tau^2"}


@dataclass
class MetaResult:
    """Summary of one pooled analysis on the log-odds scale, with odds-ratio transforms.

    ``d_mean`` is a posterior mean for the Bayesian methods and a point estimate
    for DSL/ML.  ``or_mean`` is the mean of exp(d) for Bayesian methods and
    exp(d_hat) otherwise.  ``per_study`` maps study id to (estimate, sd, lo, hi)
    on the log-odds scale.
    """

    method: str
    d_mean: float
    d_sd: float
    interval_lo: float
    interval_hi: float
    or_mean: float
    or_lo: float
    or_hi: float
    per_study: dict[str, tuple[float, float, float, float]] = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if not self.interval_lo <= self.d_mean <= self.interval_hi:
            raise ValueError("interval must contain d_mean")

    @property
    def or_interval_includes_one(self) -> bool:
        return self.or_lo <= 1.0 <= self.or_hi

    def to_dict(self) -> dict:
        out = asdict(self)
        out["per_study"] = {k: list(v) for k, v in self.per_study.items()}
        return out

    @classmethod
    def from_dict(cls, data: Mapping) -> "MetaResult":
        data = dict(data)
        data["per_study"] = {k: tuple(v) for k, v in data.get("per_study", {}).items()}
        return cls(**data)

    @classmethod
    def from_pooled(cls, est, effects=(), z: float = 1.959963984540054) -> "MetaResult":
        """From a classical ``PooledEstimate`` and its ``StudyEffect`` list."""
        lo, hi = est.interval(z)
        per = {}
        for e in effects:
            sd = math.sqrt(e.sigma2_hat)
            per[e.study_id] = (e.O, sd, e.O - z * sd, e.O + z * sd)
        return cls(est.method, est.d_hat, est.se, lo, hi, math.exp(est.d_hat), math.exp(lo), math.exp(hi),
                   per, {"tau2_hat": est.tau2_hat, "Q": est.Q, "converged": est.converged,
                         "iterations": est.iterations})


def save_results(results: Sequence[MetaResult], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump([r.to_dict() for r in results], fh, indent=2, sort_keys=True)


def load_results(path) -> list[MetaResult]:
    with open(path, encoding="utf-8") as fh:
        return [MetaResult.from_dict(r) for r in json.load(fh)]


# --------------------------------------------------------------------------- #
# L1 distance
# --------------------------------------------------------------------------- #

def _l1_on(grid, fa, fb) -> float:
    return 0.5 * float(np.trapezoid(np.abs(fa - fb), grid))


def l1_distance(density_a: Callable | np.ndarray, density_b: Callable | np.ndarray, grid,
                check: bool = True, tol: float = 1e-4) -> float:
    """Half the integrated absolute difference of two densities, in [0, 1].

    Densities may be callables or values already evaluated on ``grid``.  With
    callables and ``check=True`` the grid is refined once (midpoints inserted)
    and :class:`GridTooCoarse` is raised if the value moves by more than ``tol``.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing with at least two points")
    fa = density_a(grid) if callable(density_a) else np.asarray(density_a, dtype=float)
    fb = density_b(grid) if callable(density_b) else np.asarray(density_b, dtype=float)
    value = _l1_on(grid, fa, fb)
    if check and callable(density_a) and callable(density_b):
        fine = np.sort(np.concatenate([grid, 0.5 * (grid[1:] + grid[:-1])]))
        refined = _l1_on(fine, density_a(fine), density_b(fine))
        if abs(refined - value) > tol:
            raise GridTooCoarse(f"L1 changed by {abs(refined - value):.2e} on refinement")
        value = refined
    return float(min(1.0, max(0.0, value)))


def common_bandwidth(a: np.ndarray, b: np.ndarray) -> float:
    """Silverman's rule of thumb on the pooled sample."""
    x = np.concatenate([np.ravel(a), np.ravel(b)])
    sd = x.std(ddof=1)
    iqr = np.subtract(*np.percentile(x, [75, 25]))
    spread = min(sd, iqr / 1.349) if iqr > 0 else sd
    return float(0.9 * spread * x.size ** (-0.2))


def l1_from_draws(a: np.ndarray, b: np.ndarray, points: int = 1024,
                  bandwidth: float | None = None) -> tuple[float, float]:
    """L1 between two sets of draws via Gaussian KDEs with a shared bandwidth.

    Returns ``(l1, bandwidth)``.
    """
    a, b = np.ravel(np.asarray(a, float)), np.ravel(np.asarray(b, float))
    h = common_bandwidth(a, b) if bandwidth is None else float(bandwidth)
    if not h > 0:
        raise ValueError("bandwidth must be positive")
    lo = min(a.min(), b.min()) - 5 * h
    hi = max(a.max(), b.max()) + 5 * h
    grid = np.linspace(lo, hi, points)
    ka = stats.gaussian_kde(a, bw_method=h / a.std(ddof=1))
    kb = stats.gaussian_kde(b, bw_method=h / b.std(ddof=1))
    return l1_distance(ka(grid), kb(grid), grid, check=False), h


# --------------------------------------------------------------------------- #
# effective sample size
# --------------------------------------------------------------------------- #

def effective_sample_size(var_naive: float, var_uree: float, n_total: float) -> float:
    """Sample size with the naive precision that matches the UR-EE posterior variance."""
    if not (var_naive > 0 and var_uree > 0):
        raise ValueError("variances must be positive")
    return var_naive / var_uree * n_total


def sd_inflation(sd_naive: float, sd_uree: float) -> float:
    """Relative increase of the posterior SD (0.33 means 33%)."""
    return sd_uree / sd_naive - 1.0


def ess_table(naive: MetaResult, uree: MetaResult, n_total: float) -> dict:
    n_eff = effective_sample_size(naive.d_sd ** 2, uree.d_sd ** 2, n_total)
    return {"n_total": n_total, "sd_naive": naive.d_sd, "sd_uree": uree.d_sd,
            "sd_inflation": sd_inflation(naive.d_sd, uree.d_sd),
            "n_eff": n_eff, "reduction": 1.0 - n_eff / n_total}


# --------------------------------------------------------------------------- #
# tables
# --------------------------------------------------------------------------- #

def table3_rows(naive: Mapping[str, tuple[float, float]], uree: Mapping[str, tuple[float, float]]) -> list[list]:
    """Rows of (parameter, naive mean, naive SD, UR-EE mean, UR-EE SD)."""
    return [[TABLE3_LABELS[p], naive[p][0], naive[p][1], uree[p][0], uree[p][1]] for p in TABLE3_PARAMETERS]


def write_table3(naive, uree, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["parameter", "naive_mean", "naive_sd", "uree_mean", "uree_sd"])
        for row in table3_rows(naive, uree):
            w.writerow([row[0], *(f"{v:.4f}" for v in row[1:])])


def format_table3(naive, uree) -> str:
    lines = [f"{'':8s}{'Naive':>18s}{'UR-EE':>18s}", f"{'':8s}{'Mean':>9s}{'SD':>9s}{'Mean':>9s}{'SD':>9s}"]
    for row in table3_rows(naive, uree):
        lines.append(f"{row[0]:8s}" + "".join(f"{v:9.2f}" for v in row[1:]))
    return "\n".join(lines)


# --------------------------------------------------------------------------- #
# forest plot
# --------------------------------------------------------------------------- #

def _rows(results: Sequence[MetaResult], study_rows):
    order = {m: i for i, m in enumerate(METHODS)}
    rows = []
    if study_rows is None:
        first = next((r for r in results if r.per_study), None)
        study_rows = [] if first is None else [(sid, v[0], v[2], v[3]) for sid, v in first.per_study.items()]
    for label, est, lo, hi in study_rows:
        rows.append((str(label), math.exp(est), math.exp(lo), math.exp(hi), False))
    for r in sorted(results, key=lambda r: order[r.method]):
        rows.append((r.method, r.or_mean, r.or_lo, r.or_hi, True))
    return rows


def forest_plot(results: Sequence[MetaResult], study_rows=None, width: int = 640,
                row_height: int = 22) -> tuple[str, str]:
    """Deterministic SVG and aligned text forest plot on a log odds-ratio axis.

    ``study_rows`` is an optional list of (label, estimate, lo, hi) on the
    log-odds scale; by default the per-study effects of the first result that
    has them are drawn.  Method rows follow, ordered DSL, ML, NaiveBayes, UREE.
    """
    if not results and not study_rows:
        raise ValueError("need at least one result or study row")
    rows = _rows(results, study_rows)
    vals = [v for r in rows for v in r[1:4] if v > 0 and math.isfinite(v)] + [1.0]
    lmin, lmax = math.log10(min(vals)), math.log10(max(vals))
    pad = 0.05 * max(lmax - lmin, 0.2)
    lmin, lmax = lmin - pad, lmax + pad
    left, right, top = 150, 20, 20
    plot_w = width - left - right
    height = top + row_height * (len(rows) + 2)

    def xpos(v):
        v = min(max(v, 10 ** lmin), 10 ** lmax)
        return left + (math.log10(v) - lmin) / (lmax - lmin) * plot_w

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
             f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
             f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>']
    x1 = xpos(1.0)
    bottom = top + row_height * len(rows)
    parts.append(f'<line x1="{x1:.2f}" y1="{top:.2f}" x2="{x1:.2f}" y2="{bottom:.2f}" '
                 f'stroke="grey" stroke-dasharray="4,3"/>')
    text_lines = []
    lw = max(len(r[0]) for r in rows)
    for i, (label, est, lo, hi, is_method) in enumerate(rows):
        y = top + row_height * (i + 0.5)
        colour = "black" if not is_method else "firebrick"
        parts.append(f'<text x="{left - 8}" y="{y + 4:.2f}" text-anchor="end">{_escape(label)}</text>')
        parts.append(f'<line x1="{xpos(lo):.2f}" y1="{y:.2f}" x2="{xpos(hi):.2f}" y2="{y:.2f}" '
                     f'stroke="{colour}" stroke-width="1.5"/>')
        if is_method:
            cx = xpos(est)
            parts.append(f'<polygon points="{cx - 6:.2f},{y:.2f} {cx:.2f},{y - 5:.2f} {cx + 6:.2f},{y:.2f} '
                         f'{cx:.2f},{y + 5:.2f}" fill="{colour}"/>')
        else:
            parts.append(f'<rect x="{xpos(est) - 3:.2f}" y="{y - 3:.2f}" width="6" height="6" fill="{colour}"/>')
        text_lines.append(f"{label:<{lw}s}  {est:8.3f}  [{lo:8.3f}, {hi:8.3f}]")
    # axis
    parts.append(f'<line x1="{left}" y1="{bottom + 4:.2f}" x2="{left + plot_w}" y2="{bottom + 4:.2f}" stroke="black"/>')
    for tick in _log_ticks(lmin, lmax):
        tx = xpos(tick)
        parts.append(f'<line x1="{tx:.2f}" y1="{bottom + 4:.2f}" x2="{tx:.2f}" y2="{bottom + 9:.2f}" stroke="black"/>')
        parts.append(f'<text x="{tx:.2f}" y="{bottom + 22:.2f}" text-anchor="middle">{tick:g}</text>')
    parts.append(f'<text x="{left + plot_w / 2:.2f}" y="{height - 4}" text-anchor="middle">Odds ratio (log scale)</text>')
    parts.append("</svg>")
    header = f"{'':<{lw}s}  {'OR':>8s}  {'95% interval':^20s}"
    return "\n".join(parts) + "\n", "\n".join([header, *text_lines]) + "\n"


def _log_ticks(lmin: float, lmax: float) -> list[float]:
    ticks = []
    for e in range(math.floor(lmin), math.ceil(lmax) + 1):
        for mult in (1, 2, 5):
            v = mult * 10.0 ** e
            if lmin <= math.log10(v) <= lmax:
                ticks.append(round(v, 10))
    return ticks


def _escape(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
