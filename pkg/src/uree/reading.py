"""Uncertain-reading densities for the KM-implied death count ``s+``.

The extracted reading is either a rounded survival probability or a ratio of two
ruler measurements taken off the KM plot.  Both are turned into a density for
``s+ = n (1 - kappa+)``, where ``kappa+`` is the survival estimate the study's
software actually printed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import stats

from .errors import InvalidMeasurement


class URKind(str, Enum):
    ROUNDED_UNIFORM = "RoundedUniform"
    RATIO_OF_UNIFORMS = "RatioOfUniforms"
    NORMAL_APPROX = "NormalApprox"
    DEGENERATE = "Degenerate"


@dataclass(frozen=True)
class URDensity:
    """Density of ``s+`` given the extracted reading.

    ``center`` is the extracted best guess ``s*``; ``lower``/``upper`` bound
    the support (already intersected with ``[0, n]``).  ``sd`` is used by the
    normal approximation and ``geometry`` = (x, y, w, z) half-width form by the
    exact ratio density.
    """

    kind: URKind
    n: float
    center: float
    lower: float
    upper: float
    sd: float = 0.0
    geometry: tuple[float, float, float, float] | None = None

    @property
    def is_degenerate(self) -> bool:
        return self.kind is URKind.DEGENERATE or self.upper <= self.lower

    def pdf(self, s_plus):
        s_plus = np.asarray(s_plus, dtype=float)
        inside = (s_plus >= self.lower) & (s_plus <= self.upper)
        if self.kind is URKind.DEGENERATE:
            raise ValueError("degenerate reading has no density")
        if self.kind is URKind.ROUNDED_UNIFORM:
            return np.where(inside, 1.0 / (self.upper - self.lower), 0.0)
        if self.kind is URKind.NORMAL_APPROX:
            a, b = (self.lower - self.center) / self.sd, (self.upper - self.center) / self.sd
            mass = stats.norm.cdf(b) - stats.norm.cdf(a)
            return np.where(inside, stats.norm.pdf(s_plus, self.center, self.sd) / mass, 0.0)
        x, y, w, z = self.geometry
        kappa = 1.0 - s_plus / self.n
        return np.where(inside, ratio_uniform_pdf(kappa, x, y, w, z) / self.n, 0.0)

    def logpdf(self, s_plus):
        with np.errstate(divide="ignore"):
            return np.log(self.pdf(s_plus))

    def mean(self) -> float:
        if self.is_degenerate:
            return self.center
        if self.kind is URKind.ROUNDED_UNIFORM:
            return 0.5 * (self.lower + self.upper)
        if self.kind is URKind.NORMAL_APPROX:
            a, b = (self.lower - self.center) / self.sd, (self.upper - self.center) / self.sd
            return float(stats.truncnorm.mean(a, b, loc=self.center, scale=self.sd))
        grid = np.linspace(self.lower, self.upper, 20001)
        return float(np.trapezoid(grid * self.pdf(grid), grid))

    def sample(self, rng: np.random.Generator, size: int | None = None):
        if self.is_degenerate:
            return np.full(size, self.center) if size is not None else self.center
        if self.kind is URKind.ROUNDED_UNIFORM:
            return rng.uniform(self.lower, self.upper, size)
        if self.kind is URKind.NORMAL_APPROX:
            a, b = (self.lower - self.center) / self.sd, (self.upper - self.center) / self.sd
            return stats.truncnorm.rvs(a, b, loc=self.center, scale=self.sd, size=size, random_state=rng)
        x, y, w, z = self.geometry
        xt = rng.uniform(x - w, x + w, size)
        yt = rng.uniform(y - z, y + z, size)
        return np.clip(self.n * (1.0 - xt / yt), self.lower, self.upper)


def degenerate(s_plus: float, n: float) -> URDensity:
    """Point mass at ``s_plus`` (an exact reading or a derived death estimate)."""
    return URDensity(URKind.DEGENERATE, float(n), float(s_plus), float(s_plus), float(s_plus))


def ur_rounded(kappa_star: float, digits: int | None, n: float) -> URDensity:
    """Uniform ``s+`` around ``s* = n (1 - kappa*)`` for a survival rounded to ``digits`` decimals.

    ``digits=None`` means an exact reading (point mass).
    """
    if not 0 < kappa_star < 1:
        raise ValueError("kappa_star must lie in (0, 1)")
    s_star = n * (1.0 - kappa_star)
    if digits is None:
        return degenerate(s_star, n)
    if digits < 1:
        raise ValueError("digits must be >= 1")
    half = 0.5 * 10.0 ** (-digits)
    lo, hi = max(0.0, s_star - half * n), min(float(n), s_star + half * n)
    return URDensity(URKind.ROUNDED_UNIFORM, float(n), s_star, lo, hi)


def rounded_kappa_interval(kappa_star: float, digits: int) -> tuple[float, float]:
    half = 0.5 * 10.0 ** (-digits)
    return kappa_star - half, kappa_star + half


def ratio_uniform_support(x_star: float, y_star: float, w: float, z: float | None = None) -> tuple[float, float]:
    """Range of x/y when each measurement is off by at most half a tick (``w``, ``z`` are tick widths)."""
    z = w if z is None else z
    if not (w > 0 and z > 0 and x_star > w / 2 and y_star > z / 2):
        raise InvalidMeasurement(f"need x* > w/2 > 0 and y* > z/2 > 0, got x*={x_star}, y*={y_star}, w={w}, z={z}")
    return (x_star - w / 2) / (y_star + z / 2), (x_star + w / 2) / (y_star - z / 2)


def _check_geometry(x, y, w, z):
    if not (x > w > 0 and y > z > 0):
        raise InvalidMeasurement(f"need x > w > 0 and y > z > 0, got x={x}, y={y}, w={w}, z={z}")


def ratio_uniform_pdf(p, x: float, y: float, w: float, z: float):
    """Density of X/Y for X ~ U(x - w, x + w), Y ~ U(y - z, y + z), x > w > 0, y > z > 0.

    ``w`` and ``z`` are half-widths.  Piecewise in four knots; which of the two
    inner knots comes first decides the middle branch.
    """
    _check_geometry(x, y, w, z)
    p = np.asarray(p, dtype=float)
    out = np.zeros_like(p)
    c = 8.0 * w * z
    k1 = (x - w) / (y + z)
    k4 = (x + w) / (y - z)
    a = (x - w) / (y - z)
    b = (x + w) / (y + z)
    with np.errstate(divide="ignore", invalid="ignore"):
        p2 = p * p
        if a <= b:
            m = (p >= k1) & (p < a)
            out[m] = ((y + z) ** 2 - (x - w) ** 2 / p2[m]) / c
            m = (p >= a) & (p <= b)
            out[m] = y / (2.0 * w)
            m = (p > b) & (p <= k4)
            out[m] = ((x + w) ** 2 / p2[m] - (y - z) ** 2) / c
        else:
            m = (p >= k1) & (p < b)
            out[m] = ((y + z) ** 2 - (x - w) ** 2 / p2[m]) / c
            m = (p >= b) & (p <= a)
            out[m] = x / (2.0 * z * p2[m])
            m = (p > a) & (p <= k4)
            out[m] = ((x + w) ** 2 / p2[m] - (y - z) ** 2) / c
    return out if out.ndim else float(out)


def ratio_uniform_cdf(p, x: float, y: float, w: float, z: float):
    """Closed-form integral of :func:`ratio_uniform_pdf` from the lower support end to ``p``."""
    _check_geometry(x, y, w, z)
    p = np.asarray(p, dtype=float)
    c = 8.0 * w * z
    k1, k4 = (x - w) / (y + z), (x + w) / (y - z)
    a, b = (x - w) / (y - z), (x + w) / (y + z)
    lo_sq, hi_sq = (x - w) ** 2, (x + w) ** 2

    def rising(t):  # antiderivative of ((y+z)^2 - (x-w)^2/t^2)/c
        return ((y + z) ** 2 * t + lo_sq / t) / c

    def falling(t):  # antiderivative of ((x+w)^2/t^2 - (y-z)^2)/c
        return (-hi_sq / t - (y - z) ** 2 * t) / c

    first_end = min(a, b)
    second_end = max(a, b)
    q = np.clip(p, k1, k4)
    f1 = rising(np.minimum(q, first_end)) - rising(k1)
    total1 = rising(first_end) - rising(k1)
    if a <= b:
        def mid(t):
            return y / (2.0 * w) * t
    else:
        def mid(t):
            return -x / (2.0 * z * t)
    t2 = np.clip(q, first_end, second_end)
    f2 = mid(t2) - mid(first_end)
    total2 = mid(second_end) - mid(first_end)
    t3 = np.clip(q, second_end, k4)
    f3 = falling(t3) - falling(second_end)
    out = np.where(q <= first_end, f1, np.where(q <= second_end, total1 + f2, total1 + total2 + f3))
    out = np.clip(out, 0.0, 1.0)
    return out if out.ndim else float(out)


def _normal_sd(x_star, y_star, w, n, z=None):
    lo, hi = ratio_uniform_support(x_star, y_star, w, z)
    return lo, hi, n / 6.0 * (hi - lo)


def ur_measured_normal(x_star: float, y_star: float, w: float, n: float, z: float | None = None) -> URDensity:
    """Normal approximation to the measured-reading density of ``s+``.

    Mean ``n (1 - x*/y*)``; the SD puts +/-3 SD on the ends of the ratio support.
    The normal is truncated to ``[0, n]``.
    """
    _, _, sd = _normal_sd(x_star, y_star, w, n, z)
    s_star = n * (1.0 - x_star / y_star)
    if sd == 0:
        return degenerate(s_star, n)
    return URDensity(URKind.NORMAL_APPROX, float(n), s_star, 0.0, float(n), sd=sd)


def ur_measured_exact(x_star: float, y_star: float, w: float, n: float, z: float | None = None) -> URDensity:
    """Exact ratio-of-uniforms density of ``s+`` for ruler measurements with tick widths ``w``, ``z``."""
    z = w if z is None else z
    lo, hi = ratio_uniform_support(x_star, y_star, w, z)
    geometry = (x_star, y_star, w / 2.0, z / 2.0)
    s_star = n * (1.0 - x_star / y_star)
    return URDensity(URKind.RATIO_OF_UNIFORMS, float(n), s_star,
                     max(0.0, n * (1.0 - hi)), min(float(n), n * (1.0 - lo)), geometry=geometry)


def normal_mass_in_support(ur: URDensity, x_star: float, y_star: float, w: float, z: float | None = None) -> float:
    """Probability the (untruncated) normal approximation puts on the image of the ratio support."""
    lo, hi = ratio_uniform_support(x_star, y_star, w, z)
    s_lo, s_hi = ur.n * (1.0 - hi), ur.n * (1.0 - lo)
    return float(stats.norm.cdf(s_hi, ur.center, ur.sd) - stats.norm.cdf(s_lo, ur.center, ur.sd))


def density_grid(ur: URDensity, points: int = 401) -> tuple[np.ndarray, np.ndarray]:
    """(grid, pdf) pairs over the effective support, for plotting."""
    if ur.is_degenerate:
        return np.array([ur.center]), np.array([math.inf])
    if ur.kind is URKind.NORMAL_APPROX:
        lo = max(ur.lower, ur.center - 4.5 * ur.sd)
        hi = min(ur.upper, ur.center + 4.5 * ur.sd)
    else:
        lo, hi = ur.lower, ur.upper
    grid = np.linspace(lo, hi, points)
    return grid, ur.pdf(grid)
