"""Numerical checks of the equivalence between IMLE and maximum likelihood.

Everything here works on analytic families whose density is known, so the
Monte Carlo quantities can be compared against exact values:

* expected nearest-sample squared distance, by simulation and through the
  tail-integral identity over an empirical CDF;
* the right-derivative at zero of the CDF of ``kappa * ||x - x0||^d``,
  which should equal the density at ``x0``;
* the constrained minimum ``Psi(z)`` of the expected nearest-sample
  distance over all location/scale settings with density ``z`` at the
  origin, which should be strictly decreasing;
* argmin preservation under monotone transforms with reweighting;
* agreement of the IMLE and MLE location estimates.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .datasets import Dataset
from .models import AnalyticFamily, Gaussian1D, IsotropicGaussian, closed_form_mle, log_density
from .numerics import RngStream, as_vec

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class InfeasibleConstraint(ValueError):
    """No parameter setting achieves the requested density."""


class TooFewSamples(RuntimeError):
    """A Monte Carlo bin is too sparse for a reliable estimate."""


# ---------------------------------------------------------------------------
# Empirical CDF and the tail integral


class EmpiricalCdf:
    """Right-continuous step function ``F(t) = #{x_k <= t} / N``."""

    def __init__(self, values):
        v = np.sort(np.asarray(values, dtype=np.float64).ravel())
        if v.size == 0:
            raise ValueError("empirical CDF needs at least one value")
        if not np.all(np.isfinite(v)):
            raise ValueError("values must be finite")
        self.values = v

    @property
    def n(self) -> int:
        return self.values.size

    def __call__(self, t):
        return np.searchsorted(self.values, t, side="right") / self.n


def tail_integral_expectation(cdf: EmpiricalCdf, m: int = 1) -> float:
    """``integral_0^inf (1 - F(t))^m dt`` for a CDF of nonnegative values.

    Exact over the step function: between consecutive order statistics
    ``v_(k)`` and ``v_(k+1)`` the integrand is ``((N - k) / N)^m``.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    v = cdf.values
    if v[0] < 0:
        raise ValueError("tail integral needs nonnegative values")
    n = v.size
    widths = np.diff(v, prepend=0.0)
    survival = (np.arange(n, 0, -1) / n) ** m
    return float(np.dot(widths, survival))


# ---------------------------------------------------------------------------
# Expected nearest-sample distance


def _min_sq_dists(samples: np.ndarray, x0: np.ndarray) -> np.ndarray:
    """samples (m, trials, d) -> per-trial min squared distance to x0."""
    diff = samples - x0
    return np.einsum("mtd,mtd->mt", diff, diff).min(axis=0)


def draw_trials(fam: AnalyticFamily, rng: RngStream, m: int, trials: int) -> np.ndarray:
    """Draw an (m, trials, d) array, filling one sample slot across all trials at a time.

    The fill order makes runs with the same stream nested: the first ``m'``
    slots of an ``m``-sample draw equal an ``m'``-sample draw. Estimates for
    different ``m`` then share their random numbers and the min over a
    superset can only shrink.
    """
    return fam.sample(rng, m * trials).reshape(m, trials, fam.dim)


def expected_min_dist_mc(fam: AnalyticFamily, x0, m: int, trials: int, rng: RngStream,
                         min_trials: int = 100) -> tuple[float, float]:
    """Monte Carlo ``E[min_{j<=m} ||x_j - x0||^2]`` as ``(mean, stderr)``."""
    if trials < min_trials:
        raise ValueError(f"use at least {min_trials} trials")
    if m < 1:
        raise ValueError("m must be >= 1")
    x0 = as_vec(x0, fam.dim)
    r = _min_sq_dists(draw_trials(fam, rng, m, trials), x0)
    return float(r.mean()), float(r.std(ddof=1) / math.sqrt(trials))


def single_draw_sq_dists(fam: AnalyticFamily, x0, n: int, rng: RngStream) -> np.ndarray:
    x0 = as_vec(x0, fam.dim)
    diff = fam.sample(rng, n) - x0
    return np.einsum("ij,ij->i", diff, diff)


def tail_integral_stderr(values: np.ndarray, m: int, resamples: int = 200,
                         rng: RngStream | None = None) -> float:
    """Bootstrap standard error of :func:`tail_integral_expectation`."""
    rng = rng or RngStream(0, 7)
    n = values.size
    est = np.empty(resamples)
    for b in range(resamples):
        est[b] = tail_integral_expectation(EmpiricalCdf(values[rng.integers(0, n, n)]), m)
    return float(est.std(ddof=1))


# ---------------------------------------------------------------------------
# Density as the CDF slope at zero


def ball_volume_constant(d: int) -> float:
    """Volume of the unit ball in ``d`` dimensions, ``pi^(d/2) / Gamma(d/2 + 1)``."""
    if d < 1:
        raise ValueError("d must be >= 1")
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


@dataclass
class DensitySlopeReport:
    x0: np.ndarray
    dim: int
    kappa: float
    h_grid: np.ndarray
    ratios: np.ndarray        # G_hat(h) / h
    ratio_stderr: np.ndarray
    slope: float              # extrapolated to h -> 0
    slope_stderr: float
    exact_density: float

    @property
    def rel_error(self) -> float:
        return abs(self.slope - self.exact_density) / self.exact_density


def lemma2_density_check(fam: AnalyticFamily, x0, n_draws: int, h_grid: Sequence[float] | None = None,
                         rng: RngStream | None = None, min_count: int = 200) -> DensitySlopeReport:
    """Estimate the right-derivative at 0 of the CDF of ``kappa * ||x - x0||^d``.

    ``G_hat(h) / h`` is computed on a grid of small ``h``; near zero it
    behaves like ``a + b * rho^2`` with ``rho = (h / kappa)^(1/d)`` the ball
    radius, so a weighted straight-line fit in ``rho^2`` extrapolates to
    ``a``. The result is compared to ``exp(log_density(x0))``.
    """
    rng = rng or RngStream(0)
    x0 = as_vec(x0, fam.dim)
    d = fam.dim
    kappa = ball_volume_constant(d)
    exact = math.exp(log_density(fam, x0))
    r = kappa * single_draw_sq_dists(fam, x0, n_draws, rng) ** (d / 2)
    cdf = EmpiricalCdf(r)
    if h_grid is None:
        # small quantiles of r: enough mass for stable ratios, small balls
        h_grid = np.quantile(r, np.linspace(0.002, 0.03, 8))
    h = np.asarray(sorted(h_grid), dtype=np.float64)
    counts = cdf(h) * n_draws
    while counts[0] < min_count:
        if h[-1] >= r.max():
            raise TooFewSamples(f"fewer than {min_count} draws even in the widest ball; draw more")
        warnings.warn(f"only {int(counts[0])} draws fall below h={h[0]:.3g}; doubling the grid",
                      stacklevel=2)
        h = 2.0 * h
        counts = cdf(h) * n_draws
    p = counts / n_draws
    ratios = p / h
    se = np.sqrt(p * (1 - p) / n_draws) / h
    rho2 = (h / kappa) ** (2.0 / d)
    w = 1.0 / se ** 2
    design = np.column_stack([np.ones_like(rho2), rho2])
    cov = np.linalg.inv(design.T @ (design * w[:, None]))
    coef = cov @ (design.T @ (w * ratios))
    # Grid points share draws, so the naive fit variance is optimistic;
    # report the smallest-h standard error as a conservative bound instead.
    slope_se = max(math.sqrt(cov[0, 0]), float(se[0]))
    return DensitySlopeReport(x0, d, kappa, h, ratios, se, float(coef[0]), slope_se, exact)


# ---------------------------------------------------------------------------
# Psi: constrained minimum of the expected nearest-sample distance


def golden_section_min(f: Callable[[float], float], lo: float, hi: float, tol: float = 1e-3,
                       max_iter: int = 200) -> float:
    """Minimize a unimodal ``f`` on ``[lo, hi]`` to interval width ``tol``."""
    a, b = lo, hi
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def scan_then_refine(f: Callable[[float], float], lo: float, hi: float, coarse: int = 41,
                     tol: float = 1e-3) -> float:
    """Coarse grid scan followed by golden-section refinement around the best cell."""
    grid = np.linspace(lo, hi, coarse)
    vals = [f(g) for g in grid]
    k = int(np.argmin(vals))
    a = grid[max(k - 1, 0)]
    b = grid[min(k + 1, coarse - 1)]
    return golden_section_min(f, a, b, tol)


@dataclass
class LocationScaleGaussian:
    """1-D Gaussian template with location ``mu`` and scale ``s >= s_min``.

    With ``free_location=False`` (the default) the location is pinned at
    the origin, so the density constraint fixes the scale. With
    ``free_location=True`` the scale is searched and the location solved
    from the constraint. The free search always ends at ``s_min``: a narrow
    component just off the origin has low density there yet lands its
    samples close by, so the constrained minimum is governed by ``s_min``.
    """

    s_min: float = 0.05
    free_location: bool = False

    def max_density(self) -> float:
        return 1.0 / (self.s_min * math.sqrt(2 * math.pi))

    def scale_range(self, z: float) -> tuple[float, float]:
        """Scales for which some admissible location gives density ``z`` at the origin."""
        if z <= 0:
            raise InfeasibleConstraint("density level must be positive")
        if z > self.max_density():
            raise InfeasibleConstraint(
                f"density {z:.6g} exceeds the family bound 1/(s_min*sqrt(2*pi)) = {self.max_density():.6g}")
        s_max = 1.0 / (z * math.sqrt(2 * math.pi))
        return (self.s_min if self.free_location else s_max), s_max

    def location_for(self, z: float, s: float) -> float:
        """Nonnegative location ``mu`` with ``phi(mu/s)/s = z``."""
        arg = z * s * math.sqrt(2 * math.pi)
        return s * math.sqrt(max(0.0, -2.0 * math.log(min(arg, 1.0))))


@dataclass
class PsiCurve:
    z_grid: np.ndarray
    psi: np.ndarray
    stderr: np.ndarray
    best_scale: np.ndarray
    best_location: np.ndarray
    m: int
    family: str = "gaussian-1d location-scale"

    def strictly_decreasing(self, bands: float = 2.0) -> bool:
        """True when each step down clears both ``bands * stderr`` intervals."""
        hi = self.psi + bands * self.stderr
        lo = self.psi - bands * self.stderr
        return bool(np.all(hi[1:] < lo[:-1]))


def psi_estimate(template: LocationScaleGaussian, z_grid, m: int, trials: int,
                 rng: RngStream) -> PsiCurve:
    """Estimate ``Psi(z) = min { E[min_j x_j^2] : density at 0 equals z }``.

    The constraint leaves at most one free parameter, the scale ``s``; the
    location follows from it. One set of standard-normal draws is reused for every
    ``(z, s)`` so the search runs on a smooth deterministic objective.
    """
    z_grid = np.asarray(z_grid, dtype=np.float64)
    if np.any(np.diff(z_grid) <= 0):
        raise ValueError("z grid must be strictly increasing")
    ranges = [template.scale_range(z) for z in z_grid]
    eps = rng.normal((m, trials))

    def per_trial(z, s):
        mu = template.location_for(z, s)
        return ((mu + s * eps) ** 2).min(axis=0)

    psi, se, scales, locs = [], [], [], []
    for z, (s_lo, s_hi) in zip(z_grid, ranges):
        s_best = s_hi
        if s_lo < s_hi:
            obj = lambda s: float(per_trial(z, s).mean())  # noqa: E731
            s_best = scan_then_refine(obj, s_lo, s_hi, coarse=25, tol=1e-4 * s_hi)
            for edge in (s_lo, s_hi):
                if obj(edge) <= obj(s_best):
                    s_best = edge
        r = per_trial(z, s_best)
        psi.append(r.mean())
        se.append(r.std(ddof=1) / math.sqrt(trials))
        scales.append(s_best)
        locs.append(template.location_for(z, s_best))
    return PsiCurve(z_grid, np.array(psi), np.array(se), np.array(scales), np.array(locs), m)


# ---------------------------------------------------------------------------
# Monotone transforms with reweighting


@dataclass
class TransformCheckSpec:
    """Functions ``f_i`` on an interval and a strictly increasing transform ``phi``."""

    fs: list
    phi: Callable
    phi_prime: Callable
    interval: tuple[float, float]
    description: str = ""


@dataclass
class TransformReport:
    argmin_plain: float
    argmin_transformed: float
    weights: np.ndarray
    phi_increasing: bool

    @property
    def gap(self) -> float:
        return abs(self.argmin_plain - self.argmin_transformed)


def lemma1_transform_check(spec: TransformCheckSpec, resolution: float = 1e-3) -> TransformReport:
    """Grid-minimize ``sum f_i`` and ``sum w_i phi(f_i)`` with ``w_i = 1/phi'(f_i(theta*))``."""
    lo, hi = spec.interval
    grid = np.arange(lo, hi + resolution / 2, resolution)
    fvals = np.array([[f(t) for t in grid] for f in spec.fs])
    plain = fvals.sum(axis=0)
    k = int(np.argmin(plain))
    theta_star = grid[k]
    weights = np.array([1.0 / spec.phi_prime(f(theta_star)) for f in spec.fs])
    transformed = (weights[:, None] * spec.phi(fvals)).sum(axis=0)
    levels = np.linspace(fvals.min(), fvals.max(), 1001)
    increasing = bool(np.all(np.diff(spec.phi(levels)) > 0))
    return TransformReport(theta_star, grid[int(np.argmin(transformed))], weights, increasing)


def quadratic_exp_instance(points=(0.0, 2.0, 4.0), interval=(-2.0, 6.0)) -> TransformCheckSpec:
    """``f_i = (theta - x_i)^2`` with ``phi = exp``."""
    fs = [(lambda t, x=x: (t - x) ** 2) for x in points]
    return TransformCheckSpec(fs, np.exp, np.exp, interval, "quadratic / exponential")


# ---------------------------------------------------------------------------
# IMLE vs MLE on a Gaussian location family


@dataclass
class EquivalenceReport:
    data: np.ndarray
    m: int
    trials: int
    theta_mle: float
    theta_imle: float
    objective_at_imle: float
    extra: dict = field(default_factory=dict)

    @property
    def gap(self) -> float:
        return abs(self.theta_imle - self.theta_mle)


def theorem1_equivalence_check(data: Dataset, family: AnalyticFamily, m: int, trials: int,
                               rng: RngStream, resolution: float = 1e-3,
                               margin: float = 1.0) -> EquivalenceReport:
    """Compare the MLE location with the minimizer of ``sum_i E[R_i(theta)]``.

    ``E[R_i]`` is estimated with one fixed set of noise draws shared by all
    candidate ``theta`` (common random numbers). The minimizer is found by a
    coarse scan followed by golden-section search to ``resolution``.
    """
    if not isinstance(family, (Gaussian1D, IsotropicGaussian)) or family.dim != 1 or data.dim != 1:
        raise ValueError("the equivalence check handles 1-D Gaussian location families")
    mle = closed_form_mle(family, data)
    x = data.points[:, 0]
    noise = family.std * rng.normal((m, trials))

    def objective(theta: float) -> float:
        s = theta + noise
        return float(sum(((s - xi) ** 2).min(axis=0).mean() for xi in x))

    lo, hi = x.min() - margin, x.max() + margin
    coarse = int(np.ceil((hi - lo) / 0.05)) + 1
    theta_hat = scan_then_refine(objective, lo, hi, coarse=coarse, tol=resolution)
    return EquivalenceReport(data.points.copy(), m, trials, float(mle.theta[0]), theta_hat,
                             objective(theta_hat))
