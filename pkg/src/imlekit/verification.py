"""Verification suites over the theory module, reported as check rows."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .datasets import Dataset
from .models import Gaussian1D, IsotropicGaussian
from .numerics import RngStream
from . import theory

SUITES = ("lemma1", "lemma2", "lemma3-psi", "theorem1", "tail-integral")

REPORT_HEADER = "check_id,statistic,expected,tolerance,pass"


@dataclass
class CheckRow:
    check_id: str
    statistic: float
    expected: float
    tolerance: float
    passed: bool

    def csv(self) -> str:
        return f"{self.check_id},{self.statistic!r},{self.expected!r},{self.tolerance!r},{str(self.passed).lower()}"


def _abs_row(check_id, stat, expected, tol) -> CheckRow:
    return CheckRow(check_id, float(stat), float(expected), float(tol), bool(abs(stat - expected) <= tol))


def run_lemma1(seed: int) -> list[CheckRow]:
    rows = []
    rep = theory.lemma1_transform_check(theory.quadratic_exp_instance())
    rows.append(_abs_row("lemma1/quad-exp/argmin-gap", rep.gap, 0.0, 1e-3))
    rows.append(_abs_row("lemma1/quad-exp/argmin-plain", rep.argmin_plain, 2.0, 1e-3))
    ident = theory.TransformCheckSpec(
        theory.quadratic_exp_instance().fs, lambda y: y, lambda y: np.ones_like(np.asarray(y, float)), (-2.0, 6.0))
    rep = theory.lemma1_transform_check(ident)
    rows.append(_abs_row("lemma1/identity/argmin-gap", rep.gap, 0.0, 1e-3))
    single = theory.TransformCheckSpec([lambda t: (t - 1.5) ** 2 + 0.25], np.log, lambda y: 1.0 / y, (-2.0, 6.0))
    rep = theory.lemma1_transform_check(single)
    rows.append(_abs_row("lemma1/single-log/argmin-gap", rep.gap, 0.0, 1e-3))
    return rows


def run_lemma2(seed: int, n_draws: int = 10**6, dims=(1, 2, 3)) -> list[CheckRow]:
    rows = []
    for d, exact in ((1, 2.0), (2, math.pi), (3, 4.0 * math.pi / 3.0)):
        rows.append(_abs_row(f"lemma2/kappa/d={d}", theory.ball_volume_constant(d), exact, 1e-12))
    for d in dims:
        fam = Gaussian1D(0.0, 1.0) if d == 1 else IsotropicGaussian.standard(d)
        rep = theory.lemma2_density_check(fam, np.zeros(d), n_draws, rng=RngStream(seed, 100 + d))
        rows.append(CheckRow(f"lemma2/slope/d={d}", rep.slope, rep.exact_density,
                             0.05 * rep.exact_density, rep.rel_error <= 0.05))
    return rows


def default_psi_grid() -> np.ndarray:
    return np.geomspace(0.1, 1.6, 8)


def run_lemma3_psi(seed: int, trials: int = 10**4, m: int = 4) -> list[CheckRow]:
    template = theory.LocationScaleGaussian(s_min=0.05)
    curve = theory.psi_estimate(template, default_psi_grid(), m, trials, RngStream(seed, 200))
    rows = []
    for k in range(1, curve.z_grid.size):
        upper = curve.psi[k] + 2 * curve.stderr[k]
        lower_prev = curve.psi[k - 1] - 2 * curve.stderr[k - 1]
        # statistic: separation between the bands (must be positive)
        rows.append(CheckRow(f"lemma3/psi-decrease/z={curve.z_grid[k]:.4f}", float(lower_prev - upper),
                             0.0, 0.0, bool(upper < lower_prev)))
    return rows


THEOREM1_CASES = (
    ((-1.0, 1.0), (1, 4, 16)),
    ((0.0, 2.0, 4.0), (1,)),
    ((0.0, 10.0), (1,)),
)


def run_theorem1(seed: int, trials: int = 20000) -> list[CheckRow]:
    rows = []
    fam = Gaussian1D(0.0, 1.0)
    for c, (points, ms) in enumerate(THEOREM1_CASES):
        data = Dataset(np.array(points)[:, None])
        for m in ms:
            rep = theory.theorem1_equivalence_check(data, fam, m, trials, RngStream(seed, 300 + 10 * c + m))
            label = "{" + ";".join(f"{p:g}" for p in points) + "}"
            rows.append(_abs_row(f"theorem1/data={label}/m={m}", rep.theta_imle, rep.theta_mle, 0.05))
    return rows


def run_tail_integral(seed: int, n_draws: int = 10**5, m: int = 8) -> list[CheckRow]:
    fam = Gaussian1D(0.0, 1.0)
    r = theory.single_draw_sq_dists(fam, [0.0], n_draws, RngStream(seed, 400))
    cdf = theory.EmpiricalCdf(r)
    rows = [_abs_row("tail/m=1-equals-mean", theory.tail_integral_expectation(cdf, 1), float(r.mean()), 1e-10)]
    tail = theory.tail_integral_expectation(cdf, m)
    tail_se = theory.tail_integral_stderr(r, m, rng=RngStream(seed, 401))
    mc, mc_se = theory.expected_min_dist_mc(fam, [0.0], m, n_draws // m, RngStream(seed, 402))
    rows.append(_abs_row(f"tail/m={m}-vs-mc", tail, mc, 3.0 * math.hypot(tail_se, mc_se)))
    return rows


RUNNERS = {
    "lemma1": run_lemma1,
    "lemma2": run_lemma2,
    "lemma3-psi": run_lemma3_psi,
    "theorem1": run_theorem1,
    "tail-integral": run_tail_integral,
}


def run_suite(name: str, seed: int) -> list[CheckRow]:
    return RUNNERS[name](seed)


def report_csv(rows: list[CheckRow]) -> str:
    return "\n".join([REPORT_HEADER, *(r.csv() for r in rows)]) + "\n"
