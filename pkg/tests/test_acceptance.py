"""Acceptance criteria 1-8, each at its stated tolerance and runtime budget.

Every test records one ``PASS``/``FAIL`` line with the measured values; the
lines are printed in the terminal summary (see conftest.py) and, when the
module is run as a script, on stdout.
"""

import math
import time

import numpy as np
import pytest

from oracles import grain_oracle, random_rescaled
from perturbhull.experiments import (
    ExperimentSpec,
    boundary_profile_compare,
    clt_diagnostics,
    default_workers,
    height_distribution_test,
    run_moment_experiment,
    scaling_slope,
)
from perturbhull.limit import RescaledCloud, estimate_limit_constant, extremal_thinning, festoon, xi_infinity
from perturbhull.models import sample_cloud, stream
from perturbhull.verify import check_beta_continuity, check_beta_normalization, check_mass_identity

RESULTS: list[str] = []
WORKERS = default_workers()


def record(n: int, ok: bool, msg: str, seconds: float) -> None:
    line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {msg} [{seconds:.1f}s]"
    RESULTS.append(line)
    print(line)


def test_criterion_1_analytic_identities():
    t = time.perf_counter()
    mass = check_mass_identity(dims=(2, 3, 4), scales=(1e3, 1e5), rtol=1e-6)
    norm = check_beta_normalization(dims=range(2, 9), tol=1e-12)
    cont = check_beta_continuity(dims=range(2, 9), tol=1e-14)
    secs = time.perf_counter() - t
    ok = mass.passed and norm.passed and cont.passed and secs < 10
    record(1, ok, f"mass identity worst rel {mass.worst:.2e} (<1e-6), Beta normalisation worst {norm.worst:.2e} "
                  f"(<1e-12), beta continuity worst {cont.worst:.2e} (<1e-14)", secs)
    assert ok


def test_criterion_2_worst_case_regime():
    t = time.perf_counter()
    binom = run_moment_experiment(ExperimentSpec(2, -10, [500], "binomial", replications=50, seed=201), WORKERS)
    frac = binom.rows[0].mean / 500
    pois = run_moment_experiment(ExperimentSpec(2, -5, [2000], "poisson", replications=200, seed=202), WORKERS)
    ratio = pois.rows[0].variance / 2000
    # context for the variance band: at R = 200 the sample variance of a
    # Poisson count has relative sd sqrt(2 / 199) ~ 0.1
    counts = np.array([len(sample_cloud(pois.spec.params(2000), pois.spec.rng(0, r, "cloud"))) for r in range(200)])
    exact = np.array_equal(pois.samples(0, 0), counts)
    secs = time.perf_counter() - t
    ok = frac >= 0.99 and 0.9 <= ratio <= 1.1 and secs < 300
    record(2, ok, f"binomial n=500 alpha=-10 mean f0/n = {frac:.4f} (>=0.99); "
                  f"Poisson lambda=2000 alpha=-5 Var f0/lambda = {ratio:.4f} (in [0.9, 1.1]; "
                  f"f0 equals the point count in every replication: {exact})", secs)
    assert ok


def test_criterion_3_scaling_exponents():
    t = time.perf_counter()
    scales = [2 ** j for j in range(10, 19)]
    targets = {1.0: (1 / 3, 0.05), 0.0: (1 / 4, 0.05), -10.0: (1.0, 0.02)}
    parts, ok = [], True
    for i, (alpha, (target, tol)) in enumerate(targets.items()):
        spec = ExperimentSpec(2, alpha, scales, "binomial", replications=30, seed=300 + i)
        report = run_moment_experiment(spec, WORKERS)
        fit = scaling_slope(report)
        good = abs(fit.slope_all - target) <= tol and report.failure_rate < 0.01
        ok &= good
        parts.append(f"alpha={alpha:g}: slope {fit.slope_all:.4f} +- {fit.stderr_all:.4f} "
                     f"(target {target:.4f} +- {tol}; top-3 {fit.slope:.4f})")
    secs = time.perf_counter() - t
    ok &= secs < 1800
    record(3, ok, "; ".join(parts), secs)
    assert ok


def test_criterion_4_intensity_convergence():
    t = time.perf_counter()
    parts, ok = [], True
    for alpha in (1.0, 0.3, 0.0, -1.0, -2.0):
        spec = ExperimentSpec(2, alpha, [1e4, 1e5], "poisson", replications=50, seed=400)
        lo, hi = height_distribution_test(spec, WORKERS)
        ok &= hi.ks < lo.ks
        parts.append(f"alpha={alpha:g}: KS {lo.ks:.4f} -> {hi.ks:.4f}")
    secs = time.perf_counter() - t
    ok &= secs < 900
    record(4, ok, "; ".join(parts), secs)
    assert ok


def test_criterion_5_festoon_against_grain_oracle():
    t = time.perf_counter()
    rng = np.random.default_rng(500)
    mismatches, dominance_failures = 0, 0
    for i in range(500):
        d = 2 + i % 2
        v, h = random_rescaled(rng, d, int(rng.integers(1, 31)))
        cloud = RescaledCloud(d, v, h, 3.0 * math.sqrt(d - 1), 4.0, 0.0)
        ext = extremal_thinning(cloud)
        oracle_ext, oracle_inc = grain_oracle(cloud.v, cloud.h)
        mask = np.zeros(len(cloud), bool)
        mask[ext] = True
        same = np.array_equal(mask, oracle_ext)
        for k in range(d):
            xi = np.array([xi_infinity(cloud, j, k) for j in range(len(cloud))])
            same &= np.array_equal(xi, oracle_inc[k] / (k + 1))
        mismatches += not same
        b = festoon(cloud).boundary(cloud.v)
        scale = 1.0 + cloud.h + np.sum(cloud.v ** 2, axis=1)
        dominance_failures += not (np.all(b <= cloud.h + 1e-9 * scale)
                                   and np.all(np.abs(b - cloud.h)[mask] <= 1e-9 * scale[mask]))
    secs = time.perf_counter() - t
    ok = mismatches == 0 and dominance_failures == 0 and secs < 120
    record(5, ok, f"500 clouds (d=2,3; <=30 points): {mismatches} oracle mismatches, "
                  f"{dominance_failures} dominance failures", secs)
    assert ok


def test_criterion_6_limit_constant_coherence():
    t = time.perf_counter()
    report = run_moment_experiment(ExperimentSpec(2, 0.0, [1e6], "poisson", replications=100, seed=600), WORKERS)
    lhs = report.rows[0]
    rhs = estimate_limit_constant(2, 0.0, 0, 10_000, stream(601, "rhs"))
    err = math.hypot(lhs.rescaled_mean_stderr, rhs.stderr)
    gap = abs(lhs.rescaled_mean - rhs.value)
    secs = time.perf_counter() - t
    ok = gap <= 3 * err and secs < 3600
    record(6, ok, f"E f0/(d kappa_d u) at lambda=1e6 = {lhs.rescaled_mean:.4f} +- {lhs.rescaled_mean_stderr:.4f}; "
                  f"limit integral = {rhs.value:.4f} +- {rhs.stderr:.4f}; gap {gap / err:.2f} combined stderr (<=3)",
           secs)
    assert ok


def test_criterion_7_clt():
    t = time.perf_counter()
    report = run_moment_experiment(ExperimentSpec(2, 0.0, [1e5], "poisson", replications=1000, seed=700), WORKERS)
    diag = clt_diagnostics(report.samples(0, 0))
    secs = time.perf_counter() - t
    ok = diag.pvalue > 0.01 and abs(diag.skewness) <= 0.2 and secs < 3600
    record(7, ok, f"KS p = {diag.pvalue:.3f} (>0.01), skewness = {diag.skewness:.3f} (|.|<=0.2), "
                  f"excess kurtosis = {diag.excess_kurtosis:.3f}", secs)
    assert ok


def test_criterion_8_boundary_convergence():
    t = time.perf_counter()
    grid = np.linspace(-5.0, 5.0, 101)[:, None]
    spec = ExperimentSpec(2, -5.0, [1e4, 1e5], "poisson", replications=50, seed=800)
    lo, hi = boundary_profile_compare(spec, grid, WORKERS)
    secs = time.perf_counter() - t
    ok = hi.median < lo.median and secs < 900
    record(8, ok, f"median sup-grid distance {lo.median:.3e} at lambda=1e4 -> {hi.median:.3e} at 1e5", secs)
    assert ok


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
