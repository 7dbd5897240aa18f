import json
import math

import numpy as np
import pytest

from perturbhull.experiments import (
    ExperimentSpec,
    MomentReport,
    MomentRow,
    boundary_profile_compare,
    clt_diagnostics,
    dumps_json,
    extreme_point_pattern_compare,
    height_distribution_test,
    hull_boundary_heights,
    records_csv,
    rescaling_factor,
    run_moment_experiment,
    scaling_slope,
    stored_point_heights,
)
from perturbhull.geometry import DomainError
from perturbhull.hull import convex_hull
from perturbhull.limit import rescale_model_cloud
from perturbhull.models import ModelParams, sample_cloud, stream
from perturbhull.scaling import critical_alphas, make_context


def test_spec_validation():
    with pytest.raises(DomainError):
        ExperimentSpec(2, 0, [100, 100])
    with pytest.raises(DomainError):
        ExperimentSpec(2, 0, [100, 50])
    with pytest.raises(DomainError):
        ExperimentSpec(2, 0, [100], replications=1)
    with pytest.raises(DomainError):
        ExperimentSpec(2, 0, [100], ks=(2,))
    with pytest.raises(DomainError):
        ExperimentSpec(2, 0, [])
    with pytest.raises(DomainError):
        ExperimentSpec(2, 0, [10.5], kind="binomial")


@pytest.mark.parametrize("d", range(2, 9))
def test_sub_rescaling_factor_is_lambda(d):
    """In the SUB regime d kappa_d u^{d-1} = lambda exactly."""
    lo, _ = critical_alphas(d)
    for lam in (1e2, 1e4, 1e7):
        assert math.isclose(rescaling_factor(d, float(lo) - 1, lam), lam, rel_tol=1e-12)


def test_moment_report_invariants():
    spec = ExperimentSpec(3, 0.5, [200, 400], "poisson", ks=(0, 1, 2), replications=12, seed=3)
    rep = run_moment_experiment(spec)
    assert rep.failure_rate == 0
    for r in rep.rows:
        x = rep.samples(spec.scales.index(r.scale), r.k)
        assert r.variance >= 0
        assert math.isclose(r.mean_stderr, x.std(ddof=1) / math.sqrt(len(x)), rel_tol=1e-12)
        assert 0 < r.rescaled_mean < math.inf
        norm = rescaling_factor(3, 0.5, r.scale)
        assert math.isclose(r.rescaled_mean * norm, r.mean, rel_tol=1e-12)
    assert np.all(rep.counts[0][:, 0] >= 4)
    # Euler relation in d = 3 holds per replication
    f = rep.counts[1]
    assert np.all(f[:, 0] - f[:, 1] + f[:, 2] == 2)


def test_moment_report_is_reproducible_and_worker_independent():
    spec = ExperimentSpec(2, 0.0, [300, 1000], "poisson", ks=(0, 1), replications=8, seed=11)
    a = run_moment_experiment(spec)
    b = run_moment_experiment(spec)
    c = run_moment_experiment(spec, workers=2)
    assert a.to_csv() == b.to_csv() == c.to_csv()
    assert dumps_json(a.to_dict()) == dumps_json(c.to_dict())
    other = run_moment_experiment(ExperimentSpec(2, 0.0, [300, 1000], "poisson", ks=(0, 1), replications=8, seed=12))
    assert other.to_csv() != a.to_csv()


def test_report_json_schema_nests_by_scale_and_k():
    spec = ExperimentSpec(2, 1.0, [100], "binomial", ks=(0, 1), replications=3, seed=1)
    doc = json.loads(dumps_json(run_moment_experiment(spec).to_dict()))
    assert doc["spec"]["d"] == 2 and doc["spec"]["scales"] == [100.0]
    entry = doc["results"]["100"]["0"]
    assert set(entry) >= {"mean", "variance", "rescaled_mean", "rescaled_variance", "mean_stderr", "ok", "failed"}
    # k = 0 and k = 1 agree in the plane
    assert entry["mean"] == doc["results"]["100"]["1"]["mean"]


def _synthetic_report(scales, means):
    spec = ExperimentSpec(2, 0.0, scales, replications=2)
    rows = tuple(MomentRow(s, 0, m, 1.0, 0.1, 0.1, m, 1.0, 0.1, 0.1, 2, 0) for s, m in zip(spec.scales, means))
    return MomentReport(spec, rows, {})


def test_scaling_slope_recovers_power_law():
    scales = [2.0 ** j for j in range(10, 19)]
    fit = scaling_slope(_synthetic_report(scales, [3.0 * s ** 0.3 for s in scales]))
    assert math.isclose(fit.slope, 0.3, abs_tol=1e-12)
    assert math.isclose(fit.slope_all, 0.3, abs_tol=1e-12)
    assert abs(fit.curvature) < 1e-10
    assert fit.n_scales == 3


def test_scaling_slope_curvature_sign():
    scales = [2.0 ** j for j in range(10, 19)]
    # local slope 0.2 + 1/log(s) decays towards its asymptote
    fit = scaling_slope(_synthetic_report(scales, [s ** 0.2 * math.log(s) for s in scales]))
    assert fit.slope_all > fit.slope > 0.2
    assert fit.curvature < 0


def test_scaling_slope_needs_scales():
    with pytest.raises(DomainError):
        scaling_slope(_synthetic_report([10, 20, 40, 80], [1, 2, 3, 4]))
    with pytest.raises(DomainError):
        scaling_slope(_synthetic_report([10, 20, 40, 80, 160], [1, 2, 3, 4, 5]))


def test_worst_case_counts_all_points():
    spec = ExperimentSpec(2, -10, [500], "binomial", replications=5, seed=1)
    row = run_moment_experiment(spec).rows[0]
    assert row.mean / 500 >= 0.99


def test_sub_heights_vanish_above_fixed_threshold():
    rep = height_distribution_test(ExperimentSpec(2, -5, [1e3, 1e4], "poisson", replications=4, seed=1))
    assert rep[0].above_fraction > 0.2
    assert rep[1].above_fraction == 0.0
    assert rep[0].height_cap == rep[1].height_cap


def test_super_heights_are_flat():
    """Unit intensity in h: pooled in-window heights on [0, 5] fill equal bins."""
    d, alpha, lam = 2, 1.0, 1e5
    ctx = make_context(d, alpha, lam)
    h = []
    for rep in range(20):
        cloud = sample_cloud(ModelParams(d, alpha, lam), stream(4, rep))
        h.append(rescale_model_cloud(cloud, ctx, ctx.u / 4, 5.0).h)
    counts, _ = np.histogram(np.concatenate(h), bins=5, range=(0, 5))
    expected = counts.sum() / 5
    assert counts.sum() > 1000
    assert np.all(np.abs(counts - expected) <= 4 * math.sqrt(expected))


def test_height_ks_reports_every_scale():
    rep = height_distribution_test(ExperimentSpec(2, 0.3, [1e3, 1e4], "poisson", replications=3, seed=2))
    assert [r.scale for r in rep] == [1e3, 1e4]
    assert all(0 <= r.ks <= 1 and 0 <= r.pvalue <= 1 for r in rep)
    assert rep[0].wide_error  # a few hundred points at most


def test_boundary_profile_agrees_at_extreme_points():
    d, alpha, lam = 2, 0.0, 1e4
    ctx = make_context(d, alpha, lam)
    cloud = sample_cloud(ModelParams(d, alpha, lam), stream(5))
    verts = convex_hull(cloud).vertices
    v, h = stored_point_heights(cloud.points[verts], ctx)
    inner = np.abs(v[:, 0]) < 5
    model = hull_boundary_heights(cloud, ctx, v[inner])
    assert np.max(np.abs(model - h[inner])) < 1e-9 * max(1.0, ctx.u ** 2)


def test_boundary_profile_sub_distances_are_small():
    grid = np.linspace(-3, 3, 31)[:, None]
    rep = boundary_profile_compare(ExperimentSpec(2, -5, [1e4], "poisson", replications=4, seed=6), grid)
    assert len(rep[0].distances) == 4
    # heights are O(h_max) ~ 1e-14 in the SUB regime
    assert max(rep[0].distances) < 1e-6


def test_clt_needs_replications():
    with pytest.raises(DomainError):
        clt_diagnostics(np.arange(100.0))


def test_clt_accepts_gaussian_and_flags_discrete_counts():
    rng = np.random.default_rng(0)
    assert clt_diagnostics(rng.normal(size=2000)).normal
    spec = ExperimentSpec(2, 0, [20], "poisson", replications=600, seed=7)
    report = clt_diagnostics(run_moment_experiment(spec).samples(0, 0))
    assert not report.normal


def test_clt_flags_skewed_sample():
    x = np.random.default_rng(1).exponential(size=1000)
    r = clt_diagnostics(x)
    assert not r.normal and r.skewness > 1


def test_pattern_sub_intensity_is_one():
    spec = ExperimentSpec(2, -5, [1e4], "poisson", replications=20, seed=8)
    rep = extreme_point_pattern_compare(spec, L=4.0)[0]
    # Poisson counts over 20 windows of length 8
    sd = math.sqrt(1.0 / (20 * 8))
    assert abs(rep.model_intensity - 1) < 4 * sd
    assert abs(rep.limit_intensity - 1) < 4 * sd
    assert 0 <= rep.distance <= 1


def test_pattern_spatial_marginal_is_homogeneous():
    spec = ExperimentSpec(2, 0.0, [1e4], "poisson", replications=20, seed=9)
    rep = extreme_point_pattern_compare(spec, L=4.0, bins=4, hbins=1)[0]
    counts = np.array(rep.model_mean_counts) * 20
    expected = counts.mean()
    assert np.all(np.abs(counts - expected) <= 4 * math.sqrt(expected))


def test_dumps_json_precision_and_nonfinite():
    text = dumps_json({"a": 0.1, "b": [1, math.inf], "c": {"d": math.nan, "e": True}})
    assert '"a": 0.10000000000000001' in text
    doc = json.loads(text)
    assert doc["b"] == [1, None] and doc["c"] == {"d": None, "e": True}


def test_records_csv_quoting_and_precision():
    rows = [MomentRow(1e3, 0, 1 / 3, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1, 0)]
    text = records_csv(rows)
    header, line = text.strip().split("\n")
    assert header.startswith("scale,k,mean")
    assert line.split(",")[2] == "0.33333333333333331"
    assert float(line.split(",")[2]) == 1 / 3
