"""Replication experiments on the finite models.

Every replication draws its cloud from ``stream(seed, scale index, replication,
tag)``, so results do not depend on the number of worker processes: workers
only change where a replication runs, and results are assembled in replication
order.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from .geometry import DomainError, exp_map, sphere_area
from .hull import DegeneracyError, OutOfWindowError, convex_hull
from .limit import RescaledCloud, festoon, rescale_model_cloud, sample_limit_process
from .models import ModelParams, sample_cloud, stream
from .scaling import Regime, forward_transform, make_context, nu_limit_cdf, nu_support_top

# ---------------------------------------------------------------------------
# specification


@dataclass(frozen=True)
class ExperimentSpec:
    """A ladder of scales for one (d, alpha, model) with R replications each."""

    d: int
    alpha: float
    scales: tuple[float, ...]
    kind: str = "poisson"
    ks: tuple[int, ...] = (0,)
    replications: int = 10
    seed: int = 0
    window: float | None = None  # spatial radius L; None means u/4
    height_cap: float | None = None
    engine: str = "qhull"

    def __post_init__(self):
        object.__setattr__(self, "scales", tuple(float(s) for s in self.scales))
        object.__setattr__(self, "ks", tuple(int(k) for k in self.ks))
        if not self.scales:
            raise DomainError("at least one scale is required")
        if any(b <= a for a, b in zip(self.scales, self.scales[1:])):
            raise DomainError("scales must be strictly increasing")
        if self.replications < 2:
            raise DomainError("at least 2 replications are needed for variances")
        if any(not 0 <= k <= self.d - 1 for k in self.ks):
            raise DomainError(f"k must lie in 0..{self.d - 1}")
        if self.kind == "binomial" and any(s != int(s) for s in self.scales):
            raise DomainError("binomial scales must be integers")
        ModelParams(self.d, self.alpha, self.scales[0], self.kind, self.seed)

    def params(self, scale: float) -> ModelParams:
        return ModelParams(self.d, self.alpha, scale, self.kind, self.seed)

    def rng(self, scale_index: int, rep: int, tag: str) -> np.random.Generator:
        return stream(self.seed, scale_index, rep, tag)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["scales"] = list(self.scales)
        out["ks"] = list(self.ks)
        return out


def _draw(spec: ExperimentSpec, i: int, rep: int):
    return sample_cloud(spec.params(spec.scales[i]), spec.rng(i, rep, "cloud"))


def _run_jobs(fn, jobs: list, workers: int) -> list:
    if workers <= 1 or len(jobs) < 2:
        return [fn(j) for j in jobs]
    chunk = max(1, len(jobs) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs, chunksize=chunk))


def default_workers() -> int:
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)


# ---------------------------------------------------------------------------
# moments of f_k


def _face_job(job) -> np.ndarray | None:
    spec, i, rep = job
    cloud = _draw(spec, i, rep)
    try:
        hull = convex_hull(cloud, spec.engine)
    except DegeneracyError:
        return None
    return np.asarray(hull.f_vector, dtype=float)


def rescaling_factor(d: int, alpha, scale: float) -> float:
    """d kappa_d u^{d-1}, the normaliser of E f_k and Var f_k."""
    return sphere_area(d) * make_context(d, alpha, scale).u ** (d - 1)


@dataclass(frozen=True)
class MomentRow:
    scale: float
    k: int
    mean: float
    variance: float
    mean_stderr: float
    variance_stderr: float
    rescaled_mean: float
    rescaled_variance: float
    rescaled_mean_stderr: float
    rescaled_variance_stderr: float
    ok: int
    failed: int


@dataclass(frozen=True, eq=False)
class MomentReport:
    """Moments of f_k per (scale, k), plus the raw face counts."""

    spec: ExperimentSpec
    rows: tuple[MomentRow, ...]
    counts: dict = field(repr=False)  # scale index -> (ok, d) array of f-vectors

    def row(self, scale: float, k: int) -> MomentRow:
        for r in self.rows:
            if r.scale == float(scale) and r.k == k:
                return r
        raise KeyError((scale, k))

    def samples(self, scale_index: int, k: int) -> np.ndarray:
        return self.counts[scale_index][:, k]

    @property
    def failure_rate(self) -> float:
        failed = sum(r.failed for r in self.rows if r.k == self.spec.ks[0])
        return failed / (len(self.spec.scales) * self.spec.replications)

    def to_dict(self) -> dict:
        nested: dict = {}
        for r in self.rows:
            entry = {key: val for key, val in asdict(r).items() if key not in ("scale", "k")}
            nested.setdefault(format(r.scale, ".17g"), {})[str(r.k)] = entry
        return {"spec": self.spec.to_dict(), "results": nested}

    def to_csv(self) -> str:
        names = list(MomentRow.__dataclass_fields__)
        lines = [",".join(names)]
        for r in self.rows:
            lines.append(",".join(_csv_value(getattr(r, n)) for n in names))
        return "\n".join(lines) + "\n"


def _variance_stderr(x: np.ndarray) -> float:
    n = len(x)
    if n < 4:
        return math.inf
    c = x - x.mean()
    m2 = np.mean(c ** 2)
    m4 = np.mean(c ** 4)
    return float(math.sqrt(max(m4 - m2 * m2 * (n - 3) / (n - 1), 0.0) / n))


def run_moment_experiment(spec: ExperimentSpec, workers: int = 1) -> MomentReport:
    """Face-count moments at every scale of ``spec``.

    Replications whose hull is degenerate are counted as failed and excluded.
    """
    jobs = [(spec, i, rep) for i in range(len(spec.scales)) for rep in range(spec.replications)]
    results = _run_jobs(_face_job, jobs, workers)
    rows = []
    counts = {}
    for i, scale in enumerate(spec.scales):
        chunk = results[i * spec.replications:(i + 1) * spec.replications]
        good = [r for r in chunk if r is not None]
        failed = len(chunk) - len(good)
        arr = np.array(good).reshape(-1, spec.d)
        counts[i] = arr
        norm = rescaling_factor(spec.d, spec.alpha, scale)
        for k in spec.ks:
            x = arr[:, k]
            n = len(x)
            mean = float(x.mean()) if n else math.nan
            var = float(x.var(ddof=1)) if n > 1 else math.nan
            se = math.sqrt(var / n) if n > 1 else math.inf
            vse = _variance_stderr(x)
            rows.append(MomentRow(scale, k, mean, var, se, vse, mean / norm, var / norm, se / norm, vse / norm,
                                  n, failed))
    return MomentReport(spec, tuple(rows), counts)


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    stderr: float
    intercept: float
    n_scales: int
    slope_all: float
    stderr_all: float
    curvature: float


def _ols(x: np.ndarray, y: np.ndarray):
    fit = stats.linregress(x, y)
    return fit.slope, fit.stderr, fit.intercept


def scaling_slope(report: MomentReport, k: int = 0, headline: int = 3) -> SlopeFit:
    """Least-squares slope of log mean f_k against log scale.

    ``slope``/``stderr`` use the ``headline`` largest scales; ``slope_all`` all
    of them, and ``curvature`` is the quadratic coefficient of a fit to all
    scales (a transient diagnostic).
    """
    scales = np.array(report.spec.scales)
    if len(scales) < 5 or scales[-1] / scales[0] < 100:
        raise DomainError("need at least 5 scales spanning 2 decades")
    means = np.array([report.row(s, k).mean for s in scales])
    x, y = np.log(scales), np.log(means)
    s_all, e_all, _ = _ols(x, y)
    s_top, e_top, icpt = _ols(x[-headline:], y[-headline:])
    curv = float(np.polyfit(x, y, 2)[0])
    return SlopeFit(float(s_top), float(e_top), float(icpt), headline, float(s_all), float(e_all), curv)


# ---------------------------------------------------------------------------
# Prop 1.1: height law in a window


def _window_radius(spec: ExperimentSpec, ctx) -> float:
    return ctx.u / 4.0 if spec.window is None else spec.window


def _height_job(job) -> np.ndarray:
    spec, i, rep, H = job
    ctx = make_context(spec.d, spec.alpha, spec.scales[i])
    cloud = _draw(spec, i, rep)
    return rescale_model_cloud(cloud, ctx, _window_radius(spec, ctx), H).h


@dataclass(frozen=True)
class HeightTest:
    scale: float
    ks: float
    pvalue: float
    n_points: int
    height_cap: float
    wide_error: bool
    above_fraction: float = math.nan  # SUB only: share of heights above the fixed threshold


def limit_valid_height(d: int, alpha, scale: float) -> float:
    """Height below which the finite-scale height law is close to its limit.

    The cap function s1 is evaluated at g ~ lambda^alpha h / u^2 and the limit
    law uses its small-argument form (POS/NEG) or saturation (SUPER), so the
    approximation holds for h well below 2 u^2 / lambda^alpha (POS),
    2 u^2 lambda^alpha (NEG) or u^2 (otherwise).
    """
    ctx = make_context(d, alpha, scale)
    if ctx.regime is Regime.POS:
        return 2.0 * ctx.u ** 2 / ctx.lam_alpha
    if ctx.regime is Regime.NEG:
        return 2.0 * ctx.u ** 2 * ctx.lam_alpha
    return ctx.u ** 2


def default_height_cap(d: int, alpha, scale: float) -> float:
    """Height cap for the KS comparison at the smallest scale of a ladder.

    POS/NEG use the whole valid height, other regimes a quarter of u^2 (where
    the (1 - h/u^2)^{d-1} factor is still mild); never above the top of the
    support of nu.  Caps this wide make the comparison sensitive to the approach
    to the limit instead of being dominated by sampling noise.
    """
    valid = limit_valid_height(d, alpha, scale)
    if make_context(d, alpha, scale).regime not in (Regime.POS, Regime.NEG):
        valid /= 4.0
    return min(valid, nu_support_top(d, alpha))


def height_distribution_test(spec: ExperimentSpec, workers: int = 1, min_points: int = 200) -> list[HeightTest]:
    """KS distance between pooled in-window heights and nu normalised on [0, H].

    In the SUB regime the limit is delta_0 and the finite heights fill
    [0, h_max] with h_max -> 0, so the statistic is the fraction of in-window
    heights above the fixed threshold ``height_cap`` (default: half of h_max at
    the smallest scale), which vanishes once h_max drops below it.
    """
    ctx0 = make_context(spec.d, spec.alpha, spec.scales[0])
    sub = ctx0.regime is Regime.SUB
    if sub:
        H = spec.height_cap or ctx0.h_max / 2.0
    else:
        H = spec.height_cap or default_height_cap(spec.d, spec.alpha, spec.scales[0])
    out = []
    for i, scale in enumerate(spec.scales):
        jobs = [(spec, i, rep, math.inf if sub else H) for rep in range(spec.replications)]
        h = np.concatenate(_run_jobs(_height_job, jobs, workers))
        wide = len(h) < min_points
        if sub:
            frac = float(np.mean(h > H)) if len(h) else math.nan
            out.append(HeightTest(scale, frac, math.nan, len(h), H, wide, frac))
            continue
        total = nu_limit_cdf(spec.d, spec.alpha, H)
        res = stats.kstest(h, lambda t: nu_limit_cdf(spec.d, spec.alpha, np.clip(t, 0, H)) / total)
        out.append(HeightTest(scale, float(res.statistic), float(res.pvalue), len(h), H, wide))
    return out


# ---------------------------------------------------------------------------
# Theorem 1.4: hull boundary against the festoon


def _exit_facets(hull, directions: np.ndarray) -> np.ndarray:
    """Index of the facet through which each ray from the origin leaves."""
    normals = hull.equations[:, :-1]
    offsets = hull.equations[:, -1]
    proj = directions @ normals.T
    with np.errstate(divide="ignore"):
        t = np.where(proj > 0, -offsets[None, :] / proj, np.inf)
    if not np.all(np.isfinite(t.min(axis=1))):
        raise RuntimeError("ray missed the hull")
    return t.argmin(axis=1)


def hull_boundary_heights(cloud, ctx, grid) -> np.ndarray:
    """Rescaled height of the hull boundary above each spatial grid point.

    The ray from 0 through exp(v/u) leaves the hull at radius r and the height
    is u^2 (1 - r / (1 + lambda^alpha)).  In d = 2 the exit radius is computed
    in extended precision from the stored coordinates, since u^2 (1 - r)
    amplifies float64 rounding by u^2.
    """
    pts = np.asarray(cloud.points)
    hull = convex_hull(cloud)
    e = exp_map(np.atleast_2d(np.asarray(grid, dtype=float)) / ctx.u)
    idx = _exit_facets(hull, e)
    R = np.longdouble(1.0) + np.longdouble(ctx.lam_alpha)
    if ctx.d == 2:
        a = pts[hull.facets[idx, 0]].astype(np.longdouble)
        b = pts[hull.facets[idx, 1]].astype(np.longdouble)
        n = np.stack([b[:, 1] - a[:, 1], a[:, 0] - b[:, 0]], axis=1)
        n *= np.sign(np.sum(n * hull.equations[idx, :2], axis=1))[:, None]
        ee = e.astype(np.longdouble)
        r = np.sum(n * a, axis=1) / np.sum(n * ee, axis=1)
    else:
        r = -hull.equations[idx, -1] / np.sum(e * hull.equations[idx, :-1], axis=1)
    return np.asarray(ctx.u * ctx.u * (R - r) / R, dtype=float)


def stored_point_heights(points, ctx) -> tuple[np.ndarray, np.ndarray]:
    """(v, h) of stored float64 points, with |x| taken in extended precision.

    Unlike the sampler's exact depth this describes the cloud as stored, which
    is the cloud whose hull is computed.
    """
    x = np.asarray(points, dtype=float)
    r = np.sqrt(np.sum(x.astype(np.longdouble) ** 2, axis=1))
    R = np.longdouble(1.0) + np.longdouble(ctx.lam_alpha)
    h = np.asarray(ctx.u * ctx.u * (R - r) / R, dtype=float)
    v, _ = forward_transform(x, ctx, depth=np.zeros(len(x)))
    return v, h


def _profile_job(job) -> float:
    spec, i, rep, grid, L = job
    ctx = make_context(spec.d, spec.alpha, spec.scales[i])
    cloud = _draw(spec, i, rep)
    model = hull_boundary_heights(cloud, ctx, grid)
    v, h = stored_point_heights(cloud.points, ctx)
    rad = np.linalg.norm(v, axis=1)
    # widen the point window until the festoon is defined over the whole grid
    reach = 2.0 * L
    while True:
        keep = rad <= reach
        local = RescaledCloud(spec.d, v[keep], h[keep], reach, float(h[keep].max(initial=1.0)),
                              ctx.alpha, "model", ctx)
        try:
            limit = festoon(local).boundary(grid)
            break
        except (OutOfWindowError, DomainError):
            if reach >= ctx.u * math.pi:
                return math.inf
            reach = min(2.0 * reach, ctx.u * math.pi)
    return float(np.max(np.abs(model - limit)))


@dataclass(frozen=True)
class ProfileReport:
    scale: float
    distances: tuple[float, ...]
    median: float


def boundary_profile_compare(spec: ExperimentSpec, grid, workers: int = 1) -> list[ProfileReport]:
    """Sup-grid distance between the rescaled hull boundary and the festoon of
    the transformed points, per replication and scale."""
    g = np.asarray(grid, dtype=float).reshape(-1, spec.d - 1)
    L = float(np.max(np.linalg.norm(g, axis=1)))
    out = []
    for i, scale in enumerate(spec.scales):
        jobs = [(spec, i, rep, g, L) for rep in range(spec.replications)]
        dist = _run_jobs(_profile_job, jobs, workers)
        out.append(ProfileReport(scale, tuple(dist), float(np.median(dist))))
    return out


# ---------------------------------------------------------------------------
# Theorem 1.6: normality of f_k


@dataclass(frozen=True)
class NormalityReport:
    n: int
    ks: float
    pvalue: float
    skewness: float
    skewness_stderr: float
    excess_kurtosis: float
    kurtosis_stderr: float
    normal: bool


def clt_diagnostics(samples, p_min: float = 0.01, max_skew: float = 0.2, max_kurt: float = 0.5,
                    jitter_seed: int | None = 0) -> NormalityReport:
    """KS test of the standardised sample against N(0,1), plus skewness and
    excess kurtosis; ``normal`` is False if any of the three checks fails.

    Integer-valued samples (face counts) get a seeded uniform(-1/2, 1/2)
    continuity jitter before the KS test, which otherwise measures the lattice
    steps; pass ``jitter_seed=None`` to disable it.
    """
    x = np.asarray(samples, dtype=float)
    n = len(x)
    if n < 500:
        raise DomainError(f"need at least 500 replications, got {n}")
    sd = x.std(ddof=1)
    if sd == 0:
        return NormalityReport(n, 1.0, 0.0, math.nan, math.nan, math.nan, math.nan, False)
    y = x
    if jitter_seed is not None and np.all(x == np.round(x)):
        y = x + np.random.default_rng(jitter_seed).uniform(-0.5, 0.5, n)
    z = (y - y.mean()) / y.std(ddof=1)
    res = stats.kstest(z, "norm")
    skew = float(stats.skew(x))
    kurt = float(stats.kurtosis(x))
    se_s = math.sqrt(6.0 * n * (n - 1) / ((n - 2) * (n + 1) * (n + 3)))
    se_k = 2.0 * se_s * math.sqrt((n * n - 1) / ((n - 3) * (n + 5)))
    ok = res.pvalue > p_min and abs(skew) <= max_skew and abs(kurt) <= max_kurt
    return NormalityReport(n, float(res.statistic), float(res.pvalue), skew, se_s, kurt, se_k, bool(ok))


# ---------------------------------------------------------------------------
# Theorem 1.3: extreme points in boxes


def _box_counts(v: np.ndarray, h: np.ndarray, L: float, H: float, bins: int, hbins: int) -> np.ndarray:
    ranges = [(-L, L)] * v.shape[1] + [(0.0, H)]
    sample = np.column_stack([v, h]) if len(h) else np.empty((0, v.shape[1] + 1))
    counts, _ = np.histogramdd(sample, bins=[bins] * v.shape[1] + [hbins], range=ranges)
    return counts.ravel()


def _pattern_job(job) -> np.ndarray:
    spec, i, rep, L, H, bins, hbins = job
    ctx = make_context(spec.d, spec.alpha, spec.scales[i])
    cloud = _draw(spec, i, rep)
    verts = convex_hull(cloud, spec.engine).vertices
    v, h = forward_transform(cloud.points[verts], ctx, cloud.depth[verts])
    keep = np.all(np.abs(v) <= L, axis=1) & (h <= H)
    return _box_counts(v[keep], h[keep], L, H, bins, hbins)


def _limit_pattern_job(job) -> np.ndarray:
    spec, rep, L, H, bins, hbins, margin = job
    rng = stream(spec.seed, len(spec.scales), rep, "limit")
    outer = L * math.sqrt(spec.d - 1) + margin
    cloud = sample_limit_process(spec.d, spec.alpha, outer, max(H, _limit_height(spec)), rng)
    if len(cloud) == 0:
        return _box_counts(np.empty((0, spec.d - 1)), np.empty(0), L, H, bins, hbins)
    ext = festoon(cloud).ext
    v, h = cloud.v[ext], cloud.h[ext]
    keep = np.all(np.abs(v) <= L, axis=1) & (h <= H)
    return _box_counts(v[keep], h[keep], L, H, bins, hbins)


def _limit_height(spec: ExperimentSpec) -> float:
    return min(12.0, nu_support_top(spec.d, spec.alpha)) if make_context(spec.d, spec.alpha, spec.scales[0]).regime is not Regime.SUB else 1.0


@dataclass(frozen=True)
class PatternReport:
    scale: float
    distance: float
    model_intensity: float
    limit_intensity: float
    model_mean_counts: tuple[float, ...]
    limit_mean_counts: tuple[float, ...]


def extreme_point_pattern_compare(spec: ExperimentSpec, L: float = 4.0, H: float | None = None,
                                  bins: int = 4, hbins: int = 4, workers: int = 1) -> list[PatternReport]:
    """Mean box counts of transformed extreme points vs Ext of limit samples.

    Boxes split [-L, L]^{d-1} x [0, H]; the distance is sum |a - b| / sum (a + b)
    over boxes, so 0 means identical mean counts.
    """
    sub = make_context(spec.d, spec.alpha, spec.scales[0]).regime is Regime.SUB
    if H is None:
        H = 1.0 if sub else min(4.0, nu_support_top(spec.d, spec.alpha))
    margin = 4.0 * math.sqrt(2.0 * (H + 1.0))
    ljobs = [(spec, rep, L, H, bins, hbins, margin) for rep in range(spec.replications)]
    limit = np.mean(_run_jobs(_limit_pattern_job, ljobs, workers), axis=0)
    vol = (2.0 * L) ** (spec.d - 1)
    out = []
    for i, scale in enumerate(spec.scales):
        jobs = [(spec, i, rep, L, H, bins, hbins) for rep in range(spec.replications)]
        model = np.mean(_run_jobs(_pattern_job, jobs, workers), axis=0)
        denom = float(np.sum(model + limit))
        dist = float(np.sum(np.abs(model - limit)) / denom) if denom > 0 else 0.0
        out.append(PatternReport(scale, dist, float(model.sum() / vol), float(limit.sum() / vol),
                                 tuple(map(float, model)), tuple(map(float, limit))))
    return out


# ---------------------------------------------------------------------------
# serialisation


def _csv_value(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    s = str(x)
    if any(c in s for c in ',"\n'):
        s = '"' + s.replace('"', '""') + '"'
    return s


def _json_value(x, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(x, dict):
        if not x:
            return "{}"
        items = [f'{pad}{_json_str(str(k))}: {_json_value(v, indent, level + 1)}' for k, v in x.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(x, (list, tuple, np.ndarray)):
        if len(x) == 0:
            return "[]"
        return "[" + ", ".join(_json_value(v, indent, level + 1) for v in x) + "]"
    if x is None:
        return "null"
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if not math.isfinite(x):
            return "null"
        return format(x, ".17g")
    return _json_str(str(x))


def _json_str(s: str) -> str:
    return json.dumps(s)


def dumps_json(obj, indent: int = 2) -> str:
    """JSON with every float written at 17 significant digits (NaN/inf as null)."""
    return _json_value(obj, indent, 0) + "\n"


def records_csv(records) -> str:
    """Flat CSV of a list of dataclass records (tuple fields are skipped)."""
    records = list(records)
    if not records:
        return ""
    names = [n for n, v in asdict(records[0]).items() if not isinstance(v, (tuple, list))]
    lines = [",".join(names)]
    for r in records:
        d = asdict(r)
        lines.append(",".join(_csv_value(d[n]) for n in names))
    return "\n".join(lines) + "\n"
