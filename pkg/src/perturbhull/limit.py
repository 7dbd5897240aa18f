"""Limit Poisson processes P^(infty,alpha), parabolic thinning and the festoon.

Heights are inward depths, so a down grain with apex (v0, h0) is
{h <= h0 - |v - v0|^2 / 2}.  Its emptiness is an affine condition in the lifted
coordinate z = h + |v|^2 / 2, hence Ext is the vertex set of the lower hull of
the lifts and the festoon boundary is L(v) - |v|^2 / 2 with L the lower
envelope.  Every point satisfies boundary(v_i) <= h_i, with equality iff it is
extreme.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .geometry import DomainError, exp_map, geodesic_distance, sample_uniform_ball, unit_ball_volume
from .hull import LowerHull, OutOfWindowError, lower_hull_envelope
from .scaling import (
    Regime,
    ScaleContext,
    classify,
    forward_transform,
    nu_limit_cdf,
    nu_support_top,
    sample_nu,
)

# ---------------------------------------------------------------------------
# clouds


@dataclass(frozen=True, eq=False)
class RescaledCloud:
    """Points (v_i, h_i) in B_{d-1}(0, L) x [0, H].

    ``source`` is "limit" for samples of P^(infty,alpha) and "model" for
    forward-transformed model points; ``ctx`` is set for the latter.
    """

    d: int
    v: np.ndarray
    h: np.ndarray
    L: float
    H: float
    alpha: float
    source: str = "limit"
    ctx: ScaleContext | None = None

    def __post_init__(self):
        v = np.asarray(self.v, dtype=float).reshape(-1, self.d - 1)
        h = np.asarray(self.h, dtype=float).reshape(-1)
        if len(v) != len(h):
            raise ValueError("v and h lengths differ")
        if len(v) and (np.any(np.linalg.norm(v, axis=1) > self.L * (1 + 1e-12)) or np.any(h > self.H * (1 + 1e-12))):
            raise DomainError("points outside the window")
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "h", h)

    def __len__(self) -> int:
        return len(self.h)

    @property
    def spatial_volume(self) -> float:
        return unit_ball_volume(self.d - 1) * self.L ** (self.d - 1)

    def with_points(self, v, h) -> "RescaledCloud":
        """Copy with extra points appended (used for insertions)."""
        v = np.asarray(v, dtype=float).reshape(-1, self.d - 1)
        h = np.asarray(h, dtype=float).reshape(-1)
        return RescaledCloud(self.d, np.vstack([self.v, v]), np.concatenate([self.h, h]),
                             self.L, max(self.H, float(h.max(initial=0.0))), self.alpha, self.source, self.ctx)


def _uniform_spatial(m: int, L: float, rng: np.random.Generator, n: int) -> np.ndarray:
    if m == 1:
        return rng.uniform(-L, L, size=(n, 1))
    return sample_uniform_ball(m, L, rng, n)


def limit_window_mass(d: int, alpha, L: float, H: float) -> float:
    """Expected number of points of P^(infty,alpha) in B_{d-1}(0, L) x [0, H]."""
    return unit_ball_volume(d - 1) * L ** (d - 1) * nu_limit_cdf(d, alpha, H)


def sample_limit_process(d: int, alpha, L: float, H: float, rng: np.random.Generator) -> RescaledCloud:
    """Poisson process with intensity dv x nu^(infty,alpha) on B_{d-1}(0, L) x [0, H]."""
    if not (L > 0 and H > 0):
        raise DomainError("L and H must be positive")
    count = int(rng.poisson(limit_window_mass(d, alpha, L, H)))
    v = _uniform_spatial(d - 1, L, rng, count)
    h = sample_nu(d, alpha, H, rng, count) if count else np.empty(0)
    return RescaledCloud(d, v, h, L, H, float(classify(d, alpha).alpha))


def rescale_model_cloud(cloud, ctx: ScaleContext, L: float, H: float = math.inf) -> RescaledCloud:
    """Forward-transform a model cloud and keep the points with |v| <= L, h <= H."""
    pts = np.asarray(cloud.points)
    if len(pts) == 0:
        return RescaledCloud(ctx.d, np.empty((0, ctx.d - 1)), np.empty(0), L, H, ctx.alpha, "model", ctx)
    depth = getattr(cloud, "depth", None)
    v, h = forward_transform(pts, ctx, depth)
    keep = (np.linalg.norm(v, axis=1) <= L) & (h <= H)
    top = H if math.isfinite(H) else float(h[keep].max(initial=0.0))
    return RescaledCloud(ctx.d, v[keep], h[keep], L, top, ctx.alpha, "model", ctx)


# ---------------------------------------------------------------------------
# grains


@dataclass(frozen=True, eq=False)
class ParabolicGrain:
    """Up or down (quasi-)paraboloid with apex (v0, h0).

    With ``ctx`` None the grain is the exact limit paraboloid, otherwise the
    finite-lambda image of a ball (up) or half-space (down).
    """

    v0: np.ndarray
    h0: float
    kind: str = "down"
    ctx: ScaleContext | None = None

    def __post_init__(self):
        if self.kind not in ("up", "down"):
            raise ValueError("kind must be 'up' or 'down'")
        object.__setattr__(self, "v0", np.atleast_1d(np.asarray(self.v0, dtype=float)))


def quasi_grain_contains(grain: ParabolicGrain, v, h) -> np.ndarray:
    """Membership of point(s) (v, h) in ``grain`` (closed)."""
    vv = np.atleast_2d(np.asarray(v, dtype=float))
    hh = np.asarray(h, dtype=float).reshape(-1)
    h0 = grain.h0
    if grain.ctx is None:
        sq = np.sum((vv - grain.v0) ** 2, axis=1) / 2.0
        if grain.kind == "up":
            return hh >= h0 + sq
        return hh <= h0 - sq
    u = grain.ctx.u
    lim = u * math.pi * (1 + 1e-14)
    if np.any(np.linalg.norm(vv, axis=1) > lim) or np.linalg.norm(grain.v0) > lim:
        raise DomainError("spatial coordinate outside u * B(pi)")
    e = geodesic_distance(exp_map(vv / u), exp_map(grain.v0 / u)[None, :])
    c = np.cos(e)
    one_minus = 2.0 * np.sin(e / 2.0) ** 2
    if grain.kind == "up":
        return hh >= u * u * one_minus + h0 * c
    return hh * c <= h0 - u * u * one_minus


# ---------------------------------------------------------------------------
# festoon


def _lift(cloud: RescaledCloud) -> np.ndarray:
    return cloud.h + 0.5 * np.sum(cloud.v ** 2, axis=1)


@dataclass(frozen=True, eq=False)
class FestoonSample:
    """Parabolic thinning of a cloud: Ext, the festoon boundary and the scores."""

    parent: RescaledCloud
    lower: LowerHull = field(repr=False)

    @cached_property
    def ext(self) -> np.ndarray:
        return self.lower.vertices

    @cached_property
    def ext_mask(self) -> np.ndarray:
        mask = np.zeros(len(self.parent), dtype=bool)
        mask[self.ext] = True
        return mask

    def boundary(self, v) -> np.ndarray:
        """Festoon height L(v) - |v|^2/2 at spatial point(s) v."""
        vv = np.atleast_2d(np.asarray(v, dtype=float))
        return self.lower.envelope(vv) - 0.5 * np.sum(vv ** 2, axis=1)

    def scores(self, k: int) -> np.ndarray:
        """xi_k^(infty) of every point: (k+1)^{-1} times its number of k-faces."""
        if not 0 <= k <= self.parent.d - 1:
            raise DomainError(f"k must be in 0..{self.parent.d - 1}")
        return self.lower.incidence(k) / (k + 1.0)

    @cached_property
    def trusted(self) -> np.ndarray:
        """Points whose festoon neighbourhood lies inside the window.

        A down grain through (v_i, h_i) whose apex is at most ``top`` high meets
        the points only within 2 sqrt(2) sqrt(top) of v_i, so a point is trusted
        when that radius fits inside the window.
        """
        cloud = self.parent
        top = float(cloud.h[self.ext].max(initial=0.0))
        reach = 2.0 * math.sqrt(2.0) * math.sqrt(top)
        return np.linalg.norm(cloud.v, axis=1) + reach <= cloud.L


def festoon(cloud: RescaledCloud, engine: str = "qhull") -> FestoonSample:
    if len(cloud) == 0:
        raise DomainError("cloud is empty")
    return FestoonSample(cloud, lower_hull_envelope(cloud.v, _lift(cloud), engine))


def extremal_thinning(cloud: RescaledCloud, engine: str = "qhull") -> np.ndarray:
    """Sorted indices of Ext(cloud)."""
    return festoon(cloud, engine).ext


def festoon_boundary(cloud: RescaledCloud, v, engine: str = "qhull"):
    """Festoon height at v (scalar for a single point)."""
    vv = np.asarray(v, dtype=float)
    out = festoon(cloud, engine).boundary(vv.reshape(-1, cloud.d - 1))
    return float(out[0]) if vv.ndim <= 1 and out.size == 1 else out


def xi_infinity(cloud: RescaledCloud, index: int, k: int, engine: str = "qhull") -> float:
    return float(festoon(cloud, engine).scores(k)[index])


# ---------------------------------------------------------------------------
# running statistics


@dataclass
class RunningStats:
    """Count, mean and centred sum of squares with an associative merge."""

    count: int = 0
    mean: float = 0.0
    m2: float = 0.0

    def push(self, x: float) -> None:
        self.count += 1
        delta = x - self.mean
        self.mean += delta / self.count
        self.m2 += delta * (x - self.mean)

    def extend(self, xs) -> "RunningStats":
        for x in np.asarray(xs, dtype=float).ravel():
            self.push(float(x))
        return self

    def merge(self, other: "RunningStats") -> "RunningStats":
        n = self.count + other.count
        if n == 0:
            return RunningStats()
        delta = other.mean - self.mean
        mean = self.mean + delta * other.count / n
        m2 = self.m2 + other.m2 + delta * delta * self.count * other.count / n
        return RunningStats(n, mean, m2)

    @property
    def variance(self) -> float:
        return self.m2 / (self.count - 1) if self.count > 1 else math.nan

    @property
    def stderr(self) -> float:
        return math.sqrt(self.variance / self.count) if self.count > 1 else math.inf


# ---------------------------------------------------------------------------
# estimators


@dataclass(frozen=True)
class Estimate:
    value: float
    stderr: float
    n: int
    wide_error: bool = False
    window: tuple[float, float] = (math.nan, math.nan)
    detail: dict = field(default_factory=dict)


# fraction of the value above which a standard error counts as wide
_WIDE = 0.1
_MIN_BUDGET = 30


def default_window(d: int, alpha, h: float = 0.0, eps: float = 1e-3) -> tuple[float, float]:
    """(L, H) for estimators at the origin.

    L follows the 2 sqrt(2) sqrt(height) reach of grains; H adds an
    exponential-tail margin log(1/eps) above h.
    """
    rp = classify(d, alpha)
    if rp.regime is Regime.SUB:
        return max(8.0, 4.0 * math.sqrt(2.0)), 1.0
    H = h + math.log(1.0 / eps) + 2.0
    H = min(H, max(nu_support_top(d, alpha), h))
    # sparse height laws need room for several typical spacings
    spacing = nu_limit_cdf(d, alpha, H) ** (-1.0 / (d - 1))
    L = max(8.0, 4.0 * math.sqrt(2.0 * (h + 1.0)), 8.0 * spacing)
    return L, H


def _finish(stats: RunningStats, window, scale: float = 1.0, detail=None) -> Estimate:
    value = float(stats.mean * scale)
    err = float(stats.stderr * abs(scale))
    wide = bool(stats.count < _MIN_BUDGET or (err > _WIDE * abs(value) and err > 1e-3))
    if wide:
        warnings.warn(f"Monte Carlo budget {stats.count} gives a wide error ({value:.4g} +- {err:.2g})",
                      RuntimeWarning, stacklevel=3)
    return Estimate(value, err, stats.count, wide, tuple(float(x) for x in window), detail or {})


def _inserted_scores(cloud: RescaledCloud, ws: np.ndarray, k: int) -> np.ndarray:
    """xi_k of the points ``ws`` after inserting them all into ``cloud``."""
    m = cloud.d - 1
    ws = np.atleast_2d(ws)
    joint = cloud.with_points(ws[:, :m], ws[:, m])
    return festoon(joint).scores(k)[len(cloud):]


def score_at_origin_samples(d: int, alpha, k: int, h: float, mc: int, rng: np.random.Generator,
                            L: float, H: float) -> np.ndarray:
    """Direct insertion samples of xi_k((0, h), P u {(0, h)})."""
    w = np.zeros((1, d))
    w[0, -1] = h
    out = np.empty(mc)
    for i in range(mc):
        cloud = sample_limit_process(d, alpha, L, H, rng)
        out[i] = _inserted_scores(cloud, w, k)[0]
    return out


def boundary_at_origin_samples(d: int, alpha, mc: int, rng: np.random.Generator, L: float, H: float) -> np.ndarray:
    """Festoon heights of P at the origin; xi_0((0,h)) = 1{h <= boundary}."""
    out = np.empty(mc)
    origin = np.zeros((1, d - 1))
    for i in range(mc):
        cloud = sample_limit_process(d, alpha, L, H, rng)
        try:
            if len(cloud) == 0:
                raise OutOfWindowError("empty sample")
            out[i] = festoon(cloud).boundary(origin)[0]
        except OutOfWindowError:
            out[i] = math.inf  # origin outside the sampled hull: nothing buries (0, h)
    return out


def estimate_limit_score_mean(d: int, alpha, k: int, h: float, mc: int, rng: np.random.Generator,
                              L: float | None = None, H: float | None = None,
                              method: str = "auto") -> Estimate:
    """E xi_k^(infty)((0, h), P^(infty,alpha)) with its standard error.

    ``method`` "insert" inserts (0, h) into each sample; "boundary" (k = 0
    only) uses xi_0((0,h)) = 1{h <= festoon height at 0}.  "auto" picks
    "boundary" for k = 0.
    """
    if h < 0:
        raise DomainError("h must be nonnegative")
    if not 0 <= k <= d - 1:
        raise DomainError(f"k must be in 0..{d - 1}")
    dl, dh = default_window(d, alpha, h)
    L = dl if L is None else L
    H = dh if H is None else H
    if method == "auto":
        method = "boundary" if k == 0 else "insert"
    if method == "boundary":
        if k != 0:
            raise DomainError("the boundary method applies to k = 0 only")
        samples = (h <= boundary_at_origin_samples(d, alpha, mc, rng, L, H)).astype(float)
    elif method == "insert":
        samples = score_at_origin_samples(d, alpha, k, h, mc, rng, L, H)
    else:
        raise ValueError(f"unknown method {method!r}")
    return _finish(RunningStats().extend(samples), (L, H), detail={"method": method})


def estimate_limit_constant(d: int, alpha, k: int, mc: int, rng: np.random.Generator,
                            L: float | None = None, H: float | None = None) -> Estimate:
    """int_0^infty E xi_k((0,h), P) dnu(h), the limit of E f_k / (d kappa_d u^{d-1}).

    For k = 0 this is E[nu([0, B])] with B the festoon height at the origin.
    Otherwise h is drawn from nu restricted to [0, H] and the mean score is
    weighted by nu([0, H]).
    """
    dl, dh = default_window(d, alpha)
    L = dl if L is None else L
    H = dh if H is None else H
    if k == 0:
        b = boundary_at_origin_samples(d, alpha, mc, rng, L, H)
        # heights above the window top are not resolved by the sample
        clamped = float(np.mean(b > H))
        vals = nu_limit_cdf(d, alpha, np.minimum(b, H))
        return _finish(RunningStats().extend(vals), (L, H), detail={"method": "boundary", "clamped": clamped})
    weight = nu_limit_cdf(d, alpha, H)
    stats = RunningStats()
    w = np.zeros((1, d))
    for _ in range(mc):
        w[0, -1] = sample_nu(d, alpha, H, rng)
        cloud = sample_limit_process(d, alpha, L, H, rng)
        stats.push(float(_inserted_scores(cloud, w, k)[0]))
    return _finish(stats, (L, H), scale=weight, detail={"method": "insert"})


def _two_point_term(d: int, alpha, k: int, w1: np.ndarray, w2: np.ndarray,
                    rng: np.random.Generator, L: float, H: float) -> float:
    same = np.array_equal(w1, w2)
    cloud = sample_limit_process(d, alpha, L, H, rng)
    if same:
        s = _inserted_scores(cloud, w1, k)
        joint = s[0] * s[0]
    else:
        s = _inserted_scores(cloud, np.vstack([w1, w2]), k)
        joint = s[0] * s[1]
    a = _inserted_scores(sample_limit_process(d, alpha, L, H, rng), w1, k)[0]
    b = _inserted_scores(sample_limit_process(d, alpha, L, H, rng), w2, k)[0]
    return float(joint - a * b)


def estimate_two_point(d: int, alpha, k: int, w1, w2, mc: int, rng: np.random.Generator,
                       L: float | None = None, H: float | None = None) -> Estimate:
    """Correlation c^xi(w1, w2): joint insertion term minus the product of
    single-insertion terms, the latter from independent samples."""
    w1 = np.asarray(w1, dtype=float).reshape(1, d)
    w2 = np.asarray(w2, dtype=float).reshape(1, d)
    top = max(w1[0, -1], w2[0, -1])
    dl, dh = default_window(d, alpha, top)
    reach = max(np.linalg.norm(w1[0, :-1]), np.linalg.norm(w2[0, :-1]))
    L = dl + reach if L is None else L
    H = dh if H is None else H
    stats = RunningStats()
    for _ in range(mc):
        stats.push(_two_point_term(d, alpha, k, w1, w2, rng, L, H))
    return _finish(stats, (L, H))


def estimate_sigma_sq(d: int, alpha, k: int, mc: int, rng: np.random.Generator,
                      R: float | None = None, L: float | None = None, H: float | None = None) -> Estimate:
    """sigma^2(xi_k): int E xi^2 dnu + int int c((0,h),(v1,h1)) dmu(v1,h1) dnu(h).

    Heights are drawn from nu on [0, H] and v1 uniformly in B_{d-1}(0, R),
    where the correlation has decayed; the SUB regime uses nu = delta_0.
    """
    m = d - 1
    sub = classify(d, alpha).regime is Regime.SUB
    dl, dh = default_window(d, alpha)
    R = 0.5 * dl if R is None else R
    L = dl + R if L is None else L
    H = dh if H is None else H
    nu_mass = 1.0 if sub else nu_limit_cdf(d, alpha, H)
    ball = unit_ball_volume(m) * R ** m
    diag = RunningStats()
    cross = RunningStats()
    for _ in range(mc):
        h = 0.0 if sub else sample_nu(d, alpha, H, rng)
        h1 = 0.0 if sub else sample_nu(d, alpha, H, rng)
        w = np.zeros((1, d))
        w[0, -1] = h
        s = _inserted_scores(sample_limit_process(d, alpha, L, H, rng), w, k)[0]
        diag.push(s * s)
        w1 = np.zeros((1, d))
        w1[0, :m] = _uniform_spatial(m, R, rng, 1)[0]
        w1[0, -1] = h1
        cross.push(_two_point_term(d, alpha, k, w, w1, rng, L, H))
    first = float(diag.mean * nu_mass)
    second = float(cross.mean * nu_mass * nu_mass * ball)
    err = math.hypot(diag.stderr * nu_mass, cross.stderr * nu_mass * nu_mass * ball)
    value = first + second
    wide = mc < _MIN_BUDGET or (err > _WIDE * abs(value) and err > 1e-3)
    if wide:
        warnings.warn(f"Monte Carlo budget {mc} gives a wide error ({value:.4g} +- {err:.2g})",
                      RuntimeWarning, stacklevel=2)
    return Estimate(value, err, mc, wide, (float(L), float(H)), {"diagonal": first, "correlation": second})


# ---------------------------------------------------------------------------
# export


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def festoon_points_csv(sample: FestoonSample) -> str:
    cloud = sample.parent
    m = cloud.d - 1
    head = [f"v{j}" for j in range(m)] + ["h", "is_ext"] + [f"xi_{k}" for k in range(cloud.d)]
    scores = np.column_stack([sample.scores(k) for k in range(cloud.d)])
    lines = [",".join(head)]
    for i in range(len(cloud)):
        row = [_fmt(x) for x in cloud.v[i]] + [_fmt(cloud.h[i]), str(int(sample.ext_mask[i]))]
        row += [_fmt(x) for x in scores[i]]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def festoon_envelope_csv(sample: FestoonSample, grid) -> str:
    """Boundary heights on the grid points that lie inside the sampled hull."""
    cloud = sample.parent
    m = cloud.d - 1
    g = np.asarray(grid, dtype=float).reshape(-1, m)
    g = g[sample.lower.contains(g)]
    vals = sample.boundary(g) if len(g) else np.empty(0)
    lines = [",".join([f"v{j}" for j in range(m)] + ["boundary_h"])]
    for p, b in zip(g, vals):
        lines.append(",".join([_fmt(x) for x in p] + [_fmt(b)]))
    return "\n".join(lines) + "\n"


def regular_grid(m: int, L: float, per_axis: int) -> np.ndarray:
    """Points of a regular grid on [-L, L]^m that lie in B_m(0, L)."""
    axis = np.linspace(-L, L, per_axis)
    mesh = np.stack(np.meshgrid(*([axis] * m), indexing="ij"), axis=-1).reshape(-1, m)
    return mesh[np.linalg.norm(mesh, axis=1) <= L]
