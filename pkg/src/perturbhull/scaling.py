"""Regime-dependent scaling machinery for perturbed sphere samples.

Covers regime classification, the exponent beta(alpha), the scale factor
u_{lambda,alpha}, the parabolic rescaling x -> (v, h) and its inverse, the cap
functions s1/s2, the clamped cap parameter g, the height density phi of the
rescaled intensity, the full density mu, and the five limit height laws nu.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy import integrate, special

from .geometry import DomainError, exp_map, inv_exp_map, unit_ball_volume

# float alphas this close to a regime boundary snap onto it
BOUNDARY_SNAP = 1e-12


class Regime(enum.Enum):
    SUPER = "super"      # alpha > 2/(d+1)
    CRIT_HI = "crit_hi"  # alpha = 2/(d+1)
    POS = "pos"          # 0 < alpha < 2/(d+1)
    ZERO = "zero"        # alpha = 0
    NEG = "neg"          # -2/(d-1) < alpha < 0
    CRIT_LO = "crit_lo"  # alpha = -2/(d-1)
    SUB = "sub"          # alpha < -2/(d-1)


POWER_LAW_REGIMES = (Regime.POS, Regime.ZERO, Regime.NEG)


def parse_alpha(text) -> Fraction | float:
    """Parse ``"2/3"``-style rationals exactly; anything else becomes a float."""
    if isinstance(text, (Fraction, int)):
        return Fraction(text)
    if isinstance(text, float):
        return text
    s = str(text).strip()
    try:
        return Fraction(s)
    except ValueError:
        return float(s)


def critical_alphas(d: int) -> tuple[Fraction, Fraction]:
    """(-2/(d-1), 2/(d+1)), the two phase-transition values."""
    return Fraction(-2, d - 1), Fraction(2, d + 1)


@dataclass(frozen=True)
class RegimeParams:
    d: int
    alpha: float
    regime: Regime
    beta: float


def _bin(d: int, alpha) -> Regime:
    lo, hi = critical_alphas(d)
    if isinstance(alpha, Fraction):
        a = alpha
        eq = lambda x, y: x == y  # noqa: E731
    else:
        a = float(alpha)
        eq = lambda x, y: abs(x - float(y)) <= BOUNDARY_SNAP  # noqa: E731
    if eq(a, hi):
        return Regime.CRIT_HI
    if eq(a, 0):
        return Regime.ZERO
    if eq(a, lo):
        return Regime.CRIT_LO
    if a > hi:
        return Regime.SUPER
    if a > 0:
        return Regime.POS
    if a > lo:
        return Regime.NEG
    return Regime.SUB


def beta_of(d: int, alpha: float, regime: Regime) -> float:
    a = float(alpha)
    if regime is Regime.SUPER:
        return 1.0 / (d + 1)
    if regime in (Regime.CRIT_HI, Regime.POS):
        return (2.0 + a * (d - 1)) / (4.0 * d)
    if regime is Regime.ZERO:
        return 1.0 / (2 * d)
    if regime is Regime.NEG:
        return (2.0 - a * (d + 1)) / (4.0 * d)
    return 1.0 / (d - 1)


def classify(d: int, alpha) -> RegimeParams:
    """Regime of alpha in dimension d together with beta(alpha)."""
    if d < 2:
        raise DomainError(f"dimension must be >= 2, got {d}")
    alpha = parse_alpha(alpha)
    regime = _bin(d, alpha)
    lo, hi = critical_alphas(d)
    # snapped boundary values use the exact boundary alpha
    a = {Regime.CRIT_HI: float(hi), Regime.ZERO: 0.0, Regime.CRIT_LO: float(lo)}.get(regime, float(alpha))
    return RegimeParams(d, a, regime, beta_of(d, a, regime))


def _middle_constant(d: int) -> float:
    k = unit_ball_volume
    return (2.0 ** ((d - 1) / 2.0) * k(d - 1) / (d * k(d) ** 2)) ** (1.0 / (2 * d))


def log_scale_factor_u(d: int, alpha, scale: float) -> float:
    """log u_{lambda,alpha}; u = prefactor * scale**beta."""
    rp = classify(d, alpha)
    if scale < 1:
        raise DomainError(f"scale must be >= 1, got {scale}")
    kd = unit_ball_volume(d)
    if rp.regime in (Regime.SUPER, Regime.CRIT_HI, Regime.CRIT_LO):
        pref = -math.log(kd) / (d + 1)
    elif rp.regime in (Regime.POS, Regime.NEG):
        pref = math.log(_middle_constant(d))
    elif rp.regime is Regime.ZERO:
        pref = 0.5 * math.log(2.0) + math.log(_middle_constant(d))
    else:
        pref = -math.log(d * kd) / (d - 1)
    return pref + rp.beta * math.log(scale)


def scale_factor_u(d: int, alpha, scale: float) -> float:
    return math.exp(log_scale_factor_u(d, alpha, scale))


@dataclass(frozen=True)
class ScaleContext:
    """Regime parameters together with a scale (lambda or n) and derived u, h_max."""

    d: int
    alpha: float
    regime: Regime
    beta: float
    scale: float
    u: float
    h_max: float
    lam_alpha: float

    @property
    def log_scale(self) -> float:
        return math.log(self.scale)

    @property
    def outer_radius(self) -> float:
        return 1.0 + self.lam_alpha


def make_context(d: int, alpha, scale: float) -> ScaleContext:
    rp = classify(d, alpha)
    u = scale_factor_u(d, alpha, scale)
    lam_alpha = math.exp(rp.alpha * math.log(scale))
    if rp.regime is Regime.SUB:
        h_max = 2.0 * lam_alpha * u * u / (1.0 + lam_alpha)
    else:
        h_max = u * u
    return ScaleContext(d, rp.alpha, rp.regime, rp.beta, float(scale), u, h_max, lam_alpha)


def h_max_of(d: int, alpha, scale: float) -> float:
    return make_context(d, alpha, scale).h_max


# ---------------------------------------------------------------------------
# rescaling transform


def forward_transform(x, ctx: ScaleContext, depth=None):
    """Map points x of B_d(0, 1 + lambda^alpha) to (v, h).

    ``depth`` optionally gives (1 + lambda^alpha) - |x| computed without
    cancellation (the model samplers provide it); it fixes h where the
    perturbation is below float resolution.
    Returns (v, h) with shapes (n, d-1) and (n,).
    """
    xx = np.atleast_2d(np.asarray(x, dtype=float))
    r = np.linalg.norm(xx, axis=1)
    if np.any(r <= 0):
        raise DomainError("forward transform undefined at the origin")
    R = ctx.outer_radius
    if depth is None:
        if np.any(r > R * (1 + 1e-12)):
            raise DomainError("point outside B_d(0, 1 + lambda^alpha)")
        depth = R - r
    else:
        depth = np.asarray(depth, dtype=float).reshape(-1)
    v = ctx.u * inv_exp_map(xx / r[:, None])
    h = ctx.u * ctx.u * depth / R
    return v, h


def inverse_transform(v, h, ctx: ScaleContext) -> np.ndarray:
    vv = np.atleast_2d(np.asarray(v, dtype=float))
    hh = np.asarray(h, dtype=float).reshape(-1)
    if np.any(np.linalg.norm(vv, axis=1) > ctx.u * math.pi * (1 + 1e-14)):
        raise DomainError("spatial coordinate outside u * B(pi)")
    if np.any(hh < 0) or np.any(hh > ctx.u * ctx.u):
        raise DomainError("height outside [0, u^2]")
    r = ctx.outer_radius * (1.0 - hh / (ctx.u * ctx.u))
    return exp_map(vv / ctx.u) * r[:, None]


# ---------------------------------------------------------------------------
# caps


def _cap_angle(h: np.ndarray) -> np.ndarray:
    # arccos(1 - h) without cancellation for tiny h
    return 2.0 * np.arcsin(np.sqrt(np.clip(h, 0.0, 2.0) / 2.0))


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(32)
_GL_NODES = 0.5 * (_GL_NODES + 1.0)
_GL_WEIGHTS = 0.5 * _GL_WEIGHTS


def sin_power_integral(theta, n: int) -> np.ndarray:
    """int_0^theta sin^n(t) dt for theta in [0, pi].

    Evaluates theta^(n+1) * int_0^1 (sin(theta x)/theta)^n dx with a 32-node
    Gauss-Legendre rule; the integrand is entire in x, so the rule is exact to
    rounding for n <= 8, and the scaling keeps full relative precision as
    theta -> 0.
    """
    th = np.atleast_1d(np.asarray(theta, dtype=float))
    if n == 0:
        return th.copy()
    x = _GL_NODES[None, :]
    vals = (x * np.sinc(th[:, None] * x / math.pi)) ** n
    return th ** (n + 1) * (vals @ _GL_WEIGHTS)


def cap_s1(d: int, h):
    """Normalised surface area of the cap of S^{d-1} of height h (0 below 0, 1 above 2)."""
    hh = np.asarray(h, dtype=float)
    scalar = hh.ndim == 0
    hh = np.atleast_1d(hh)
    out = np.empty_like(hh)
    lo = hh <= 0
    hi = hh >= 2
    mid = ~(lo | hi)
    out[lo] = 0.0
    out[hi] = 1.0
    if np.any(mid):
        theta = _cap_angle(hh[mid])
        if d == 2:
            out[mid] = theta / math.pi
        elif d == 3:
            out[mid] = hh[mid] / 2.0
        else:
            c = (d - 1) * unit_ball_volume(d - 1) / (d * unit_ball_volume(d))
            out[mid] = np.minimum(c * sin_power_integral(theta, d - 2), 1.0)
    return float(out[0]) if scalar else out


def cap_s2(d: int, h):
    """Normalised (d-2)-area of the slice of B_d(u0, 1) at height h."""
    hh = np.asarray(h, dtype=float)
    c = unit_ball_volume(d - 1) / (d * unit_ball_volume(d))
    inside = (hh >= 0) & (hh <= 2)
    base = np.where(inside, hh * (2.0 - hh), 0.0)
    out = np.where(inside, c * base ** ((d - 1) / 2.0), 0.0)
    return float(out) if out.ndim == 0 else out


def cap_s1_integral(d: int, y):
    """int_0^y s1: equals (y - 1) s1(y) + s2(y) on [0, 2], 1 + (y - 2) beyond."""
    yy = np.asarray(y, dtype=float)
    out = np.where(yy <= 0, 0.0, np.where(yy >= 2, yy - 1.0, (yy - 1.0) * cap_s1(d, np.clip(yy, 0, 2)) + cap_s2(d, yy)))
    return float(out) if out.ndim == 0 else out


def cap_s2_integral(d: int, y):
    """int_0^y s2, via the regularised incomplete beta function."""
    yy = np.clip(np.asarray(y, dtype=float), 0.0, 2.0)
    a = (d + 1) / 2.0
    c = unit_ball_volume(d - 1) / (d * unit_ball_volume(d))
    out = c * 2.0 ** d * special.beta(a, a) * special.betainc(a, a, yy / 2.0)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# finite-lambda densities


def _g_unchecked(ctx: ScaleContext, h: np.ndarray) -> np.ndarray:
    t = h / (ctx.u * ctx.u)
    num = ctx.lam_alpha * t - 0.5 * (1.0 + ctx.lam_alpha) * t * t
    return np.clip(num / (1.0 - t), 0.0, 2.0)


def g_clamp(ctx: ScaleContext, h):
    """Clamped cap height g_{lambda,alpha}(h) in [0, 2]; h must lie in [0, u^2)."""
    hh = np.asarray(h, dtype=float)
    if np.any(hh < 0) or np.any(hh >= ctx.u * ctx.u):
        raise DomainError("g is defined for h in [0, u^2)")
    out = _g_unchecked(ctx, hh)
    return float(out) if out.ndim == 0 else out


def log_phi_prefactor(ctx: ScaleContext) -> float:
    d = ctx.d
    return (
        ctx.log_scale
        + d * math.log1p(ctx.lam_alpha)
        - (d + 1) * math.log(ctx.u)
        - math.log(unit_ball_volume(d))
        - d * ctx.alpha * ctx.log_scale
    )


def phi_density(ctx: ScaleContext, h):
    """Height density phi^(lambda,alpha)(h) of the rescaled intensity on [0, h_max]."""
    hh = np.asarray(h, dtype=float)
    if np.any(hh < 0) or np.any(hh > ctx.h_max * (1 + 1e-12)):
        raise DomainError("phi is defined for h in [0, h_max]")
    scalar = hh.ndim == 0
    hh = np.atleast_1d(hh)
    t = hh / (ctx.u * ctx.u)
    out = np.zeros_like(hh)
    ok = t < 1.0
    g = _g_unchecked(ctx, hh[ok])
    s1 = cap_s1(ctx.d, g)
    pos = s1 > 0
    vals = np.zeros_like(g)
    vals[pos] = np.exp(log_phi_prefactor(ctx) + np.log(s1[pos]) + (ctx.d - 1) * np.log1p(-t[ok][pos]))
    out[ok] = vals
    return float(out[0]) if scalar else out


def phi_breakpoints(ctx: ScaleContext) -> list[float]:
    """Heights where g leaves 0 or reaches 2 (kinks of phi)."""
    u2 = ctx.u * ctx.u
    pts = [2.0 * u2 / (1.0 + ctx.lam_alpha), 2.0 * ctx.lam_alpha * u2 / (1.0 + ctx.lam_alpha)]
    return sorted(p for p in pts if 0 < p < ctx.h_max)


def phi_total_mass(ctx: ScaleContext) -> float:
    """int_0^{h_max} phi dh, integrated on the unit interval scaled by h_max."""
    H = ctx.h_max
    pts = [p / H for p in phi_breakpoints(ctx)]
    val, _ = integrate.quad(
        lambda s: phi_density(ctx, min(s * H, H)), 0.0, 1.0, points=pts or None,
        epsabs=0.0, epsrel=1e-10, limit=400,
    )
    return H * val


def expected_mass(ctx: ScaleContext) -> float:
    """lambda / (d kappa_d u^{d-1}), what phi_total_mass must equal."""
    return ctx.scale / (ctx.d * unit_ball_volume(ctx.d) * ctx.u ** (ctx.d - 1))


def angular_factor(ctx: ScaleContext, v) -> np.ndarray:
    """sin^{d-2}(|v|/u) / (|v|/u)^{d-2}, equal to 1 at v = 0."""
    vv = np.atleast_2d(np.asarray(v, dtype=float))
    r = np.linalg.norm(vv, axis=1) / ctx.u
    if np.any(r > math.pi * (1 + 1e-14)):
        raise DomainError("|v| exceeds u * pi")
    return np.sinc(r / math.pi) ** (ctx.d - 2)


def mu_density(ctx: ScaleContext, v, h):
    """Density of the rescaled intensity measure mu^(lambda,alpha) at (v, h)."""
    out = angular_factor(ctx, v) * np.asarray(phi_density(ctx, h))
    return float(out[0]) if out.size == 1 else out


def mu_total_mass(ctx: ScaleContext) -> float:
    """Total mass of mu over W_lambda by polar cubature (should equal lambda)."""
    d = ctx.d
    shell = (d - 1) * unit_ball_volume(d - 1)
    radial, _ = integrate.quad(
        lambda rho: shell * rho ** (d - 2) * angular_factor(ctx, [[rho] + [0.0] * (d - 2)])[0],
        0.0, ctx.u * math.pi, epsabs=0.0, epsrel=1e-12, limit=200,
    )
    return radial * phi_total_mass(ctx)


# ---------------------------------------------------------------------------
# limit height laws


@dataclass(frozen=True)
class PointMass:
    """Dirac mass ``weight`` at ``at``; stands in for a density in the SUB regime."""

    at: float = 0.0
    weight: float = 1.0


def _limit_c(d: int) -> float:
    return unit_ball_volume(d) ** (2.0 / (d + 1))


def nu_limit_pdf(d: int, alpha, h):
    """Density of nu^(infty,alpha) at h >= 0 (a :class:`PointMass` for SUB)."""
    rp = classify(d, alpha)
    hh = np.asarray(h, dtype=float)
    if np.any(hh < 0):
        raise DomainError("heights are nonnegative")
    if rp.regime is Regime.SUB:
        return PointMass()
    if rp.regime is Regime.SUPER:
        out = np.ones_like(hh)
    elif rp.regime is Regime.CRIT_HI:
        out = np.asarray(cap_s1(d, _limit_c(d) * hh))
    elif rp.regime is Regime.CRIT_LO:
        out = np.asarray(cap_s2(d, _limit_c(d) * hh))
    else:
        out = hh ** ((d - 1) / 2.0)
    return float(out) if out.ndim == 0 else out


def nu_limit_cdf(d: int, alpha, h):
    """nu^(infty,alpha)([0, h]) (1 for every h >= 0 in the SUB regime)."""
    rp = classify(d, alpha)
    hh = np.maximum(np.asarray(h, dtype=float), 0.0)
    c = _limit_c(d)
    if rp.regime is Regime.SUB:
        out = np.ones_like(hh)
    elif rp.regime is Regime.SUPER:
        out = hh
    elif rp.regime is Regime.CRIT_HI:
        out = np.asarray(cap_s1_integral(d, c * hh)) / c
    elif rp.regime is Regime.CRIT_LO:
        out = np.asarray(cap_s2_integral(d, c * hh)) / c
    else:
        out = 2.0 / (d + 1) * hh ** ((d + 1) / 2.0)
    return float(out) if out.ndim == 0 else out


def nu_support_top(d: int, alpha) -> float:
    """Upper end of the support of nu (inf when unbounded)."""
    rp = classify(d, alpha)
    if rp.regime is Regime.SUB:
        return 0.0
    if rp.regime is Regime.CRIT_LO:
        return 2.0 / _limit_c(d)
    return math.inf


def default_h_cap(scale: float) -> float:
    """Default truncation 4 log(lambda) for unbounded height laws."""
    return 4.0 * math.log(scale)


def sample_nu(d: int, alpha, h_cap: float, rng: np.random.Generator, size: int | None = None):
    """Samples from nu^(infty,alpha) restricted to [0, h_cap] and normalised."""
    rp = classify(d, alpha)
    n = 1 if size is None else size
    if rp.regime is Regime.SUB:
        out = np.zeros(n)
    else:
        if not (h_cap > 0 and math.isfinite(h_cap)):
            raise DomainError("h_cap must be positive and finite")
        top = min(h_cap, nu_support_top(d, alpha))
        w = rng.random(n)
        if rp.regime is Regime.SUPER:
            out = top * w
        elif rp.regime in POWER_LAW_REGIMES:
            out = top * w ** (2.0 / (d + 1))
        else:
            out = _inverse_cdf(d, alpha, top, w)
    return float(out[0]) if size is None else out


def _inverse_cdf(d: int, alpha, top: float, w: np.ndarray) -> np.ndarray:
    target = w * nu_limit_cdf(d, alpha, top)
    lo = np.zeros_like(w)
    hi = np.full_like(w, top)
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        below = nu_limit_cdf(d, alpha, mid) < target
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi)
