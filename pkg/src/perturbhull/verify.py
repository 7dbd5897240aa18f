"""Analytic identity checks behind the ``verify`` command.

Each check returns a :class:`CheckResult` with the worst observed error.  The
Beta normalisation takes the unit-ball volume function as a parameter so that
a perturbed kappa can be injected as a negative control.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

import numpy as np
from scipy import integrate, special

from .geometry import unit_ball_volume
from .scaling import (
    Regime,
    beta_of,
    cap_s1,
    cap_s1_integral,
    cap_s2_integral,
    critical_alphas,
    expected_mass,
    make_context,
    phi_total_mass,
)

ALL_DIMS = tuple(range(2, 9))


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    worst: float
    tolerance: float
    seconds: float
    detail: str = ""


def representative_alphas(d: int) -> dict[Regime, Fraction]:
    """One alpha inside each of the seven regimes."""
    lo, hi = critical_alphas(d)
    return {
        Regime.SUPER: Fraction(1),
        Regime.CRIT_HI: hi,
        Regime.POS: hi / 2,
        Regime.ZERO: Fraction(0),
        Regime.NEG: lo / 2,
        Regime.CRIT_LO: lo,
        Regime.SUB: lo - 1,
    }


def check_mass_identity(dims=ALL_DIMS, scales=(1e3, 1e5), rtol: float = 1e-6) -> CheckResult:
    """int phi dh = lambda / (d kappa_d u^{d-1}) for every regime."""
    t0 = time.perf_counter()
    worst, where = 0.0, ""
    for d in dims:
        for regime, alpha in representative_alphas(d).items():
            for lam in scales:
                ctx = make_context(d, alpha, lam)
                target = expected_mass(ctx)
                err = abs(phi_total_mass(ctx) / target - 1.0)
                if not err <= worst:
                    worst, where = err, f"d={d} {regime.value} lambda={lam:g}"
    return CheckResult("mass identity", worst <= rtol, worst, rtol, time.perf_counter() - t0, where)


def beta_normalization(d: int, kappa: Callable[[int], float] = unit_ball_volume) -> float:
    """(2^d kappa_{d-1} / kappa_d) B((d+1)/2, (d+1)/2), which equals 1."""
    a = (d + 1) / 2.0
    return 2.0 ** d * kappa(d - 1) / kappa(d) * special.beta(a, a)


def check_beta_normalization(dims=ALL_DIMS, tol: float = 1e-12,
                             kappa: Callable[[int], float] = unit_ball_volume) -> CheckResult:
    t0 = time.perf_counter()
    errs = {d: float(abs(beta_normalization(d, kappa) - 1.0)) for d in dims}
    d_worst = max(errs, key=errs.get)
    worst = errs[d_worst]
    return CheckResult("beta normalization", bool(worst <= tol), worst, tol, time.perf_counter() - t0, f"d={d_worst}")


def check_beta_continuity(dims=ALL_DIMS, tol: float = 1e-14) -> CheckResult:
    """beta(alpha) agrees on both sides of 2/(d+1), 0 and -2/(d-1)."""
    t0 = time.perf_counter()
    worst, where = 0.0, ""
    for d in dims:
        lo, hi = critical_alphas(d)
        sides = [
            (hi, Regime.SUPER, Regime.CRIT_HI, Regime.POS),
            (Fraction(0), Regime.POS, Regime.ZERO, Regime.NEG),
            (lo, Regime.NEG, Regime.CRIT_LO, Regime.SUB),
        ]
        for a, left, mid, right in sides:
            vals = [beta_of(d, float(a), r) for r in (left, mid, right)]
            err = max(vals) - min(vals)
            if err > worst:
                worst, where = err, f"d={d} alpha={a}"
    return CheckResult("beta continuity", worst <= tol, worst, tol, time.perf_counter() - t0, where)


def check_cap_functions(dims=ALL_DIMS, tol: float = 1e-10) -> CheckResult:
    """s1/s2 consistency.

    s1(1) = 1/2 (hemisphere); int_0^2 s2 = 1/d; s1 agrees with the incomplete-beta form
    I_{h(2-h)}((d-1)/2, 1/2) / 2 on [0, 1]; the closed antiderivative
    (y - 1) s1(y) + s2(y) agrees with adaptive quadrature of s1.
    """
    t0 = time.perf_counter()
    worst, where = 0.0, ""

    def note(err, label):
        nonlocal worst, where
        if not err <= worst:
            worst, where = err, label

    hs = np.linspace(0.0, 1.0, 21)[1:]
    for d in dims:
        note(abs(cap_s1(d, 1.0) - 0.5), f"d={d} s1(1)")
        note(abs(cap_s2_integral(d, 2.0) - 1.0 / d), f"d={d} mass of s2")
        ref = 0.5 * special.betainc((d - 1) / 2.0, 0.5, hs * (2.0 - hs))
        note(float(np.max(np.abs(cap_s1(d, hs) - ref))), f"d={d} s1 vs incomplete beta")
        for y in (0.3, 1.0, 1.7):
            quad, _ = integrate.quad(lambda h: cap_s1(d, h), 0.0, y, epsabs=1e-13, epsrel=1e-12)
            note(abs(quad - cap_s1_integral(d, y)), f"d={d} int s1 at {y}")
    return CheckResult("cap functions", worst <= tol, worst, tol, time.perf_counter() - t0, where)


def run_all(kappa: Callable[[int], float] = unit_ball_volume, dims=ALL_DIMS) -> list[CheckResult]:
    return [
        check_mass_identity(dims),
        check_beta_normalization(dims, kappa=kappa),
        check_beta_continuity(dims),
        check_cap_functions(dims),
    ]


def perturbed_kappa(eps: float) -> Callable[[int], float]:
    """kappa_d scaled by (1 + eps) in odd dimensions; a negative control."""
    def kappa(d: int) -> float:
        return unit_ball_volume(d) * (1.0 + eps if d % 2 else 1.0)
    return kappa
