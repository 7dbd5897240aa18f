"""Elementary d-dimensional geometry: ball volumes, sphere/ball sampling and the
spherical exponential map at the north pole."""

from __future__ import annotations

import math

import numpy as np

MIN_DIM = 2
MAX_DIM = 8

# below this tangent norm the exponential map uses its Taylor branch
_SERIES_CUTOFF = 1e-8


class DomainError(ValueError):
    """Argument outside the mathematical domain of an operation."""


class SingularityError(DomainError):
    """Point at the antipode of the north pole, where the log map is undefined."""


def unit_ball_volume(d: int) -> float:
    """Volume kappa_d = pi^(d/2) / Gamma(d/2 + 1) of the unit ball in R^d."""
    if d < 1:
        raise DomainError(f"dimension must be >= 1, got {d}")
    return math.exp(0.5 * d * math.log(math.pi) - math.lgamma(0.5 * d + 1.0))


def sphere_area(d: int) -> float:
    """Surface area d * kappa_d of the unit sphere S^{d-1} in R^d."""
    return d * unit_ball_volume(d)


def _check_dim(d: int) -> None:
    if d < MIN_DIM:
        raise DomainError(f"dimension must be >= {MIN_DIM}, got {d}")


def sample_uniform_sphere(d: int, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Uniform point(s) on S^{d-1} via normalised Gaussian vectors.

    Returns shape (d,) when ``size`` is None, else (size, d).
    """
    _check_dim(d)
    n = 1 if size is None else size
    g = rng.standard_normal((n, d))
    norms = np.linalg.norm(g, axis=1)
    # a zero Gaussian vector has probability 0, but be safe
    while np.any(norms == 0.0):
        bad = norms == 0.0
        g[bad] = rng.standard_normal((int(bad.sum()), d))
        norms = np.linalg.norm(g, axis=1)
    out = g / norms[:, None]
    return out[0] if size is None else out


def sample_uniform_ball(d: int, radius: float, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Uniform point(s) in B_d(0, radius): uniform direction times radius * U^(1/d)."""
    _check_dim(d)
    if not radius > 0:
        raise DomainError(f"radius must be positive, got {radius}")
    n = 1 if size is None else size
    directions = sample_uniform_sphere(d, rng, n)
    r = radius * rng.random(n) ** (1.0 / d)
    out = directions * r[:, None]
    return out[0] if size is None else out


def exp_map(v) -> np.ndarray:
    """Exponential map of S^{d-1} at the north pole u0 = (0, ..., 0, 1).

    ``v`` has shape (d-1,) or (n, d-1) and every norm must be <= pi.
    """
    v = np.asarray(v, dtype=float)
    single = v.ndim == 1
    vv = np.atleast_2d(v)
    t = np.linalg.norm(vv, axis=1)
    if np.any(t > math.pi * (1 + 1e-14)):
        raise DomainError("tangent vector norm exceeds pi")
    small = t < _SERIES_CUTOFF
    # sin(t)/t, with the series 1 - t^2/6 near zero
    sinc = np.where(small, 1.0 - t * t / 6.0, np.sin(t) / np.where(small, 1.0, t))
    out = np.empty((vv.shape[0], vv.shape[1] + 1))
    out[:, :-1] = vv * sinc[:, None]
    out[:, -1] = np.cos(t)
    return out[0] if single else out


def inv_exp_map(u) -> np.ndarray:
    """Inverse of :func:`exp_map` for unit vector(s) ``u`` other than -u0."""
    u = np.asarray(u, dtype=float)
    single = u.ndim == 1
    uu = np.atleast_2d(u)
    norms = np.linalg.norm(uu, axis=1)
    if np.any(np.abs(norms - 1.0) > 1e-9):
        raise DomainError("inv_exp_map needs unit vectors")
    lateral = uu[:, :-1]
    s = np.linalg.norm(lateral, axis=1)
    if np.any((s == 0.0) & (uu[:, -1] < 0)):
        raise SingularityError("inv_exp_map is singular at the south pole")
    t = np.arctan2(s, uu[:, -1])
    small = s < _SERIES_CUTOFF
    scale = np.where(small, 1.0 + s * s / 6.0, t / np.where(small, 1.0, s))
    out = lateral * scale[:, None]
    return out[0] if single else out


def geodesic_distance(a, b) -> np.ndarray:
    """Great-circle distance between unit vectors (row-wise), stable near 0 and pi."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    cross = np.linalg.norm(a - b, axis=1)
    plus = np.linalg.norm(a + b, axis=1)
    return 2.0 * np.arctan2(cross, plus)
