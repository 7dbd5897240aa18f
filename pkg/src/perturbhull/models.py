"""Binomial and Poisson perturbed sphere models.

Each point is a uniform point of S^{d-1} plus independent uniform noise in the
ball B_d(0, s^alpha), s = n (binomial) or lambda (Poisson).  Clouds carry the
radial depth (1 + s^alpha) - |x| computed without cancellation, because for
very negative alpha the noise is far below float resolution.
"""

from __future__ import annotations

import io
import math
import zlib
from dataclasses import asdict, dataclass

import numpy as np

from .geometry import DomainError, sample_uniform_ball, sample_uniform_sphere
from .hull import PointCloud

KINDS = ("binomial", "poisson")


@dataclass(frozen=True)
class ModelParams:
    d: int
    alpha: float
    scale: float
    kind: str = "poisson"
    seed: int = 0

    def __post_init__(self):
        if self.d < 2:
            raise DomainError(f"d must be >= 2, got {self.d}")
        if not self.scale >= 1:
            raise DomainError(f"scale must be >= 1, got {self.scale}")
        if self.kind not in KINDS:
            raise DomainError(f"kind must be one of {KINDS}, got {self.kind!r}")
        object.__setattr__(self, "alpha", float(self.alpha))

    @property
    def radius(self) -> float:
        """Perturbation radius scale**alpha."""
        return math.exp(self.alpha * math.log(self.scale))


def _tag_id(tag) -> int:
    if isinstance(tag, int):
        return tag
    return zlib.crc32(str(tag).encode())


def stream(master_seed: int, *key) -> np.random.Generator:
    """Independent generator keyed by (master seed, replication index, tag, ...).

    Equal keys give bitwise-equal streams; distinct keys give independent ones.
    """
    ss = np.random.SeedSequence(entropy=int(master_seed) & ((1 << 64) - 1), spawn_key=tuple(_tag_id(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


def _perturbed_points(d: int, count: int, radius: float, rng: np.random.Generator):
    if count == 0:
        return np.empty((0, d)), np.empty(0)
    base = sample_uniform_sphere(d, rng, count)
    noise = sample_uniform_ball(d, radius, rng, count)
    pts = base + noise
    norm = np.linalg.norm(pts, axis=1)
    # |x| - 1 = (2 <X, e> + |e|^2) / (|x| + 1), accurate when |e| is tiny
    excess = (2.0 * np.einsum("ij,ij->i", base, noise) + np.einsum("ij,ij->i", noise, noise)) / (norm + 1.0)
    depth = radius - excess
    return pts, depth


def _metadata(params: ModelParams) -> dict:
    meta = asdict(params)
    meta["kind"] = params.kind
    return meta


def sample_binomial_cloud(params: ModelParams, rng: np.random.Generator) -> PointCloud:
    """Exactly n points X_i + e_i."""
    if params.kind != "binomial":
        raise DomainError("params.kind must be 'binomial'")
    n = params.scale
    if float(n) != int(n):
        raise DomainError(f"binomial model needs an integer n, got {n}")
    pts, depth = _perturbed_points(params.d, int(n), params.radius, rng)
    return PerturbedCloud(pts, _metadata(params), depth)


def sample_poisson_cloud(params: ModelParams, rng: np.random.Generator) -> PointCloud:
    """Poisson(lambda) many points, each X_i + e_i with noise radius lambda^alpha."""
    if params.kind != "poisson":
        raise DomainError("params.kind must be 'poisson'")
    count = int(rng.poisson(params.scale))
    pts, depth = _perturbed_points(params.d, count, params.radius, rng)
    return PerturbedCloud(pts, _metadata(params), depth)


def sample_cloud(params: ModelParams, rng: np.random.Generator) -> PointCloud:
    if params.kind == "binomial":
        return sample_binomial_cloud(params, rng)
    return sample_poisson_cloud(params, rng)


@dataclass(frozen=True, eq=False)
class PerturbedCloud(PointCloud):
    """PointCloud from a model sampler, with the exact radial depth of each point."""

    depth: np.ndarray | None = None


# ---------------------------------------------------------------------------
# CSV serialisation

CSV_HEADER = "dim,alpha,scale,kind,seed"


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def cloud_to_csv(cloud: PointCloud) -> str:
    """Header line, one metadata row, then one row of d coordinates per point."""
    meta = dict(cloud.metadata or {})
    buf = io.StringIO()
    buf.write(CSV_HEADER + "\n")
    buf.write(",".join([
        str(cloud.d),
        _fmt(meta.get("alpha", float("nan"))),
        _fmt(meta.get("scale", float("nan"))),
        str(meta.get("kind", "")),
        str(meta.get("seed", "")),
    ]) + "\n")
    for row in cloud.points:
        buf.write(",".join(_fmt(c) for c in row) + "\n")
    return buf.getvalue()


def cloud_from_csv(text: str) -> PointCloud:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].strip() != CSV_HEADER:
        raise ValueError(f"expected header {CSV_HEADER!r}")
    dim_s, alpha_s, scale_s, kind, seed_s = lines[1].split(",")
    d = int(dim_s)
    meta = {"d": d, "alpha": float(alpha_s), "scale": float(scale_s), "kind": kind,
            "seed": int(seed_s) if seed_s else None}
    rows = [list(map(float, ln.split(","))) for ln in lines[2:]]
    pts = np.array(rows, dtype=float).reshape(-1, d)
    return PointCloud(pts, meta)
