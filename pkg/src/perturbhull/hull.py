"""Convex hulls in R^d: face lattices, k-face counts f_k, per-point scores xi_k,
extreme-point predicates and lower hulls of lifted point sets.

Two engines build hulls.  ``"qhull"`` (the default) wraps scipy's Qhull and is the
one used for the large simulations; ``"incremental"`` is a pure numpy
beneath-beyond construction (see :mod:`perturbhull.incremental`) that refuses
near-degenerate input instead of guessing.  Both return the same
:class:`HullComplex`.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property
from typing import Any, Mapping

import numpy as np
from scipy.spatial import ConvexHull, QhullError


class DegeneracyError(ValueError):
    """Input is not full-dimensional or too close to a degenerate configuration."""


class OutOfWindowError(ValueError):
    """Evaluation point outside the region where an envelope is defined."""


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Finite point set in R^d with optional model metadata."""

    points: np.ndarray
    metadata: Mapping[str, Any] | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2:
            raise ValueError("points must be a 2-d array (n, d)")
        if not np.all(np.isfinite(pts)):
            raise ValueError("points must be finite")
        object.__setattr__(self, "points", pts)

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.points.shape[0]


def _faces_from_facets(facets: np.ndarray, d: int) -> tuple[np.ndarray, ...]:
    """All k-faces (k = 0..d-1) of a simplicial complex given by its top cells."""
    faces = []
    for k in range(d):
        if len(facets) == 0:
            faces.append(np.empty((0, k + 1), dtype=np.intp))
            continue
        if k == d - 1:
            faces.append(np.unique(facets, axis=0))
            continue
        parts = [facets[:, list(c)] for c in itertools.combinations(range(facets.shape[1]), k + 1)]
        faces.append(np.unique(np.concatenate(parts), axis=0))
    return tuple(faces)


@dataclass(frozen=True, eq=False)
class HullComplex:
    """Boundary complex of conv(cloud).

    ``facets`` holds one row of ``d`` sorted cloud indices per (triangulated)
    facet; ``equations`` holds the matching outward unit normals and offsets,
    so that ``equations[:, :-1] @ x + equations[:, -1] <= 0`` inside the hull.
    """

    dim: int
    n_points: int
    vertices: np.ndarray
    facets: np.ndarray
    equations: np.ndarray
    simplicial: bool = True
    engine: str = "qhull"

    @cached_property
    def faces(self) -> tuple[np.ndarray, ...]:
        """k-faces for k = 0..d-1 as arrays of sorted vertex-index rows."""
        out = list(_faces_from_facets(self.facets, self.dim))
        out[0] = self.vertices.reshape(-1, 1)
        return tuple(out)

    @property
    def f_vector(self) -> tuple[int, ...]:
        if self.dim == 2:
            # a polygon has as many edges as vertices; skip the lattice
            return (len(self.vertices), len(self.facets))
        return tuple(len(f) for f in self.faces)

    def f(self, k: int) -> int:
        if k == 0:
            return len(self.vertices)
        if k == self.dim - 1:
            return len(self.facets)
        return len(self.faces[k])

    def incidence(self, k: int) -> np.ndarray:
        """Number of k-faces containing each cloud point."""
        if not 0 <= k < self.dim:
            raise ValueError(f"k must lie in 0..{self.dim - 1}")
        if k == 0:
            out = np.zeros(self.n_points, dtype=np.intp)
            out[self.vertices] = 1
            return out
        faces = self.facets if k == self.dim - 1 else self.faces[k]
        return np.bincount(faces.ravel(), minlength=self.n_points)

    def xi(self, k: int) -> np.ndarray:
        """Scores xi_k for every cloud point; they sum to f_k."""
        return self.incidence(k) / (k + 1.0)

    def extreme_mask(self) -> np.ndarray:
        mask = np.zeros(self.n_points, dtype=bool)
        mask[self.vertices] = True
        return mask

    def euler_characteristic(self) -> int:
        return sum((-1) ** k * n for k, n in enumerate(self.f_vector))

    def ray_exit(self, directions) -> np.ndarray:
        """Distance from the origin to the boundary along each unit direction.

        The origin must be interior to the hull.
        """
        dirs = np.atleast_2d(np.asarray(directions, dtype=float))
        normals = self.equations[:, :-1]
        offsets = self.equations[:, -1]
        if np.any(offsets >= 0):
            raise ValueError("origin is not interior to the hull")
        proj = dirs @ normals.T
        with np.errstate(divide="ignore"):
            t = np.where(proj > 0, -offsets[None, :] / proj, np.inf)
        return t.min(axis=1)


def _check_cloud(points: np.ndarray) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2:
        raise ValueError("points must be (n, d)")
    n, d = pts.shape
    if d < 2:
        raise DegeneracyError("hulls need d >= 2")
    if n < d + 1:
        raise DegeneracyError(f"{n} points cannot span R^{d}")
    return pts


def _qhull(points: np.ndarray) -> HullComplex:
    n, d = points.shape
    try:
        hull = ConvexHull(points)
    except QhullError as exc:
        raise DegeneracyError(f"Qhull rejected the input: {str(exc).splitlines()[0]}") from exc
    facets = np.sort(hull.simplices, axis=1)
    order = np.lexsort(facets.T[::-1])
    facets = facets[order]
    eq = hull.equations[order]
    simplicial = len(hull.coplanar) == 0
    if simplicial and d > 2:
        # triangulated merged facets share (nearly) the same hyperplane
        nb = np.argsort(order)[hull.neighbors[order]]
        same = np.abs(eq[:, None, :] - eq[nb]).max(axis=2) < 1e-12
        simplicial = not bool(same.any())
    vertices = np.unique(facets)
    return HullComplex(d, n, vertices, facets, eq, simplicial, "qhull")


def convex_hull(cloud, engine: str = "qhull") -> HullComplex:
    """Boundary complex of the convex hull of ``cloud`` (PointCloud or array)."""
    points = cloud.points if isinstance(cloud, PointCloud) else cloud
    points = _check_cloud(points)
    if engine == "qhull":
        return _qhull(points)
    if engine == "incremental":
        from .incremental import beneath_beyond

        return beneath_beyond(points)
    raise ValueError(f"unknown hull engine {engine!r}")


def is_extreme(index: int, cloud, engine: str = "qhull") -> bool:
    """True iff point ``index`` is a vertex of conv(cloud)."""
    hull = convex_hull(cloud, engine)
    return bool(np.isin(index, hull.vertices))


def xi_score(index: int, cloud, k: int, engine: str = "qhull") -> float:
    """(k+1)^-1 times the number of k-faces of conv(cloud) containing the point."""
    hull = convex_hull(cloud, engine)
    return float(hull.xi(k)[index])


def face_counts(cloud, engine: str = "qhull") -> tuple[int, ...]:
    return convex_hull(cloud, engine).f_vector


# ---------------------------------------------------------------------------
# lower hulls of lifted points


@dataclass(frozen=True, eq=False)
class LowerHull:
    """Lower convex hull of points (v_i, z_i) in R^m x R.

    ``facets`` are index rows of the lower facets (m+1 indices each); facet f
    supports the affine function ``slopes[f] @ v + intercepts[f]``.
    """

    spatial: np.ndarray
    z: np.ndarray
    vertices: np.ndarray
    facets: np.ndarray
    slopes: np.ndarray
    intercepts: np.ndarray

    @property
    def m(self) -> int:
        return self.spatial.shape[1]

    @cached_property
    def _chain(self) -> tuple[np.ndarray, np.ndarray]:
        """m = 1: abscissae and lifts of the lower chain, left to right."""
        order = self.vertices[np.argsort(self.spatial[self.vertices, 0], kind="stable")]
        return self.spatial[order, 0], self.z[order]

    @cached_property
    def _inverse_simplices(self) -> np.ndarray:
        """Per facet, the inverse of [vertices^T; 1] mapping (v, 1) to barycentrics."""
        a = np.concatenate([np.swapaxes(self.spatial[self.facets], 1, 2),
                            np.ones((len(self.facets), 1, self.m + 1))], axis=1)
        with np.errstate(all="ignore"):
            inv = np.linalg.pinv(a)
        return inv

    def _barycentric(self, vv: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Affine coordinates of vv in the simplex of the vertices (no facets case)."""
        pts = self.spatial[self.vertices]
        a = np.vstack([pts.T, np.ones(len(pts))])
        rhs = np.vstack([vv.T, np.ones(len(vv))])
        lam = np.linalg.lstsq(a, rhs, rcond=None)[0]
        resid = np.abs(a @ lam - rhs).max(axis=0)
        return lam.T, resid

    def _locate(self, vv: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """For each query, the facet with the largest minimal barycentric
        coordinate and those coordinates (m >= 2 with facets)."""
        inv = self._inverse_simplices
        rhs = np.column_stack([vv, np.ones(len(vv))])
        best = np.empty(len(vv), dtype=np.intp)
        lam = np.empty((len(vv), self.m + 1))
        chunk = max(1, 2_000_000 // max(1, len(inv) * (self.m + 1)))
        for s in range(0, len(vv), chunk):
            part = np.einsum("fij,qj->qfi", inv, rhs[s:s + chunk])
            score = part.min(axis=2)
            idx = np.argmax(score, axis=1)
            best[s:s + chunk] = idx
            lam[s:s + chunk] = part[np.arange(len(idx)), idx]
        return best, lam

    def contains(self, v, tol: float = 1e-9) -> np.ndarray:
        """Whether spatial point(s) lie in the projection of the lower hull."""
        vv = np.atleast_2d(np.asarray(v, dtype=float))
        if len(self.facets) == 0:
            lam, resid = self._barycentric(vv)
            return (resid <= tol) & np.all(lam >= -tol, axis=1)
        if self.m == 1:
            xs, _ = self._chain
            return (vv[:, 0] >= xs[0] - tol) & (vv[:, 0] <= xs[-1] + tol)
        _, lam = self._locate(vv)
        return lam.min(axis=1) >= -tol

    def envelope(self, v) -> np.ndarray:
        """L(v): the lower convex envelope of the lifted points at spatial v.

        Evaluated by interpolating inside the lower facet over v, so the value
        is a convex combination of lifts even next to sliver facets.
        """
        vv = np.atleast_2d(np.asarray(v, dtype=float))
        inside = self.contains(vv)
        if not np.all(inside):
            raise OutOfWindowError("evaluation point outside the spatial hull")
        if len(self.facets) == 0:
            lam, _ = self._barycentric(vv)
            return lam @ self.z[self.vertices]
        if self.m == 1:
            xs, zs = self._chain
            x = np.clip(vv[:, 0], xs[0], xs[-1])
            j = np.clip(np.searchsorted(xs, x, side="right") - 1, 0, len(xs) - 2)
            t = np.clip((x - xs[j]) / (xs[j + 1] - xs[j]), 0.0, 1.0)
            return (1.0 - t) * zs[j] + t * zs[j + 1]
        best, lam = self._locate(vv)
        lam = np.clip(lam, 0.0, None)
        lam /= lam.sum(axis=1, keepdims=True)
        return np.einsum("qi,qi->q", lam, self.z[self.facets[best]])

    def faces(self, k: int) -> np.ndarray:
        """k-faces (k = 0..m) of the lower hull as sorted index rows."""
        if k == 0:
            return self.vertices.reshape(-1, 1)
        if len(self.facets) == 0:
            # at most m affinely independent points: every subset is a lower face
            combos = list(itertools.combinations(self.vertices.tolist(), k + 1))
            return np.asarray(combos, dtype=np.intp).reshape(-1, k + 1)
        return _faces_from_facets(self.facets, self.m + 1)[k]

    def incidence(self, k: int) -> np.ndarray:
        return np.bincount(self.faces(k).ravel(), minlength=len(self.z))


def _affine_through(spatial: np.ndarray, z: np.ndarray, facets: np.ndarray):
    """Slopes/intercepts of the affine maps interpolating each facet."""
    m = spatial.shape[1]
    a = np.concatenate([spatial[facets], np.ones(facets.shape + (1,))], axis=2)
    rhs = z[facets]
    sol = np.linalg.solve(a, rhs[..., None])[..., 0]
    return sol[:, :m], sol[:, m]


def _lower_chain_1d(x: np.ndarray, z: np.ndarray) -> np.ndarray:
    order = np.lexsort((z, x))
    chain: list[int] = []
    for i in order:
        if chain and x[chain[-1]] == x[i]:
            continue  # same abscissa, higher z: never on the lower chain
        while len(chain) >= 2:
            a, b = chain[-2], chain[-1]
            cross = (x[b] - x[a]) * (z[i] - z[a]) - (z[b] - z[a]) * (x[i] - x[a])
            if cross <= 0:
                chain.pop()
            else:
                break
        chain.append(int(i))
    return np.asarray(chain, dtype=np.intp)


def lower_hull_envelope(spatial, z, engine: str = "qhull") -> LowerHull:
    """Lower hull of the lifted set {(spatial_i, z_i)} and its envelope.

    ``spatial`` has shape (n, m), m = d - 1 >= 1.
    """
    v = np.asarray(spatial, dtype=float)
    if v.ndim == 1:
        v = v[:, None]
    zz = np.asarray(z, dtype=float)
    n, m = v.shape
    if n == 0:
        raise DegeneracyError("empty point set")
    if m == 1:
        chain = _lower_chain_1d(v[:, 0], zz)
        facets = np.sort(np.stack([chain[:-1], chain[1:]], axis=1), axis=1) if len(chain) > 1 else np.empty((0, 2), np.intp)
        slopes, intercepts = (_affine_through(v, zz, facets) if len(facets) else (np.empty((0, 1)), np.empty(0)))
        return LowerHull(v, zz, np.sort(chain), facets, slopes, intercepts)
    if n <= m + 1:
        if n == m + 1:
            facets = np.arange(n, dtype=np.intp)[None, :]
            try:
                slopes, intercepts = _affine_through(v, zz, facets)
            except np.linalg.LinAlgError as exc:
                raise DegeneracyError("spatial points are affinely dependent") from exc
        else:
            facets = np.empty((0, m + 1), np.intp)
            slopes, intercepts = np.empty((0, m)), np.empty(0)
        return LowerHull(v, zz, np.arange(n, dtype=np.intp), facets, slopes, intercepts)
    lifted = np.column_stack([v, zz])
    hull = convex_hull(lifted, engine)
    normals = hull.equations[:, :-1]
    lower = normals[:, -1] < -1e-12
    facets = hull.facets[lower]
    try:
        slopes, intercepts = _affine_through(v, zz, facets)
    except np.linalg.LinAlgError as exc:
        raise DegeneracyError("a lower facet projects to a flat simplex") from exc
    vertices = np.unique(facets)
    return LowerHull(v, zz, vertices, facets, slopes, intercepts)
