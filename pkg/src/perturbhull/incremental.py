"""Randomized incremental (beneath-beyond) convex hull with conflict lists.

Pure numpy, any dimension d >= 2.  Orientation is decided by the determinant of
the d vectors from the query point to the facet vertices, normalised by the
product of their lengths (Hadamard bound, so the value lies in [-1, 1]).  A
normalised value below ``EPS`` in magnitude raises :class:`DegeneracyError`.
"""

from __future__ import annotations

from collections import defaultdict

import numpy as np

from .hull import DegeneracyError, HullComplex

EPS = 1e-10


def _orient(points: np.ndarray, facet: tuple[int, ...], queries: np.ndarray) -> np.ndarray:
    """Normalised orientation of each query point with respect to ``facet``."""
    verts = points[list(facet)]
    diff = verts[None, :, :] - queries[:, None, :]
    det = np.linalg.det(diff)
    scale = np.prod(np.linalg.norm(diff, axis=2), axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(scale > 0, det / scale, 0.0)
    return out


def _initial_simplex(points: np.ndarray, order: np.ndarray) -> list[int]:
    d = points.shape[1]
    span = np.ptp(points, axis=0).max()
    if span == 0:
        raise DegeneracyError("all points coincide")
    chosen = [int(order[0])]
    basis = np.empty((0, d))
    for i in order[1:]:
        w = points[i] - points[chosen[0]]
        r = w - basis.T @ (basis @ w) if len(basis) else w
        nr = np.linalg.norm(r)
        if nr > 1e-7 * span:
            chosen.append(int(i))
            basis = np.vstack([basis, r / nr])
            if len(chosen) == d + 1:
                return chosen
    raise DegeneracyError("points do not span R^d")


def beneath_beyond(points: np.ndarray, seed: int = 0) -> HullComplex:
    """Convex hull of ``points`` (n, d) by randomized insertion."""
    points = np.asarray(points, dtype=float)
    n, d = points.shape
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    simplex = _initial_simplex(points, order)
    interior = points[simplex].mean(axis=0)

    facets: dict[int, tuple[int, ...]] = {}
    sign: dict[int, float] = {}
    ridges: dict[tuple[int, ...], set[int]] = defaultdict(set)
    conflicts: dict[int, set[int]] = {}
    owner: dict[int, int] = {}
    next_id = 0

    def add_facet(verts: tuple[int, ...]) -> int:
        nonlocal next_id
        verts = tuple(sorted(verts))
        s = _orient(points, verts, interior[None, :])[0]
        if abs(s) < EPS:
            raise DegeneracyError("flat facet while building the hull")
        fid = next_id
        next_id += 1
        facets[fid] = verts
        sign[fid] = np.sign(s)
        conflicts[fid] = set()
        for j in range(d):
            ridges[verts[:j] + verts[j + 1:]].add(fid)
        return fid

    def remove_facet(fid: int) -> None:
        verts = facets.pop(fid)
        for j in range(d):
            r = verts[:j] + verts[j + 1:]
            ridges[r].discard(fid)
            if not ridges[r]:
                del ridges[r]
        del sign[fid]

    def visible(fid: int, idx: np.ndarray) -> np.ndarray:
        o = _orient(points, facets[fid], points[idx]) * sign[fid]
        if np.any(np.abs(o) < EPS):
            raise DegeneracyError("point within tolerance of a facet hyperplane")
        return o < 0

    def assign(candidates: np.ndarray, new_ids: list[int]) -> None:
        remaining = candidates
        for fid in new_ids:
            if len(remaining) == 0:
                break
            vis = visible(fid, remaining)
            for p in remaining[vis]:
                conflicts[fid].add(int(p))
                owner[int(p)] = fid
            remaining = remaining[~vis]

    start = [add_facet(tuple(s for s in simplex if s != skip)) for skip in simplex]
    rest = np.array([i for i in order if i not in set(simplex)], dtype=np.intp)
    assign(rest, start)

    for p in order:
        p = int(p)
        if p not in owner:
            continue
        seed_facet = owner.pop(p)
        # flood the visible region from the conflict facet
        vis_set = {seed_facet}
        stack = [seed_facet]
        while stack:
            f = stack.pop()
            verts = facets[f]
            for j in range(d):
                for g in ridges[verts[:j] + verts[j + 1:]]:
                    if g not in vis_set and visible(g, np.array([p]))[0]:
                        vis_set.add(g)
                        stack.append(g)
        horizon = []
        for f in vis_set:
            verts = facets[f]
            for j in range(d):
                r = verts[:j] + verts[j + 1:]
                if len(ridges[r] - vis_set) == 1:
                    horizon.append(r)
        orphans = set()
        for f in vis_set:
            orphans |= conflicts.pop(f)
        orphans.discard(p)
        for q in orphans:
            owner.pop(q, None)
        for f in vis_set:
            remove_facet(f)
        new_ids = [add_facet(r + (p,)) for r in horizon]
        assign(np.array(sorted(orphans), dtype=np.intp), new_ids)

    rows = np.array(sorted(facets.values()), dtype=np.intp)
    eq = np.empty((len(rows), d + 1))
    for i, f in enumerate(rows):
        verts = points[f]
        a = verts[1:] - verts[0]
        _, _, vt = np.linalg.svd(a)
        normal = vt[-1]
        off = -normal @ verts[0]
        if normal @ interior + off > 0:
            normal, off = -normal, -off
        eq[i, :-1] = normal
        eq[i, -1] = off
    vertices = np.unique(rows)
    return HullComplex(d, n, vertices, rows, eq, True, "incremental")
