"""Independent brute-force oracles used by the tests.

None of these touch Qhull or the package's hull code: planar hulls come from a
monotone chain, extremality from linear feasibility, and the lifted/festoon
structure from enumerating every down paraboloid through d points.
"""

from __future__ import annotations

import itertools

import numpy as np
from scipy.optimize import linprog


def monotone_chain(points: np.ndarray) -> np.ndarray:
    """Sorted indices of the strict vertices of a planar convex hull."""
    order = sorted(range(len(points)), key=lambda i: (points[i, 0], points[i, 1]))

    def cross(o, a, b):
        return (points[a, 0] - points[o, 0]) * (points[b, 1] - points[o, 1]) - \
               (points[a, 1] - points[o, 1]) * (points[b, 0] - points[o, 0])

    def half(seq):
        chain = []
        for i in seq:
            while len(chain) >= 2 and cross(chain[-2], chain[-1], i) <= 0:
                chain.pop()
            chain.append(i)
        return chain

    lower, upper = half(order), half(order[::-1])
    return np.array(sorted(set(lower[:-1] + upper[:-1])), dtype=int)


def in_hull_of_others(points: np.ndarray, i: int) -> bool:
    """Whether point i is a convex combination of the other points (LP feasibility)."""
    others = np.delete(points, i, axis=0)
    n = len(others)
    a_eq = np.vstack([others.T, np.ones(n)])
    b_eq = np.append(points[i], 1.0)
    res = linprog(np.zeros(n), A_eq=a_eq, b_eq=b_eq, bounds=[(0, None)] * n, method="highs")
    return res.status == 0


def lp_extreme_mask(points: np.ndarray) -> np.ndarray:
    return np.array([not in_hull_of_others(points, i) for i in range(len(points))])


def lifted_supported(spatial: np.ndarray, z: np.ndarray, i: int) -> bool:
    """Whether some affine function lies below every lift and touches only lift i.

    Maximises the minimal gap t over the other points; i is a lower-hull
    vertex iff the optimum is positive.
    """
    n, m = spatial.shape
    if n == 1:
        return True
    # variables (a_1..a_m, b, t); maximise t
    c = np.zeros(m + 2)
    c[-1] = -1.0
    others = [j for j in range(n) if j != i]
    a_ub = np.column_stack([spatial[others], np.ones(n - 1), np.ones(n - 1)])
    b_ub = z[others]
    a_eq = np.append(np.append(spatial[i], 1.0), 0.0)[None, :]
    bounds = [(None, None)] * (m + 1) + [(None, 1.0)]
    res = linprog(c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=[z[i]], bounds=bounds, method="highs")
    return res.status == 0 and -res.fun > 1e-9


def empty_grain_facets(v: np.ndarray, h: np.ndarray, tol: float = 1e-10) -> list[tuple[int, ...]]:
    """All d-subsets whose down paraboloid h0 - |w - w0|^2/2 is empty of other points.

    The paraboloid through m+1 = d points is found by solving for (w0, c) in
    h_j = c + <w0, v_j> - |v_j|^2/2 with c = h0 - |w0|^2/2.
    """
    n, m = v.shape
    sq = 0.5 * np.sum(v ** 2, axis=1)
    combos = np.array(list(itertools.combinations(range(n), m + 1)), dtype=int).reshape(-1, m + 1)
    a = np.concatenate([v[combos], np.ones(combos.shape + (1,))], axis=2)
    rhs = (h + sq)[combos]
    good = np.abs(np.linalg.det(a)) > 1e-14
    sol = np.linalg.solve(a[good], rhs[good][..., None])[..., 0]
    combos = combos[good]
    w0, c = sol[:, :m], sol[:, m]
    top = c[:, None] + w0 @ v.T - sq[None, :]  # grain height above every v_j
    member = np.zeros(top.shape, dtype=bool)
    np.put_along_axis(member, combos, True, axis=1)
    empty = np.all(member | (h[None, :] > top - tol), axis=1)
    return [tuple(row) for row in combos[empty]]


def grain_oracle(v: np.ndarray, h: np.ndarray):
    """(Ext mask, {k: incidence}) of a cloud in general position by grain enumeration."""
    n, m = v.shape
    if n <= m:
        ext = np.ones(n, dtype=bool)
        inc = {k: np.full(n, len(list(itertools.combinations(range(n - 1), k)))) for k in range(m + 1)}
        return ext, inc
    facets = empty_grain_facets(v, h)
    ext = np.zeros(n, dtype=bool)
    inc = {}
    for k in range(m + 1):
        faces = {sub for f in facets for sub in itertools.combinations(f, k + 1)}
        counts = np.zeros(n, dtype=int)
        for face in faces:
            counts[list(face)] += 1
        inc[k] = counts
    ext[inc[0] > 0] = True
    return ext, inc


def random_rescaled(rng: np.random.Generator, d: int, n: int, L: float = 3.0, H: float = 4.0):
    v = rng.uniform(-L, L, size=(n, d - 1))
    h = rng.uniform(0.0, H, size=n)
    return v, h
