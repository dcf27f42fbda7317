"""Independent reference computations used by the tests.

None of these call into the solver or the facet machinery of the package;
they only use the raw vertex lists.
"""
from __future__ import annotations

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import ConvexHull


def constraint_null_vector(V: np.ndarray) -> np.ndarray:
    """Unit vector spanning ``{q : sum q = 0, sum q_k v_k = 0}`` (must be 1-D)."""
    M = np.vstack([V.T, np.ones(len(V))])
    _, s, vt = np.linalg.svd(M)
    rank = int((s > 1e-10 * s[0]).sum())
    if vt.shape[0] - rank != 1:
        raise ValueError("representation family is not one-dimensional")
    return vt[-1]


def brute_force_weights(V, x, iters: int = 200) -> np.ndarray:
    """Maximize ``sum log p`` over the one-parameter family of representations.

    ``p(t) = p0 + t q`` with ``p0`` a particular solution and ``q`` the null
    vector.  The objective is strictly concave in ``t``; its derivative
    ``sum q / p(t)`` is bisected on the interval where ``p(t) > 0``.
    """
    V = np.asarray(V, dtype=float)
    x = np.asarray(x, dtype=float)
    M = np.vstack([V.T, np.ones(len(V))])
    p0 = np.linalg.lstsq(M, np.append(x, 1.0), rcond=None)[0]
    q = constraint_null_vector(V)
    pos, neg = q > 0, q < 0
    lo = np.max(-p0[pos] / q[pos]) if pos.any() else -np.inf
    hi = np.min(-p0[neg] / q[neg]) if neg.any() else np.inf
    if not lo < hi:
        raise ValueError("point is not interior")

    def slope(t):
        return float((q / (p0 + t * q)).sum())

    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if slope(mid) > 0:
            lo = mid
        else:
            hi = mid
    return p0 + 0.5 * (lo + hi) * q


def affine_barycentric(V, x) -> np.ndarray:
    """Barycentric coordinates of ``x`` in a simplex with vertex rows ``V``."""
    V = np.asarray(V, dtype=float)
    M = np.vstack([V.T, np.ones(len(V))])
    return np.linalg.solve(M, np.append(np.asarray(x, dtype=float), 1.0))


def hull_contains(V, x, tol: float = 0.0) -> bool:
    """Containment through scipy's Qhull equations (full-dimensional hulls)."""
    hull = ConvexHull(np.asarray(V, dtype=float))
    return bool(np.all(hull.equations[:, :-1] @ x + hull.equations[:, -1] <= tol))


def bisect_exit(V, x, xi, iters: int = 200) -> float:
    """Distance from ``x`` to the hull boundary along ``xi``, by bisection."""
    V = np.asarray(V, dtype=float)
    u = np.asarray(xi, dtype=float) / np.linalg.norm(xi)
    hull = ConvexHull(V)
    A, b = hull.equations[:, :-1], hull.equations[:, -1]

    def inside(t):
        return bool(np.all(A @ (x + t * u) + b <= 0.0))

    lo, hi = 0.0, 1.0
    while inside(hi):
        hi *= 2.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if inside(mid):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def sampled_edge_distance(V_ordered, x, per_edge: int = 200001,
                          extend: float = 3.0) -> np.ndarray:
    """Distance to each polygon edge line as the minimum over dense samples.

    Each edge ``(V[i], V[i+1])`` of the cyclically ordered vertex list is
    sampled on ``[-extend, 1 + extend]`` in its own parameter, so the foot of
    the perpendicular is covered for interior points of reasonable shapes.
    """
    V = np.asarray(V_ordered, dtype=float)
    t = np.linspace(-extend, 1.0 + extend, per_edge)[:, None]
    out = []
    for i in range(len(V)):
        a, b = V[i], V[(i + 1) % len(V)]
        pts = a + t * (b - a)
        out.append(float(np.linalg.norm(pts - x, axis=1).min()))
    return np.array(out)


def lp_in_hull(V, x) -> bool:
    """Is ``x`` a convex combination of the rows of ``V``?  (LP feasibility)"""
    V = np.asarray(V, dtype=float)
    n = len(V)
    A = np.vstack([V.T, np.ones(n)])
    b = np.append(np.asarray(x, dtype=float), 1.0)
    res = linprog(np.zeros(n), A_eq=A, b_eq=b, bounds=[(0, None)] * n, method="highs")
    return res.status == 0


def fd_gradients(solve, x, h: float = 1e-5):
    """Central differences of ``x -> (p, lam)`` along each coordinate axis.

    ``solve`` returns ``(weights, dual)``; the result is ``(dp, dlam)`` with
    ``dp[k, i] = d p_k / d x_i`` and ``dlam[j, i] = d lam_j / d x_i``.
    """
    x = np.asarray(x, dtype=float)
    cols_p, cols_l = [], []
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = h
        pp, lp = solve(x + e)
        pm, lm = solve(x - e)
        cols_p.append((pp - pm) / (2 * h))
        cols_l.append((lp - lm) / (2 * h))
    return np.array(cols_p).T, np.array(cols_l).T


def regular_hexagon_jitter(rng, angle_jitter: float = 0.3, radius=(0.7, 1.3)) -> np.ndarray:
    """Shape-regular random convex hexagon (retries until convex)."""
    while True:
        ang = 2 * np.pi * np.arange(6) / 6 + rng.uniform(-angle_jitter, angle_jitter, 6)
        r = rng.uniform(*radius, 6)
        V = np.c_[r * np.cos(ang), r * np.sin(ang)] + rng.normal(size=2)
        if _strictly_convex(V):
            return V


def _strictly_convex(V) -> bool:
    n = len(V)
    signs = []
    for i in range(n):
        a, b, c = V[i], V[(i + 1) % n], V[(i + 2) % n]
        signs.append((b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0]))
    signs = np.array(signs)
    return bool(np.all(signs > 1e-3) or np.all(signs < -1e-3))


def random_triangle(rng) -> np.ndarray:
    """Random triangle with all angles bounded away from zero."""
    while True:
        V = rng.normal(size=(3, 2))
        e = [V[(i + 1) % 3] - V[i] for i in range(3)]
        area = 0.5 * abs(e[0][0] * e[1][1] - e[0][1] * e[1][0])
        if area > 0.2 * max(np.linalg.norm(v) for v in e) ** 2:
            return V
