"""Log-barrier weights on a polytope.

For an interior point ``x`` the weights ``p_1..p_n`` maximise ``sum(log p)``
over all convex combinations ``sum p_k a_k = x``.  The maximiser has the form
``p_k = 1 / (n - (x - a_k, lam))`` where the dual vector ``lam`` (the gradient
of the optimal value ``U``) solves

    F(lam) = sum_k p_k(lam) (x - a_k) = 0.

``F`` is the gradient of the convex function ``-sum_k log(n - (x - a_k, lam))``
and its Jacobian ``sum_k p_k^2 (x - a_k)(x - a_k)^T`` is positive definite as
long as the vertices affinely span the chart, so damped Newton started from
``lam = 0`` (uniform weights) converges.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .errors import (BoundaryError, ConvergenceError, OutsideError, PolybaryError,
                     SingularJacobianError)
from .polytope import FACET_TOL, Polytope, build_polytope, minimal_face

log = logging.getLogger(__name__)

MIN_WEIGHT = 1e-12
ARMIJO = 1e-4
ROUNDING_ULPS = 4.0   # |F| within this many ulps of its terms is rounding noise


@dataclass(frozen=True)
class SolverOptions:
    """Newton solver settings.

    ``tol`` is the residual tolerance on ``|F|`` (relative to the polytope's
    length scale); ``None`` means ``1e-12 * n``.
    """

    tol: float | None = None
    max_iter: int = 100
    fraction_to_boundary: float = 0.99
    boundary_eps: float = 1e-9

    def __post_init__(self):
        if not 0.0 < self.fraction_to_boundary < 1.0:
            raise ValueError("fraction_to_boundary must lie in (0, 1)")
        if self.tol is not None and self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.boundary_eps < 0:
            raise ValueError("boundary_eps must be >= 0")

    def tolerance(self, n: int) -> float:
        return self.tol if self.tol is not None else 1e-12 * n


DEFAULT_OPTIONS = SolverOptions()


@dataclass(frozen=True, eq=False)
class WeightSolution:
    """Weights of one point.

    ``x`` and ``lam`` are chart coordinates.  For points on the boundary
    ``face`` lists the vertices of the face that was solved on; off-face
    weights are zero and ``lam`` is the face-relative dual vector.
    """

    x: np.ndarray
    lam: np.ndarray
    weights: np.ndarray
    barrier: float
    residual: float
    iterations: int
    point: np.ndarray
    face: tuple[int, ...] | None = None

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    @property
    def interior(self) -> bool:
        return self.face is None

    def as_dict(self, P: Polytope | None = None) -> dict:
        lam = self.lam if P is None else P.basis @ self.lam
        doc = {
            "x": self.point.tolist(),
            "lambda": lam.tolist(),
            "p": self.weights.tolist(),
            "U": self.barrier,
            "residual": self.residual,
            "iterations": self.iterations,
        }
        if self.face is not None:
            doc["face"] = list(self.face)
        return doc


def dual_residual(P: Polytope, x_chart, lam) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(F(lam, x), p(lam))`` in chart coordinates."""
    X = np.asarray(x_chart) - P.chart_vertices
    g = P.n - X @ lam
    p = 1.0 / g
    return X.T @ p, p


def _check_interior(P: Polytope, xc: np.ndarray, opts: SolverOptions):
    if not P.has_facets:
        return
    dist = P.offsets - P.normals @ xc
    j = int(dist.argmin())
    if dist[j] < -FACET_TOL * P.scale:
        raise OutsideError(f"point is outside the polytope (facet {j}, by {-dist[j]:.3g})")
    if dist[j] <= opts.boundary_eps * P.scale:
        raise BoundaryError(f"point is within {dist[j]:.3g} of facet {j}")


def solve_weights(P: Polytope, x, opts: SolverOptions | None = None,
                  lambda0=None) -> WeightSolution:
    """Weights of an interior point ``x`` (ambient coordinates)."""
    opts = opts or DEFAULT_OPTIONS
    x = np.asarray(x, dtype=float).reshape(-1)
    xc = P.to_chart(x)
    _check_interior(P, xc, opts)
    n = P.n
    X = xc - P.chart_vertices
    tol = opts.tolerance(n) * P.scale
    tau = opts.fraction_to_boundary

    lam = np.zeros(P.d) if lambda0 is None else np.array(lambda0, dtype=float).reshape(P.d)
    g = n - X @ lam
    if np.any(g <= 0):
        raise ValueError("starting dual vector is infeasible (some n - (x - a_k, lam) <= 0)")

    def merit(gv):
        return -np.log(gv).sum()

    it = 0
    while True:
        p = 1.0 / g
        F = X.T @ p
        res = float(np.linalg.norm(F))
        # sum p = 1 + (lam, F) / n, so a small F with a diverging lam is not
        # stationarity; this happens when x is outside or on the boundary.
        if res <= tol and abs(p.sum() - 1.0) <= opts.tolerance(n):
            break
        if p.min() < MIN_WEIGHT:
            raise BoundaryError(f"weights collapsed to {p.min():.3g}: point is effectively "
                                "on the boundary (or outside)")
        if it >= opts.max_iter:
            raise ConvergenceError(f"no convergence after {it} iterations (|F| = {res:.3g})")
        J = (X * (p ** 2)[:, None]).T @ X
        try:
            delta = -cho_solve(cho_factor(J), F)
        except LinAlgError as exc:
            raise SingularJacobianError("dual Jacobian is singular") from exc
        if not np.all(np.isfinite(delta)):
            raise SingularJacobianError("dual Jacobian is singular")

        s = X @ delta
        gmin = g.min()
        ahead = s > 0
        alpha = 1.0
        if ahead.any():
            alpha = min(1.0, float(((g[ahead] - (1.0 - tau) * gmin) / s[ahead]).min()))
        slope = F @ delta
        phi = merit(g)
        for _ in range(60):
            g_new = g - alpha * s
            if np.all(g_new > 0):
                F_new = X.T @ (1.0 / g_new)
                if (np.linalg.norm(F_new) < res
                        or merit(g_new) <= phi + ARMIJO * alpha * slope):
                    break
            alpha *= 0.5
        else:
            raise ConvergenceError(f"line search failed at iteration {it} (|F| = {res:.3g})")
        lam = lam + alpha * delta
        g = g_new
        it += 1

    p = 1.0 / g
    floor = ROUNDING_ULPS * n * np.finfo(float).eps * float(np.linalg.norm(np.abs(X).T @ p))
    if res > floor:
        # one more full Newton step: inside the quadratic region it takes the
        # weights from ~tol to rounding level at the cost of a d x d solve.
        # It matters near the boundary, where sum p - 1 = (lam, F) / n and
        # lam is large.  Skipped when F is rounding noise already.
        J = (X * (p ** 2)[:, None]).T @ X
        try:
            delta = -cho_solve(cho_factor(J), X.T @ p)
        except LinAlgError:
            delta = None
        if delta is not None and np.all(np.isfinite(delta)):
            g_new = g - X @ delta
            if np.all(g_new > 0):
                res_new = float(np.linalg.norm(X.T @ (1.0 / g_new)))
                if res_new < res:
                    lam, g, res = lam + delta, g_new, res_new
    log.debug("converged in %d iterations, |F| = %.3g", it, res)
    p = 1.0 / g
    return WeightSolution(x=xc, lam=lam, weights=p, barrier=float(np.log(p).sum()),
                          residual=res, iterations=it, point=x)


def barrier_value(P: Polytope, x, opts: SolverOptions | None = None) -> float:
    """``U(x) = max sum(log p)``; always ``<= 0``."""
    return solve_weights(P, x, opts).barrier


def _face_solution(P: Polytope, x, face: list[int], opts: SolverOptions) -> WeightSolution:
    n = P.n
    if len(face) == 1:
        p = np.zeros(n)
        p[face[0]] = 1.0
        return WeightSolution(x=P.to_chart(x, check=False), lam=np.zeros(P.d), weights=p,
                              barrier=float("-inf"), residual=0.0, iterations=0,
                              point=np.asarray(x, dtype=float), face=(face[0],))
    sub = build_polytope(P.vertices[face], name=f"{P.name}:face")
    xs = sub.to_ambient(sub.to_chart(x, check=False))
    sol = weights_on_closure(sub, xs, opts)
    p = np.zeros(n)
    p[face] = sol.weights
    lam = P.basis.T @ (sub.basis @ sol.lam)
    inner = tuple(face[i] for i in sol.face) if sol.face is not None else tuple(face)
    return WeightSolution(x=P.to_chart(x, check=False), lam=lam, weights=p,
                          barrier=float("-inf"), residual=sol.residual,
                          iterations=sol.iterations, point=np.asarray(x, dtype=float),
                          face=inner)


def weights_on_closure(P: Polytope, x, opts: SolverOptions | None = None) -> WeightSolution:
    """Weights of any point of the closed polytope.

    Interior points go straight to :func:`solve_weights`.  Boundary points are
    solved on the smallest face containing them, with zero weight on every
    other vertex; this is the continuous extension of the interior weights.
    """
    opts = opts or DEFAULT_OPTIONS
    x = np.asarray(x, dtype=float).reshape(-1)
    xc = P.to_chart(x)
    if P.has_facets:
        dist = P.offsets - P.normals @ xc
        eps = opts.boundary_eps * P.scale
        if dist.min() < -max(eps, FACET_TOL * P.scale):
            raise OutsideError(f"point is outside the polytope (facet {int(dist.argmin())})")
        if dist.min() > eps:
            return solve_weights(P, x, opts)
        active = dist <= eps
        tight = (P.chart_vertices @ P.normals[active].T
                 >= P.offsets[active] - max(eps, FACET_TOL * P.scale))
        face = [int(k) for k in np.flatnonzero(tight.all(axis=1))]
        if not face:
            raise OutsideError("no vertex lies on the active facets")
        return _face_solution(P, x, face, opts)
    try:
        return solve_weights(P, x, opts)
    except (BoundaryError, ConvergenceError):
        face = minimal_face(P, x)
    if not face:
        raise OutsideError("point is outside the polytope")
    if len(face) == P.n:
        # LP says the point is interior; the Newton failure was numerical.
        raise BoundaryError("point is too close to the boundary to resolve its face")
    return _face_solution(P, x, face, opts)


def batch_solve(P: Polytope, points, opts: SolverOptions | None = None,
                closure: bool = False, workers: int | None = None) -> list:
    """Solve many points independently.

    Returns a list aligned with ``points``; failed points carry the exception
    instance instead of a :class:`WeightSolution`.
    """
    solver = weights_on_closure if closure else solve_weights

    def one(pt):
        try:
            return solver(P, pt, opts)
        except (PolybaryError, ValueError) as exc:
            return exc

    pts = list(points)
    if workers and workers > 1 and len(pts) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(one, pts))
    return [one(pt) for pt in pts]


@dataclass(frozen=True)
class RecursionCheck:
    """Comparison of the weights with those of the polytope without ``a_1``."""

    weight_error: float
    value_gap: float
    inequality_slack: float
    gradient_error: float | None


def check_recursion(P: Polytope, sol: WeightSolution,
                    opts: SolverOptions | None = None) -> RecursionCheck:
    """Check the first-vertex reduction at an interior solution.

    With the first vertex at the chart origin and ``t = 1 / (1 - p_1(x))``:

    * ``p_k(x) = (1 - p_1) * pbar_k(t x)`` for ``k >= 2``, where ``pbar``
      are the weights of the hull of the remaining vertices;
    * ``Ubar(t x) - n log t + log(t - 1) = U(x)``, and ``<=`` for other
      admissible ``t`` (``inequality_slack`` is the smallest gap found);
    * when the remaining vertices still span the chart,
      ``t * grad Ubar(t x) = grad U(x)``.
    """
    opts = opts or DEFAULT_OPTIONS
    if not sol.interior:
        raise BoundaryError("recursion check needs an interior solution")
    n = P.n
    p = sol.weights
    x = sol.x
    A = P.chart_vertices
    if n == 2:
        return RecursionCheck(abs(p[1] - (1.0 - p[0])), 0.0, 0.0, None)
    t = 1.0 / (1.0 - p[0])
    rest = build_polytope(A[1:], name="rest")
    y = t * x
    sub = solve_weights(rest, y, opts)
    weight_error = float(np.abs(p[1:] - (1.0 - p[0]) * sub.weights).max())

    def lhs(tt, Ubar):
        return Ubar - n * np.log(tt) + np.log(tt - 1.0)

    value_gap = abs(lhs(t, sub.barrier) - sol.barrier)

    slack = np.inf
    for f in (0.98, 0.995, 1.005, 1.02):
        tt = t * f
        if tt <= 1.0:
            continue
        try:
            ub = solve_weights(rest, tt * x, opts).barrier
        except (PolybaryError, ValueError):
            continue
        slack = min(slack, sol.barrier - lhs(tt, ub))

    gradient_error = None
    if rest.d == P.d:
        grad_rest = rest.basis @ sub.lam
        scale = max(1.0, float(np.linalg.norm(sol.lam)))
        gradient_error = float(np.linalg.norm(t * grad_rest - sol.lam) / scale)
    return RecursionCheck(weight_error, float(value_gap), float(slack), gradient_error)
