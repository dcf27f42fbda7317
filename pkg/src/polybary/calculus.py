"""Derivatives of the barrier weights and numerical checks of their identities.

Derivatives come from implicit differentiation of ``F(lam(x), x) = 0``:

    D lam = -J^{-1} dF/dx,   dF/dx = (sum p) I + (sum_k p_k^2 (x - a_k)) lam^T,

so that ``hess U = D lam`` and ``grad p_k = p_k^2 (lam + hess U (x - a_k))``.

Every ``check_*`` function returns a :class:`Report`; each entry compares the
two sides of one identity or inequality over a fixed set of probe directions.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, null_space

from .barrier import (SolverOptions, WeightSolution, solve_weights,
                      weights_on_closure)
from .errors import OutsideError, SingularJacobianError
from .polytope import (FACET_TOL, Polytope, facet_distances, ray_exit_distance,
                       two_sided_exit)

IDENTITY_TOL = 1e-7
BOUND_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class WeightDerivatives:
    """``grad_p[k]`` is the chart gradient of ``p_k``; ``hess_U`` is ``D^2 U``."""

    grad_p: np.ndarray
    hess_U: np.ndarray
    base: WeightSolution

    def directional(self, xi) -> np.ndarray:
        """``p_{k(xi)}`` for all k."""
        return self.grad_p @ np.asarray(xi, dtype=float)

    def second(self, xi, eta=None) -> float:
        eta = xi if eta is None else eta
        return float(np.asarray(xi) @ self.hess_U @ np.asarray(eta))


@dataclass
class CheckResult:
    name: str
    worst: float
    tol: float
    passed: bool
    detail: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"name": self.name, "worst": _jsonable(self.worst), "tol": self.tol,
                "passed": bool(self.passed), **{k: _jsonable(v) for k, v in self.detail.items()}}


def _jsonable(v):
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if np.isfinite(v) else None
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.ndarray):
        return [_jsonable(a) for a in v.tolist()]
    if isinstance(v, (list, tuple)):
        return [_jsonable(a) for a in v]
    return v


@dataclass
class Report:
    checks: list[CheckResult] = field(default_factory=list)
    extras: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> CheckResult:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def add(self, name, worst, tol, passed=None, **detail):
        worst = float(worst)
        if passed is None:
            passed = bool(np.isfinite(worst) and worst <= tol)
        self.checks.append(CheckResult(name, worst, tol, passed, detail))

    def merge(self, other: "Report") -> "Report":
        """Fold ``other`` in, keeping the worst result per check name."""
        for c in other.checks:
            try:
                mine = self[c.name]
            except KeyError:
                self.checks.append(CheckResult(c.name, c.worst, c.tol, c.passed, dict(c.detail)))
                continue
            if c.worst > mine.worst or (mine.passed and not c.passed):
                mine.worst, mine.detail = c.worst, dict(c.detail)
            mine.passed = mine.passed and c.passed
        return self

    def as_dict(self) -> dict:
        return {"passed": self.passed, "checks": [c.as_dict() for c in self.checks],
                **{k: _jsonable(v) for k, v in self.extras.items()}}


def _rel(lhs, rhs, *terms) -> float:
    """Relative discrepancy, scaled by the largest magnitude involved."""
    scale = max([abs(lhs), abs(rhs)] + [abs(t) for t in terms])
    return 0.0 if scale == 0.0 else abs(lhs - rhs) / scale


def probe_directions(d: int, count: int = 8, seed: int = 0) -> np.ndarray:
    """Chart basis vectors followed by ``count`` random unit vectors."""
    rng = np.random.default_rng(seed)
    R = rng.normal(size=(count, d))
    R /= np.linalg.norm(R, axis=1, keepdims=True)
    return np.vstack([np.eye(d), R])


def differentiate(P: Polytope, sol: WeightSolution) -> WeightDerivatives:
    """Analytic ``grad p_k`` and ``hess U`` at an interior solution."""
    if not sol.interior:
        raise OutsideError("derivatives exist only at interior points")
    p, lam = sol.weights, sol.lam
    X = sol.x - P.chart_vertices
    p2 = p ** 2
    J = (X * p2[:, None]).T @ X
    dFdx = p.sum() * np.eye(P.d) + np.outer(X.T @ p2, lam)
    try:
        Dlam = -np.linalg.solve(J, dFdx)
    except LinAlgError as exc:
        raise SingularJacobianError("dual Jacobian is singular") from exc
    grad_p = p2[:, None] * (lam[None, :] + X @ Dlam)
    H = 0.5 * (Dlam + Dlam.T)
    return WeightDerivatives(grad_p, H, sol)


def affine_null_space(P: Polytope) -> np.ndarray:
    """Basis (columns) of ``{q : sum q = 0, sum q_k a_k = 0}``."""
    M = np.vstack([P.chart_vertices.T, np.ones(P.n)])
    return null_space(M)


def random_representation(P: Polytope, sol: WeightSolution, rng, scale: float = 1.0) -> np.ndarray:
    """Random affine representation ``q`` of ``sol.x`` (``sum q = 1``)."""
    N = affine_null_space(P)
    if N.shape[1] == 0:
        return sol.weights.copy()
    return sol.weights + N @ (scale * rng.normal(size=N.shape[1]))


def _validate_representation(P: Polytope, sol: WeightSolution, q: np.ndarray, total: float):
    if q.shape != (P.n,):
        raise ValueError(f"q must have {P.n} entries")
    if abs(q.sum() - total) > 1e-10 * max(1.0, np.abs(q).sum()):
        raise ValueError(f"q must sum to {total}")


def check_hessian_identity(P: Polytope, der: WeightDerivatives, probes=None,
                           tol: float = IDENTITY_TOL) -> Report:
    """``xi^T hess U xi = -sum_k (p_{k(xi)} / p_k)^2`` on probe directions."""
    probes = probe_directions(P.d) if probes is None else np.atleast_2d(probes)
    p = der.base.weights
    worst = 0.0
    for xi in probes:
        lhs = der.second(xi)
        terms = (der.directional(xi) / p) ** 2
        worst = max(worst, _rel(lhs, -terms.sum(), *terms))
    rep = Report()
    rep.add("hessian_identity", worst, tol)
    return rep


def check_representation_identity(P: Polytope, sol: WeightSolution, q,
                                  tol: float | None = None) -> Report:
    """For any ``q`` with ``sum q = 1`` and ``sum q_k a_k = x``: ``sum q_k / p_k = n``."""
    q = np.asarray(q, dtype=float)
    _validate_representation(P, sol, q, 1.0)
    repro = np.linalg.norm(q @ P.chart_vertices - sol.x)
    if repro > 1e-10 * (1.0 + np.linalg.norm(sol.x)) * max(1.0, np.abs(q).max()):
        raise ValueError("q does not reproduce the point")
    tol = IDENTITY_TOL * P.n if tol is None else tol
    rep = Report()
    rep.add("representation_identity", abs((q / sol.weights).sum() - P.n), tol)
    return rep


def check_gradient_bounds(P: Polytope, sol: WeightSolution, der: WeightDerivatives,
                          probes=None, rng=None, tol: float = BOUND_TOL) -> Report:
    """Evaluate every derivative bound at one interior point.

    Slacks are ``rhs - lhs`` divided by ``max(1, |rhs|)``; a check passes when
    its worst slack is ``>= -tol``.  The extra ``sqrt_ratio`` is the largest
    observed ``(|p_{k(xi)}| / sqrt(p_k)) / max_G(|(n_G, xi)| / sqrt(d_G))``,
    an empirical constant for the square-root gradient estimate.
    """
    P._require_facets()
    probes = probe_directions(P.d) if probes is None else np.atleast_2d(probes)
    rng = np.random.default_rng(0) if rng is None else rng
    n = P.n
    p = sol.weights
    x = sol.x
    xa = P.to_ambient(x)
    A = P.chart_vertices
    N2 = n + 4 * n ** 2
    Nc = np.sqrt(N2)
    G = der.grad_p

    def slack(lhs, rhs):
        return (rhs - lhs) / max(1.0, abs(rhs))

    hess_lb = log_grad = np.inf
    for xi in probes:
        m, _ = two_sided_exit(P, xa, P.basis @ xi)
        nxi = np.linalg.norm(xi)
        hess_lb = min(hess_lb, slack(-der.second(xi), N2 * nxi ** 2 / m ** 2))
        ratios = np.abs(G @ xi) / p
        log_grad = min(log_grad, slack(ratios.max(), Nc * nxi / m))

    vert = np.inf
    for k in range(n):
        vert = min(vert, slack(abs(G[k] @ (A[k] - x)), np.sqrt(n + 1)))

    qs = [np.eye(n)[j] for j in range(n)] + [-np.eye(n)[j] for j in range(n)]
    qs += [rng.normal(size=n) for _ in range(8)]
    quad = np.inf
    for q in qs:
        xi = q @ (A - x)
        lhs = (((G @ xi) / p) ** 2).sum()
        quad = min(quad, slack(lhs, (n + 1) * ((q / p) ** 2).sum()))

    cross = np.inf
    for j in range(n):
        dj = G @ (x - A[j])
        cross = min(cross, min(slack(abs(dj[k]), np.sqrt(n + 1) * p[k] / p[j]) for k in range(n)))

    lower = np.inf
    for k in range(n):
        v = x - A[k]
        r = np.linalg.norm(v)
        if r <= 1e-12 * P.scale:
            continue
        dk, _ = ray_exit_distance(P, xa, P.basis @ v)
        lower = min(lower, slack(dk / (n * dk + n * r), p[k]))

    dist = facet_distances(P, xa)
    normals = P.normals
    best = 0.0
    for xi in probes:
        denom = (np.abs(normals @ xi) / np.sqrt(dist)).max()
        num = (np.abs(G @ xi) / np.sqrt(p)).max()
        if denom > 0:
            best = max(best, num / denom)

    rep = Report(extras={"sqrt_ratio": best})
    for name, val in [("hessian_lower_bound", hess_lb), ("log_gradient_bound", log_grad),
                      ("vertex_direction_bound", vert), ("quadratic_form_bound", quad),
                      ("cross_vertex_bound", cross), ("weight_lower_bound", lower)]:
        rep.add(name, -val, tol, passed=bool(val >= -tol), slack=val)
    rep.add("sqrt_ratio_finite", 0.0 if np.isfinite(best) else np.inf, 0.0,
            passed=bool(np.isfinite(best)), ratio=best)
    return rep


def check_vertex_direction_identities(P: Polytope, sol: WeightSolution, der: WeightDerivatives,
                                      q=None, rng=None, tol: float = IDENTITY_TOL) -> Report:
    """Pythagorean split, refined vertex-direction identity and symmetry.

    * for ``sum q = 0`` and ``xi = sum q_k (a_k - x)``:
      ``sum (q/p)^2 = sum (p_(xi)/p)^2 + sum ((p_(xi) - q)/p)^2``;
    * ``p_{k(x-a_k)} + 1 - p_k = alpha_k p_k^2`` with
      ``alpha_k = sum_i (p_{i(x-a_k)} - q_i)^2 / p_i^2``, ``q = p - e_k``,
      together with ``p_k - 1 <= p_{k(x-a_k)} <= p_k``;
    * ``p_{k(x-a_j)}/p_k^2 + 1/p_j - n = (x-a_k)^T hess U (x-a_j)``, which is
      symmetric in ``j, k``.
    """
    rng = np.random.default_rng(1) if rng is None else rng
    n = P.n
    p = sol.weights
    x = sol.x
    A = P.chart_vertices
    G = der.grad_p
    if q is None:
        qs = [rng.normal(size=n) for _ in range(4)]
        qs = [qq - qq.mean() for qq in qs]
    else:
        q = np.asarray(q, dtype=float)
        _validate_representation(P, sol, q, 0.0)
        qs = [q]

    pyth = 0.0
    for qq in qs:
        xi = qq @ (A - x)
        dp = G @ xi
        t1 = (dp / p) ** 2
        t2 = ((dp - qq) / p) ** 2
        lhs = ((qq / p) ** 2).sum()
        pyth = max(pyth, _rel(lhs, t1.sum() + t2.sum(), *t1, *t2))

    refined = 0.0
    ineq = np.inf
    for k in range(n):
        xi = x - A[k]
        dp = G @ xi
        qk = p - np.eye(n)[k]
        alpha = (((dp - qk) / p) ** 2).sum()
        lhs = dp[k] + 1.0 - p[k]
        rhs = alpha * p[k] ** 2
        refined = max(refined, _rel(lhs, rhs, dp[k], 1.0, p[k]))
        ineq = min(ineq, p[k] - dp[k], dp[k] - (p[k] - 1.0), 1.0 - lhs)

    sym = 0.0
    cross = 0.0
    for k in range(n):
        for j in range(n):
            djk = G[k] @ (x - A[j])
            dkj = G[j] @ (x - A[k])
            a = djk / p[k] ** 2 + 1.0 / p[j]
            b = dkj / p[j] ** 2 + 1.0 / p[k]
            terms = (djk / p[k] ** 2, 1.0 / p[j], dkj / p[j] ** 2, 1.0 / p[k], n)
            sym = max(sym, _rel(a, b, *terms))
            h = der.second(x - A[k], x - A[j])
            cross = max(cross, _rel(a - n, h, *terms))

    rep = Report()
    rep.add("pythagorean_identity", pyth, tol)
    rep.add("refined_vertex_identity", refined, tol)
    rep.add("refined_vertex_inequality", max(0.0, -ineq), BOUND_TOL, slack=ineq)
    rep.add("symmetry_identity", sym, tol)
    rep.add("symmetry_hessian_crosscheck", cross, tol)
    return rep


def vertex_limit_check(P: Polytope, ts=(1e-2, 1e-3, 1e-4),
                       opts: SolverOptions | None = None) -> Report:
    """``U_{(x - a_k)} = n - 1/p_k`` tends to ``n - 1`` as ``x -> a_k``.

    The point moves along ``a_k + t (centroid - a_k)``; each vertex passes if
    the error decreases monotonically in ``t``.  The directional derivative is
    also read off the dual vector as ``(lam, x - a_k)``.
    """
    rep = Report()
    n = P.n
    c = P.to_chart(P.centroid)
    errors = np.zeros((n, len(ts)))
    dual_gap = 0.0
    for k in range(n):
        a = P.chart_vertices[k]
        for i, t in enumerate(ts):
            xc = a + t * (c - a)
            sol = solve_weights(P, P.to_ambient(xc), opts)
            val = n - 1.0 / sol.weights[k]
            dual_gap = max(dual_gap, abs(val - sol.lam @ (xc - a)))
            errors[k, i] = abs(val - (n - 1))
    monotone = bool(np.all(np.diff(errors, axis=1) < 0))
    rep.add("vertex_limit", float(errors[:, -1].max()), float(errors[:, 0].max()),
            passed=monotone, errors=errors)
    rep.add("vertex_limit_dual", dual_gap, 1e-8 * n)
    return rep


@dataclass(frozen=True)
class LipschitzEstimate:
    """Grid estimates of the Lipschitz constants of ``sqrt(p_k(u(y)))``.

    ``curvature`` is the largest second difference of the field along the grid
    axes (chart norm); ``ceiling_shape`` is its square root, the factor the
    theoretical bound scales with.
    """

    constants: np.ndarray
    curvature: float
    ceiling_shape: float
    spacing: float


def _grid_arrays(ys, us):
    ys = np.asarray(ys, dtype=float)
    us = np.asarray(us, dtype=float)
    if us.ndim == 2 and ys.ndim == 1:
        ys = ys[:, None]
    if us.ndim not in (2, 3) or ys.shape[:-1] != us.shape[:-1]:
        raise ValueError("ys and us must share the grid shape (M,) or (M1, M2)")
    return ys, us


def estimate_sqrt_lipschitz(P: Polytope, ys, us, opts: SolverOptions | None = None,
                            weights=None) -> LipschitzEstimate:
    """Lipschitz estimates of ``y -> sqrt(p_k(u(y)))`` from a sampled field.

    ``ys`` holds grid coordinates with shape ``(M,)``/``(M, 1)`` or
    ``(M1, M2, 2)``; ``us`` the ambient field values with the same grid shape
    plus the ambient dimension.  Neighbouring grid nodes along each axis are
    compared; boundary samples are handled by :func:`weights_on_closure`.
    ``weights`` may pass precomputed ``p_k(u(y))`` with the grid shape plus
    ``(n,)``.
    """
    ys, us = _grid_arrays(ys, us)
    grid = us.shape[:-1]
    if weights is None:
        flat = us.reshape(-1, us.shape[-1])
        W = np.empty((flat.shape[0], P.n))
        for i, u in enumerate(flat):
            try:
                W[i] = weights_on_closure(P, u, opts).weights
            except OutsideError as exc:
                raise OutsideError(f"sample {i} is outside the polytope: {exc}") from exc
        W = W.reshape(grid + (P.n,))
    else:
        W = np.asarray(weights, dtype=float).reshape(grid + (P.n,))
    S = np.sqrt(np.clip(W, 0.0, None))
    C = np.array([[P.to_chart(u, check=False) for u in row] for row in us]) \
        if len(grid) == 2 else np.array([P.to_chart(u, check=False) for u in us])

    best = np.zeros(P.n)
    curv = 0.0
    spacing = np.inf
    for axis in range(len(grid)):
        if grid[axis] < 2:
            continue
        Y = np.moveaxis(ys, axis, 0)
        Sa = np.moveaxis(S, axis, 0)
        Ca = np.moveaxis(C, axis, 0)
        dy = np.linalg.norm(np.diff(Y, axis=0), axis=-1)
        if np.any(dy <= 0):
            raise ValueError("grid nodes must be distinct along each axis")
        spacing = min(spacing, float(dy.min()))
        dS = np.abs(np.diff(Sa, axis=0)) / dy[..., None]
        best = np.maximum(best, dS.reshape(-1, P.n).max(axis=0))
        if grid[axis] >= 3:
            slope = np.diff(Ca, axis=0) / dy[..., None]
            d2 = 2.0 * np.diff(slope, axis=0) / (dy[:-1] + dy[1:])[..., None]
            curv = max(curv, float(np.linalg.norm(d2, axis=-1).max()))
    return LipschitzEstimate(best, curv, float(np.sqrt(curv)), spacing)


@dataclass(frozen=True)
class RefinementStudy:
    sizes: tuple[int, ...]
    estimates: np.ndarray  # (len(sizes), n)
    ratios: np.ndarray     # successive max(e_i/e_j, e_j/e_i), per k; nan when ~0
    stable: bool


def sqrt_lipschitz_refinement(P: Polytope, field, lo: float, hi: float,
                              sizes=(1001, 2001, 4001), opts: SolverOptions | None = None,
                              limit: float = 1.05, floor: float = 1e-9) -> RefinementStudy:
    """Run :func:`estimate_sqrt_lipschitz` on nested 1-D grids of ``[lo, hi]``.

    ``field`` maps a scalar ``y`` to an ambient point of ``P``.  Constants
    below ``floor`` are treated as zero and excluded from the ratio test.
    """
    est = []
    for m in sizes:
        ys = np.linspace(lo, hi, m)
        us = np.array([field(y) for y in ys], dtype=float).reshape(m, -1)
        est.append(estimate_sqrt_lipschitz(P, ys, us, opts).constants)
    E = np.array(est)
    ratios = np.full((len(sizes) - 1, P.n), np.nan)
    for i in range(len(sizes) - 1):
        a, b = E[i], E[i + 1]
        ok = (a > floor) & (b > floor)
        ratios[i, ok] = np.maximum(a[ok] / b[ok], b[ok] / a[ok])
        both_zero = (a <= floor) & (b <= floor)
        ratios[i, both_zero] = 1.0
    stable = bool(np.all(np.nan_to_num(ratios, nan=np.inf) <= limit))
    return RefinementStudy(tuple(sizes), E, ratios, stable)



def sqrt_ratio_at(P: Polytope, sol: WeightSolution, der: WeightDerivatives, xi) -> float:
    """``max_k |p_{k(xi)}| / sqrt(p_k)`` over ``max_G |(n_G, xi)| / sqrt(d_G)``."""
    xi = np.asarray(xi, dtype=float)
    dist = facet_distances(P, P.to_ambient(sol.x))
    denom = float((np.abs(P.normals @ xi) / np.sqrt(dist)).max())
    num = float((np.abs(der.grad_p @ xi) / np.sqrt(sol.weights)).max())
    return num / denom if denom > 0 else np.inf


def boundary_ratio_study(P: Polytope, levels=(1e-4, 1e-6), limit: float = 0.05,
                         opts: SolverOptions | None = None) -> Report:
    """Stability of the square-root gradient ratio as a facet is approached.

    For every facet ``G`` the point moves inward along ``-n_G`` from the mean
    of the vertices on ``G`` until ``d_G`` equals each level (times the
    polytope scale), and the ratio of :func:`sqrt_ratio_at` is taken with
    ``xi = n_G``.  The check passes when the ratio is finite everywhere and
    changes by at most ``limit`` (relative) between the first and last level.
    """
    P._require_facets()
    ratios = np.zeros((len(P.facets), len(levels)))
    for j in range(len(P.facets)):
        nrm = P.normals[j]
        on = np.abs(P.chart_vertices @ nrm - P.offsets[j]) <= FACET_TOL * P.scale
        base = P.chart_vertices[on].mean(axis=0)
        for i, level in enumerate(levels):
            xc = base - level * P.scale * nrm
            sol = solve_weights(P, P.to_ambient(xc), opts)
            ratios[j, i] = sqrt_ratio_at(P, sol, differentiate(P, sol), nrm)
    finite = bool(np.all(np.isfinite(ratios)))
    change = float(np.abs(ratios[:, -1] / ratios[:, 0] - 1.0).max()) if finite else np.inf
    rep = Report(extras={"ratios": ratios, "levels": list(levels)})
    rep.add("sqrt_ratio_stability", change, limit, passed=finite and change <= limit,
            max_ratio=float(ratios.max()))
    return rep
