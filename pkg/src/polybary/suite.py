"""Randomized verification of a polytope: every identity and bound at many points."""
from __future__ import annotations

import numpy as np

from .barrier import SolverOptions, WeightSolution, check_recursion, solve_weights
from .calculus import (BOUND_TOL, Report, boundary_ratio_study, check_gradient_bounds,
                       check_hessian_identity, check_vertex_direction_identities,
                       check_representation_identity, differentiate, random_representation,
                       vertex_limit_check)
from .polytope import Polytope

PARTITION_TOL = 1e-10
GRADIENT_SUM_TOL = 1e-9
RECURSION_TOL = 1e-8


def interior_samples(P: Polytope, count: int, rng, concentration: float = 2.0) -> np.ndarray:
    """Random interior points (ambient) as Dirichlet mixtures of the vertices."""
    W = rng.dirichlet(np.full(P.n, concentration), size=count)
    return W @ P.vertices


def point_report(P: Polytope, sol: WeightSolution, rng,
                 opts: SolverOptions | None = None) -> Report:
    """All pointwise checks at one interior solution."""
    rep = Report()
    p = sol.weights
    A = P.chart_vertices
    rep.add("partition", abs(p.sum() - 1.0), PARTITION_TOL)
    rep.add("reproduction", np.linalg.norm(p @ A - sol.x) / P.scale, PARTITION_TOL)

    der = differentiate(P, sol)
    G = der.grad_p
    gscale = max(1.0, float(np.abs(G).max()) * P.scale)
    rep.add("gradient_sum", np.abs(G.sum(axis=0)).max() / gscale, GRADIENT_SUM_TOL)
    moment = A.T @ G - np.eye(P.d)
    rep.add("gradient_moment", np.abs(moment).max() / gscale, GRADIENT_SUM_TOL)

    rep.merge(check_hessian_identity(P, der))
    q = random_representation(P, sol, rng)
    rep.merge(check_representation_identity(P, sol, q))
    rep.merge(check_vertex_direction_identities(P, sol, der, rng=rng))
    if P.has_facets:
        bounds = check_gradient_bounds(P, sol, der, rng=rng)
        rep.merge(bounds)
        rep.extras["sqrt_ratio"] = bounds.extras["sqrt_ratio"]

    rec = check_recursion(P, sol, opts)
    rep.add("recursion_weights", rec.weight_error, RECURSION_TOL)
    rep.add("recursion_value", rec.value_gap, RECURSION_TOL * max(1.0, abs(sol.barrier)))
    rep.add("recursion_inequality", max(0.0, -rec.inequality_slack), BOUND_TOL,
            slack=rec.inequality_slack)
    if rec.gradient_error is not None:
        rep.add("recursion_gradient", rec.gradient_error, RECURSION_TOL)
    return rep


def verify_polytope(P: Polytope, samples: int = 20, seed: int = 0,
                    opts: SolverOptions | None = None) -> Report:
    """Run the pointwise checks at ``samples`` random interior points.

    Polytopes with facets additionally get the vertex-limit check and the
    boundary-approach stability study.  Failed solves are recorded as a
    failing ``solve`` entry rather than raised.
    """
    rng = np.random.default_rng(seed)
    rep = Report()
    failures = []
    best_ratio = 0.0
    for i, x in enumerate(interior_samples(P, samples, rng)):
        try:
            sol = solve_weights(P, x, opts)
            one = point_report(P, sol, rng, opts)
        except (ArithmeticError, RuntimeError, ValueError) as exc:
            failures.append({"sample": i, "error": f"{type(exc).__name__}: {exc}"})
            continue
        best_ratio = max(best_ratio, one.extras.get("sqrt_ratio", 0.0))
        rep.merge(one)
    rep.add("solve", float(len(failures)), 0.0, failures=failures)
    if P.has_facets:
        rep.merge(vertex_limit_check(P, opts=opts))
        rep.merge(boundary_ratio_study(P, opts=opts))
        rep.extras["sqrt_ratio"] = best_ratio
    rep.extras["samples"] = samples
    rep.extras["seed"] = seed
    return rep
