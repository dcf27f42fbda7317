"""Smooth log-barrier barycentric weights on convex polytopes."""
from __future__ import annotations

from .barrier import (SolverOptions, WeightSolution, barrier_value, batch_solve, solve_weights,
                      weights_on_closure)
from .calculus import Report, differentiate, estimate_sqrt_lipschitz
from .errors import (BoundaryError, ConvergenceError, OutsideError, PolybaryError,
                     PolytopeError, SingularJacobianError)
from .matrix import build_matrix_polytope, dd_trace1_polytope, factorize_field
from .polytope import Polytope, build_polytope, load_polytope, make_box, make_polygon, make_simplex
from .stencil import apply_stencil, stencil_at
from .suite import verify_polytope

__all__ = [
    "BoundaryError", "ConvergenceError", "OutsideError", "PolybaryError", "Polytope",
    "PolytopeError", "Report", "SingularJacobianError", "SolverOptions", "WeightSolution",
    "apply_stencil", "barrier_value", "batch_solve", "build_matrix_polytope", "build_polytope",
    "dd_trace1_polytope", "differentiate", "estimate_sqrt_lipschitz", "factorize_field",
    "load_polytope", "make_box", "make_polygon", "make_simplex", "solve_weights", "stencil_at",
    "verify_polytope", "weights_on_closure",
]
