"""Exception types raised by polybary."""


class PolybaryError(Exception):
    """Base class for all library errors."""


class PolytopeError(PolybaryError, ValueError):
    """Invalid polytope data (too few vertices, bad facets, non-convex input)."""


class OutsideError(PolybaryError, ValueError):
    """A point lies outside the polytope or off its affine hull."""


class BoundaryError(PolybaryError, RuntimeError):
    """A point is effectively on the boundary, where the interior solver does not apply."""


class ConvergenceError(PolybaryError, RuntimeError):
    """The Newton iteration did not reach the residual tolerance."""


class SingularJacobianError(PolybaryError, RuntimeError):
    """The dual Jacobian is numerically singular (degenerate vertex set)."""
