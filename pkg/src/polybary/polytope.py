"""Bounded convex polytopes given by their vertices.

A :class:`Polytope` stores its vertices in ambient coordinates together with an
affine chart of their hull: an origin (the first vertex) and an orthonormal
basis of the span of ``vertices - vertices[0]``.  All computations happen in
chart coordinates, so the vertex set may live in any affine subspace (for
example trace-one symmetric matrices).  When the vertices span the whole
ambient space the basis is the identity and the chart is a pure translation.

Facets are optional.  Weight solving only needs vertices; distance functions
and the bound checks need facets and raise :class:`PolytopeError` without them.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import linprog

from .errors import OutsideError, PolytopeError

DEDUP_TOL = 1e-9
RANK_TOL = 1e-10
FACET_TOL = 1e-9
HULL_TOL = 1e-9


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Facet:
    """Supporting hyperplane ``{w : (normal, w) = offset}`` in chart coordinates.

    ``normal`` is the outward unit normal, so the polytope lies in
    ``(normal, w) <= offset``.
    """

    normal: np.ndarray
    offset: float

    def __post_init__(self):
        object.__setattr__(self, "normal", _frozen(self.normal))
        object.__setattr__(self, "offset", float(self.offset))


@dataclass(frozen=True, eq=False)
class Polytope:
    vertices: np.ndarray
    origin: np.ndarray
    basis: np.ndarray
    facets: tuple[Facet, ...] | None = None
    name: str = ""
    chart_vertices: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        for attr in ("vertices", "origin", "basis"):
            object.__setattr__(self, attr, _frozen(getattr(self, attr)))
        object.__setattr__(self, "chart_vertices",
                           _frozen((self.vertices - self.origin) @ self.basis))

    @property
    def n(self) -> int:
        """Number of vertices."""
        return self.vertices.shape[0]

    @property
    def d(self) -> int:
        """Intrinsic dimension of the affine hull."""
        return self.basis.shape[1]

    @property
    def ambient_dim(self) -> int:
        return self.vertices.shape[1]

    @property
    def diameter(self) -> float:
        V = self.chart_vertices
        diffs = V[:, None, :] - V[None, :, :]
        return float(np.sqrt((diffs ** 2).sum(-1)).max())

    @property
    def scale(self) -> float:
        """Length scale used to make tolerances relative: ``max(1, diameter)``."""
        return max(1.0, self.diameter)

    @property
    def centroid(self) -> np.ndarray:
        """Vertex centroid in ambient coordinates."""
        return self.vertices.mean(axis=0)

    @property
    def has_facets(self) -> bool:
        return self.facets is not None

    @property
    def normals(self) -> np.ndarray:
        self._require_facets()
        return np.array([f.normal for f in self.facets]).reshape(len(self.facets), self.d)

    @property
    def offsets(self) -> np.ndarray:
        self._require_facets()
        return np.array([f.offset for f in self.facets])

    def _require_facets(self):
        if self.facets is None:
            raise PolytopeError(f"polytope {self.name!r} has no facet data")

    def to_chart(self, x, check: bool = True, tol: float = HULL_TOL) -> np.ndarray:
        """Map an ambient point to chart coordinates.

        With ``check`` the point must lie on the affine hull to within
        ``tol * scale``; otherwise it is orthogonally projected.
        """
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.shape[0] != self.ambient_dim:
            raise OutsideError(
                f"point has dimension {x.shape[0]}, polytope lives in R^{self.ambient_dim}")
        c = (x - self.origin) @ self.basis
        if check:
            off = np.linalg.norm(self.origin + self.basis @ c - x)
            if off > tol * self.scale:
                raise OutsideError(f"point is {off:.3g} away from the affine hull")
        return c

    def to_ambient(self, c) -> np.ndarray:
        return self.origin + self.basis @ np.asarray(c, dtype=float)

    def vector_to_chart(self, v) -> np.ndarray:
        """Map an ambient direction to the chart, rejecting components off the hull."""
        v = np.asarray(v, dtype=float).reshape(-1)
        c = v @ self.basis
        if np.linalg.norm(v - self.basis @ c) > HULL_TOL * max(1.0, np.linalg.norm(v)):
            raise OutsideError("direction is not parallel to the affine hull")
        return c

    def subpolytope(self, indices: Sequence[int], name: str | None = None) -> "Polytope":
        """Polytope spanned by a subset of the vertices (no facet data)."""
        idx = list(indices)
        return build_polytope(self.vertices[idx], name=name or f"{self.name}[{idx}]")

    def as_dict(self) -> dict:
        """JSON-ready description in ambient coordinates."""
        doc = {"name": self.name, "vertices": self.vertices.tolist()}
        if self.facets is not None:
            doc["facets"] = [
                {"normal": (self.basis @ f.normal).tolist(),
                 "offset": float(f.offset + (self.basis @ f.normal) @ self.origin)}
                for f in self.facets
            ]
        return doc


def _chart(V: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    origin = V[0]
    diffs = V[1:] - origin
    _, s, vt = np.linalg.svd(diffs, full_matrices=False)
    rank = int((s > RANK_TOL * s[0]).sum()) if s.size and s[0] > 0 else 0
    if rank == V.shape[1]:
        return origin, np.eye(V.shape[1])
    return origin, vt[:rank].T


def _dedup(V: np.ndarray) -> np.ndarray:
    diam = np.sqrt(((V[:, None, :] - V[None, :, :]) ** 2).sum(-1)).max() if len(V) else 0.0
    tol = DEDUP_TOL * max(diam, 1e-300)
    keep: list[int] = []
    for i, v in enumerate(V):
        if all(np.linalg.norm(v - V[j]) > tol for j in keep):
            keep.append(i)
    return V[keep]


def _convert_facets(facets, origin, basis) -> list[Facet]:
    out = []
    for i, f in enumerate(facets):
        if isinstance(f, Facet):
            normal, offset = f.normal, f.offset
        else:
            try:
                normal, offset = f["normal"], f["offset"]
            except (KeyError, TypeError) as exc:
                raise PolytopeError(f"facet {i}: expected 'normal' and 'offset'") from exc
        normal = np.asarray(normal, dtype=float).reshape(-1)
        if normal.shape[0] != origin.shape[0]:
            raise PolytopeError(f"facet {i}: normal has dimension {normal.shape[0]}, "
                                f"expected {origin.shape[0]}")
        nc = basis.T @ normal
        oc = float(offset) - normal @ origin
        norm = np.linalg.norm(nc)
        if norm < RANK_TOL * max(1.0, np.linalg.norm(normal)):
            raise PolytopeError(f"facet {i}: normal is orthogonal to the affine hull")
        out.append(Facet(nc / norm, oc / norm))
    return out


def _validate_facets(P: Polytope):
    V = P.chart_vertices
    tol = FACET_TOL * P.scale
    N, c = P.normals, P.offsets
    vals = V @ N.T - c  # (n, F)
    for j in range(N.shape[0]):
        worst = vals[:, j].max()
        if worst > tol:
            k = int(vals[:, j].argmax())
            raise PolytopeError(f"facet {j} is violated by vertex {k} (by {worst:.3g})")
        if worst < -tol:
            raise PolytopeError(f"facet {j} does not touch the polytope (gap {-worst:.3g})")
        on = V[np.abs(vals[:, j]) <= tol]
        if P.d > 1 and np.linalg.matrix_rank(on[1:] - on[0], tol=RANK_TOL * P.scale) < P.d - 1:
            raise PolytopeError(f"facet {j} is not a (d-1)-dimensional face")
    counts = (np.abs(vals) <= tol).sum(axis=1)
    bad = np.flatnonzero(counts < P.d)
    if bad.size:
        raise PolytopeError(f"vertex {int(bad[0])} lies on fewer than d={P.d} facets; "
                            "it is not an extreme point")


def build_polytope(vertices, facets: Iterable | None = None, name: str = "") -> Polytope:
    """Build a polytope from ambient vertices and optional ambient facets.

    Facets are half-spaces ``(normal, w) <= offset`` in ambient coordinates;
    they are restricted to the affine hull, normalised and validated against
    the vertices.
    """
    V = np.atleast_2d(np.asarray(vertices, dtype=float))
    if V.ndim != 2 or V.shape[0] == 0:
        raise PolytopeError("vertices must be a non-empty list of points")
    if not np.all(np.isfinite(V)):
        raise PolytopeError("vertices must be finite")
    V = _dedup(V)
    if V.shape[0] < 2:
        raise PolytopeError("a polytope needs at least 2 distinct vertices")
    origin, basis = _chart(V)
    roundtrip = origin + (V - origin) @ basis @ basis.T
    err = np.abs(roundtrip - V).max()
    scale = max(1.0, np.abs(V - origin).max())
    if err > 1e-12 * scale:
        raise PolytopeError(f"affine chart round-trip error {err:.3g}")
    fac = None if facets is None else tuple(_convert_facets(list(facets), origin, basis))
    P = Polytope(V, origin, basis, fac, name)
    if fac is not None:
        _validate_facets(P)
    return P


def make_simplex(d: int, name: str | None = None) -> Polytope:
    """Standard simplex with vertices ``0, e_1, ..., e_d``."""
    if d < 1:
        raise PolytopeError("simplex dimension must be >= 1")
    V = np.vstack([np.zeros(d), np.eye(d)])
    facets = [{"normal": -e, "offset": 0.0} for e in np.eye(d)]
    facets.append({"normal": np.ones(d) / np.sqrt(d), "offset": 1.0 / np.sqrt(d)})
    return build_polytope(V, facets, name or f"simplex{d}")


def make_box(lows, highs, name: str | None = None) -> Polytope:
    """Axis-aligned box; vertex order has the first axis varying fastest.

    Facets come in the order ``x_1 >= lo_1, x_1 <= hi_1, x_2 >= lo_2, ...``.
    """
    lows = np.asarray(lows, dtype=float).reshape(-1)
    highs = np.asarray(highs, dtype=float).reshape(-1)
    if lows.shape != highs.shape or np.any(highs <= lows):
        raise PolytopeError("box needs matching lows < highs")
    d = lows.size
    corners = [tuple(reversed(c)) for c in
               itertools.product(*[(lo, hi) for lo, hi in zip(lows, highs)][::-1])]
    facets = []
    for i, e in enumerate(np.eye(d)):
        facets.append({"normal": -e, "offset": -lows[i]})
        facets.append({"normal": e, "offset": highs[i]})
    return build_polytope(corners, facets, name or "box")


def make_polygon(vertices_2d, name: str | None = None) -> Polytope:
    """Convex polygon; vertex order is kept, edges come from an angular sort."""
    V = np.asarray(vertices_2d, dtype=float)
    if V.ndim != 2 or V.shape[1] != 2 or V.shape[0] < 3:
        raise PolytopeError("polygon needs at least 3 points in the plane")
    c = V.mean(axis=0)
    order = np.argsort(np.arctan2(V[:, 1] - c[1], V[:, 0] - c[0]))
    ring = V[order]
    edges = np.roll(ring, -1, axis=0) - ring
    nxt = np.roll(edges, -1, axis=0)
    cross = edges[:, 0] * nxt[:, 1] - edges[:, 1] * nxt[:, 0]
    scale = max(1.0, np.abs(edges).max()) ** 2
    if np.any(cross <= 1e-12 * scale):
        raise PolytopeError("polygon is not strictly convex")
    facets = []
    for e in edges:
        nrm = np.array([e[1], -e[0]]) / np.linalg.norm(e)
        facets.append({"normal": nrm, "offset": float((V @ nrm).max())})
    return build_polytope(V, facets, name or "polygon")


def facet_distances(P: Polytope, x) -> np.ndarray:
    """Distances ``c_G - (n_G, x)`` from ``x`` to every facet hyperplane."""
    xc = P.to_chart(x)
    dist = P.offsets - P.normals @ xc
    if dist.min() < -FACET_TOL * P.scale:
        raise OutsideError(f"point is outside the polytope (facet {int(dist.argmin())})")
    return np.maximum(dist, 0.0)


def ray_exit_distance(P: Polytope, x, xi) -> tuple[float, int]:
    """Distance from ``x`` to the boundary along ``x + t xi/|xi|``, ``t >= 0``.

    Returns ``(distance, facet_index)`` where the facet is the one the ray
    leaves through.
    """
    xc = P.to_chart(x)
    v = P.vector_to_chart(xi)
    norm = np.linalg.norm(v)
    if norm == 0.0:
        raise ValueError("direction must be nonzero")
    N, c = P.normals, P.offsets
    gap = c - N @ xc
    if gap.min() < -FACET_TOL * P.scale:
        raise OutsideError("point is outside the polytope")
    rate = N @ v
    ahead = rate > 1e-14 * norm
    if not ahead.any():
        raise PolytopeError("ray never leaves the polytope; is it bounded?")
    t = np.full(len(rate), np.inf)
    t[ahead] = np.maximum(gap[ahead], 0.0) * norm / rate[ahead]
    j = int(np.argmin(t))
    return float(t[j]), j


def two_sided_exit(P: Polytope, x, xi) -> tuple[float, int]:
    """``min(d(x, xi), d(x, -xi))`` and the facet achieving it."""
    fwd = ray_exit_distance(P, x, xi)
    bwd = ray_exit_distance(P, x, -np.asarray(xi, dtype=float))
    return fwd if fwd[0] <= bwd[0] else bwd


def support_weights_lp(P: Polytope, x) -> np.ndarray | None:
    """Some convex combination of the vertices equal to ``x``, or ``None``."""
    xc = P.to_chart(x, check=False)
    A_eq = np.vstack([P.chart_vertices.T, np.ones(P.n)])
    b_eq = np.append(xc, 1.0)
    res = linprog(np.zeros(P.n), A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    return res.x if res.status == 0 else None


def minimal_face(P: Polytope, x, tol: float = 1e-9) -> list[int]:
    """Indices of the vertices of the smallest face containing ``x``.

    A vertex belongs to that face iff it receives positive weight in some
    convex representation of ``x``; each is found with one LP.
    """
    xc = P.to_chart(x)
    A_eq = np.vstack([P.chart_vertices.T, np.ones(P.n)])
    b_eq = np.append(xc, 1.0)
    face = []
    for k in range(P.n):
        cost = np.zeros(P.n)
        cost[k] = -1.0
        res = linprog(cost, A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs")
        if res.status == 2:
            raise OutsideError("point is outside the polytope")
        if res.status != 0:
            raise PolytopeError(f"LP failed while locating the face: {res.message}")
        if -res.fun > tol:
            face.append(k)
    return face


def contains(P: Polytope, x, tol: float = FACET_TOL) -> bool:
    """Membership test (facets if available, LP feasibility otherwise)."""
    try:
        xc = P.to_chart(x, tol=max(tol, HULL_TOL))
    except OutsideError:
        return False
    if P.has_facets:
        return bool((P.offsets - P.normals @ xc).min() >= -tol * P.scale)
    return support_weights_lp(P, x) is not None


def load_polytope(doc: dict) -> Polytope:
    """Build a polytope from the JSON document schema."""
    if not isinstance(doc, dict):
        raise PolytopeError("polytope document must be a JSON object")
    if "vertices" not in doc:
        raise PolytopeError("polytope document is missing field 'vertices'")
    try:
        V = np.asarray(doc["vertices"], dtype=float)
    except (TypeError, ValueError) as exc:
        raise PolytopeError("field 'vertices' must be a list of numeric points") from exc
    if V.ndim != 2:
        raise PolytopeError("field 'vertices' must be a list of equal-length points")
    facets = doc.get("facets")
    if facets is not None and not isinstance(facets, list):
        raise PolytopeError("field 'facets' must be a list")
    return build_polytope(V, facets, str(doc.get("name", "")))
