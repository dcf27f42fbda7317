"""Polytopes of symmetric matrices and fixed-direction factorizations.

A matrix field ``u(y)`` with values in the hull of PSD vertex matrices
``u_1..u_n`` is written as

    u(y) = sum_k p_k(u(y)) u_k = sum_{k,i} p_k(u(y)) mu_ki xi_ki xi_ki^T,

where ``u_k = sum_i mu_ki xi_ki xi_ki^T`` are eigendecompositions.  The
directions ``xi_ki`` do not depend on ``y``, and the coefficients
``p_k mu_ki`` are nonnegative, i.e. ``u = v v^T`` with columns
``sqrt(p_k mu_ki) xi_ki``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .barrier import SolverOptions, weights_on_closure
from .errors import OutsideError, PolytopeError
from .polytope import FACET_TOL, Polytope, build_polytope, contains

SQRT2 = np.sqrt(2.0)
PSD_TOL = 1e-10
EIG_DROP = 1e-12
DIRECTION_TOL = 1e-9


@dataclass(frozen=True)
class SymmetricEmbedding:
    """Isometry between symmetric ``m x m`` matrices (Frobenius) and R^{m(m+1)/2}.

    Coordinates are the upper triangle in row-major order with off-diagonal
    entries scaled by sqrt(2).
    """

    m: int

    @property
    def dim(self) -> int:
        return self.m * (self.m + 1) // 2

    @property
    def index(self) -> list[tuple[int, int]]:
        return [(i, j) for i in range(self.m) for j in range(i, self.m)]

    def vec(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.shape != (self.m, self.m):
            raise ValueError(f"expected a {self.m}x{self.m} matrix, got shape {u.shape}")
        return np.array([u[i, j] if i == j else SQRT2 * u[i, j] for i, j in self.index])

    def mat(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float).reshape(-1)
        if s.shape[0] != self.dim:
            raise ValueError(f"expected {self.dim} coordinates, got {s.shape[0]}")
        u = np.zeros((self.m, self.m))
        for v, (i, j) in zip(s, self.index):
            if i == j:
                u[i, i] = v
            else:
                u[i, j] = u[j, i] = v / SQRT2
        return u

    def functional(self, c) -> np.ndarray:
        """Coordinates ``w`` with ``(w, vec(u)) = sum_ij c_ij u_ij`` for symmetric u."""
        c = np.asarray(c, dtype=float)
        return self.vec(0.5 * (c + c.T))


@dataclass(frozen=True, eq=False)
class MatrixPolytopeModel:
    """Vertex matrices, their eigenpairs and the deduplicated direction set.

    ``pairs`` lists ``(k, mu, direction_index)`` for every retained eigenpair
    of every vertex; ``directions[j]`` is a unit vector normalised so that its
    first nonzero entry is positive.
    """

    embedding: SymmetricEmbedding
    polytope: Polytope
    vertex_matrices: np.ndarray
    pairs: tuple[tuple[int, float, int], ...]
    directions: np.ndarray
    name: str = ""

    @property
    def m(self) -> int:
        return self.embedding.m

    @property
    def n(self) -> int:
        return self.polytope.n

    def eigen(self, k: int) -> list[tuple[float, np.ndarray]]:
        return [(mu, self.directions[j]) for kk, mu, j in self.pairs if kk == k]


def _is_symmetric(u, tol=1e-12) -> bool:
    return np.abs(u - u.T).max() <= tol * max(1.0, np.abs(u).max())


def _canonical(v: np.ndarray) -> np.ndarray:
    v = v / np.linalg.norm(v)
    nz = np.flatnonzero(np.abs(v) > DIRECTION_TOL)
    v = -v if v[nz[0]] < 0 else v
    return v + 0.0  # drop signed zeros


def build_matrix_polytope(vertex_matrices, facets=None, name: str = "") -> MatrixPolytopeModel:
    """Model the hull of symmetric PSD matrices.

    ``facets`` are ambient half-spaces in embedded coordinates (see
    :class:`SymmetricEmbedding`).  Eigenvalues below ``1e-12 * |u_k|`` are
    dropped; repeated directions (up to sign) share one index.
    """
    mats = np.asarray(vertex_matrices, dtype=float)
    if mats.ndim != 3 or mats.shape[1] != mats.shape[2]:
        raise PolytopeError("vertex matrices must be a list of square matrices")
    m = mats.shape[1]
    emb = SymmetricEmbedding(m)
    dirs: list[np.ndarray] = []
    pairs = []
    for k, u in enumerate(mats):
        if not _is_symmetric(u):
            raise PolytopeError(f"vertex matrix {k} is not symmetric")
        u = 0.5 * (u + u.T)
        mu, vecs = np.linalg.eigh(u)
        norm = np.linalg.norm(u)
        if mu.min() < -PSD_TOL * max(1.0, norm):
            raise PolytopeError(f"vertex matrix {k} is indefinite (eigenvalue {mu.min():.3g})")
        recon = (vecs * mu) @ vecs.T
        if np.abs(recon - u).max() > 1e-12 * max(1.0, norm):
            raise PolytopeError(f"eigendecomposition of vertex {k} is inaccurate")
        for val, vec in zip(mu, vecs.T):
            if val <= EIG_DROP * norm:
                continue
            g = _canonical(vec)
            for j, h in enumerate(dirs):
                if np.abs(g - h).max() <= DIRECTION_TOL:
                    break
            else:
                dirs.append(g)
                j = len(dirs) - 1
            pairs.append((k, float(val), j))
    P = build_polytope([emb.vec(u) for u in mats], facets, name)
    if P.n != len(mats):
        raise PolytopeError("vertex matrices must be distinct")
    return MatrixPolytopeModel(emb, P, mats, tuple(pairs), np.array(dirs), name)


def dd_vertex_matrices(m: int) -> np.ndarray:
    """``e_i e_i^T`` and ``(e_i +/- e_j)(e_i +/- e_j)^T / 2``: the m^2 extreme points."""
    E = np.eye(m)
    mats = [np.outer(e, e) for e in E]
    for i, j in itertools.combinations(range(m), 2):
        for s in (1.0, -1.0):
            v = E[i] + s * E[j]
            mats.append(0.5 * np.outer(v, v))
    return np.array(mats)


def dd_constraints(m: int) -> list[np.ndarray]:
    """Coefficient matrices ``C`` with ``sum C_ij u_ij <= 0`` describing diagonal dominance.

    Row ``i`` gives ``u_ii >= sum_{j != i} s_j u_ij`` for every sign pattern ``s``.
    """
    out = []
    for i in range(m):
        others = [j for j in range(m) if j != i]
        for signs in itertools.product((1.0, -1.0), repeat=len(others)):
            C = np.zeros((m, m))
            C[i, i] = -1.0
            for j, s in zip(others, signs):
                C[i, j] = C[j, i] = 0.5 * s
            out.append(C)
    return out


def dd_trace1_polytope(m: int, facets: bool | None = None) -> MatrixPolytopeModel:
    """Diagonally dominant symmetric matrices of unit trace, as a polytope.

    ``m`` must be 2 or 3.  Facets come from the dominance inequalities; by
    default they are attached for ``m = 2`` only.  The hard-coded vertex list
    is checked at build time: every vertex is dominant with trace 1 and its
    active inequalities pin it down (rank test).
    """
    if m not in (2, 3):
        raise PolytopeError("dd_trace1_polytope supports m = 2 or 3")
    if facets is None:
        facets = m == 2
    emb = SymmetricEmbedding(m)
    fac = None
    if facets:
        fac = [{"normal": emb.functional(C), "offset": 0.0} for C in dd_constraints(m)]
    model = build_matrix_polytope(dd_vertex_matrices(m), fac, name=f"dd{m}")
    _certify_dd_vertices(model)
    return model


def _certify_dd_vertices(model: MatrixPolytopeModel):
    m = model.m
    emb = model.embedding
    rows = [emb.functional(C) for C in dd_constraints(m)]
    trace = emb.functional(np.eye(m))
    for k, u in enumerate(model.vertex_matrices):
        s = emb.vec(u)
        vals = np.array([r @ s for r in rows])
        if vals.max() > 1e-12 or abs(trace @ s - 1.0) > 1e-12:
            raise PolytopeError(f"dd vertex {k} is not in the dominant trace-1 set")
        active = [r for r, v in zip(rows, vals) if abs(v) <= 1e-12]
        rank = np.linalg.matrix_rank(np.vstack(active + [trace]))
        if rank < emb.dim:
            raise PolytopeError(f"dd vertex {k} is not an extreme point (rank {rank})")


def is_diagonally_dominant(u, tol: float = 1e-12) -> bool:
    u = np.asarray(u, dtype=float)
    off = np.abs(u).sum(axis=1) - np.abs(np.diag(u))
    return bool(np.all(np.diag(u) >= off - tol))


def sample_dd_trace1(m: int, count: int, rng) -> np.ndarray:
    """Rejection sampler for diagonally dominant trace-1 matrices."""
    out = []
    while len(out) < count:
        diag = rng.dirichlet(np.ones(m))
        u = np.diag(diag)
        for i, j in itertools.combinations(range(m), 2):
            u[i, j] = u[j, i] = rng.uniform(-0.5, 0.5)
        if is_diagonally_dominant(u, tol=0.0):
            out.append(u)
    return np.array(out)


@dataclass
class VertexCertificate:
    extreme: list[bool]
    samples: int
    outside_hull: int
    lp_vertices_found: int
    lp_vertices_unknown: int

    @property
    def passed(self) -> bool:
        return all(self.extreme) and self.outside_hull == 0 and self.lp_vertices_unknown == 0


def certify_dd_hull(model: MatrixPolytopeModel, samples: int = 1000, rng=None,
                    objectives: int = 200) -> VertexCertificate:
    """LP certificate that the vertex list spans exactly the dominant trace-1 set.

    * each vertex is not a convex combination of the others (extremality);
    * ``samples`` random dominant matrices lie in the vertex hull;
    * maximising random linear objectives over the inequality description
      only ever returns listed vertices.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    P = model.polytope
    emb = model.embedding
    S = np.array([emb.vec(u) for u in model.vertex_matrices])
    extreme = []
    for k in range(P.n):
        others = np.delete(S, k, axis=0)
        A_eq = np.vstack([others.T, np.ones(len(others))])
        res = linprog(np.zeros(len(others)), A_eq=A_eq, b_eq=np.append(S[k], 1.0),
                      bounds=(0, None), method="highs")
        extreme.append(res.status == 2)

    A_eq = np.vstack([S.T, np.ones(P.n)])
    outside = 0
    for u in sample_dd_trace1(model.m, samples, rng):
        res = linprog(np.zeros(P.n), A_eq=A_eq, b_eq=np.append(emb.vec(u), 1.0),
                      bounds=(0, None), method="highs")
        outside += res.status != 0

    A_ub = np.array([emb.functional(C) for C in dd_constraints(model.m)])
    trace = emb.functional(np.eye(model.m))
    found = unknown = 0
    for _ in range(objectives):
        c = rng.normal(size=emb.dim)
        res = linprog(c, A_ub=A_ub, b_ub=np.zeros(len(A_ub)), A_eq=trace[None, :],
                      b_eq=[1.0], bounds=(None, None), method="highs-ds")
        if res.status != 0:
            unknown += 1
            continue
        if np.min(np.abs(S - res.x).max(axis=1)) <= 1e-8:
            found += 1
        else:
            # a non-listed optimum is fine only if it ties with a listed vertex
            unknown += int(c @ res.x < (S @ c).min() - 1e-9)
    return VertexCertificate(extreme, samples, int(outside), found, unknown)


@dataclass(frozen=True, eq=False)
class Factorization:
    """Per-sample weights, per-eigenpair coefficients and direction coefficients.

    ``pair_coeffs[s, r]`` is ``p_k mu_ki`` for ``model.pairs[r]``;
    ``direction_coeffs[s, j]`` sums them per direction.
    """

    model: MatrixPolytopeModel
    ys: np.ndarray
    matrices: np.ndarray
    weights: np.ndarray
    pair_coeffs: np.ndarray
    direction_coeffs: np.ndarray
    reconstruction_error: np.ndarray
    weight_error: np.ndarray = field(repr=False)

    def reconstruct(self, s: int) -> np.ndarray:
        D = self.model.directions
        return (D.T * self.direction_coeffs[s]) @ D

    def v_factor(self, s: int) -> np.ndarray:
        """``v`` with ``u = v v^T``; column j is ``sqrt(c_j) gamma_j``."""
        return self.model.directions.T * np.sqrt(self.direction_coeffs[s])

    def as_dict(self) -> dict:
        return {
            "model": self.model.name,
            "directions": self.model.directions.tolist(),
            "samples": [
                {"y": np.atleast_1d(self.ys[s]).tolist(),
                 "weights": self.weights[s].tolist(),
                 "coefficients": self.direction_coeffs[s].tolist(),
                 "reconstruction_error": float(self.reconstruction_error[s])}
                for s in range(len(self.ys))
            ],
        }


def _explain_outside(model: MatrixPolytopeModel, s: np.ndarray) -> str:
    P = model.polytope
    if not P.has_facets:
        return "not a convex combination of the vertex matrices"
    xc = P.to_chart(s, check=False)
    gap = P.normals @ xc - P.offsets
    bad = [int(j) for j in np.flatnonzero(gap > FACET_TOL * P.scale)]
    return f"violates facet(s) {bad}" if bad else "off the affine hull (wrong trace?)"


def factorize_field(model: MatrixPolytopeModel, samples, opts: SolverOptions | None = None,
                    ) -> Factorization:
    """Factorize ``u(y)`` at each ``(y, u)`` sample."""
    samples = list(samples)
    P = model.polytope
    npairs = len(model.pairs)
    ndir = len(model.directions)
    ys, mats = [], []
    W = np.zeros((len(samples), P.n))
    C = np.zeros((len(samples), npairs))
    Dc = np.zeros((len(samples), ndir))
    rec = np.zeros(len(samples))
    werr = np.zeros(len(samples))
    k_of = np.array([k for k, _, _ in model.pairs], dtype=int)
    mu_of = np.array([mu for _, mu, _ in model.pairs])
    j_of = np.array([j for _, _, j in model.pairs], dtype=int)
    for s, (y, u) in enumerate(samples):
        u = np.asarray(u, dtype=float)
        if u.shape != (model.m, model.m) or not _is_symmetric(u, 1e-10):
            raise ValueError(f"sample {s}: expected a symmetric {model.m}x{model.m} matrix")
        vec = model.embedding.vec(0.5 * (u + u.T))
        if not contains(P, vec):
            why = _explain_outside(model, vec)
            raise OutsideError(f"sample {s} is outside the polytope: {why}")
        try:
            sol = weights_on_closure(P, vec, opts)
        except OutsideError as exc:
            raise OutsideError(f"sample {s}: {exc}") from exc
        p = sol.weights
        W[s] = p
        C[s] = p[k_of] * mu_of
        np.add.at(Dc[s], j_of, C[s])
        D = model.directions
        rec[s] = np.linalg.norm((D.T * Dc[s]) @ D - u)
        werr[s] = np.linalg.norm(np.tensordot(p, model.vertex_matrices, axes=1) - u)
        ys.append(y)
        mats.append(u)
    return Factorization(model, np.array(ys, dtype=float), np.array(mats), W, C, Dc, rec, werr)


def load_model(doc: dict) -> MatrixPolytopeModel:
    """Model from ``{"name", "vertex_matrices": [[[...]]], "facets": [...]}``."""
    if not isinstance(doc, dict) or "vertex_matrices" not in doc:
        raise PolytopeError("model document is missing field 'vertex_matrices'")
    try:
        mats = np.asarray(doc["vertex_matrices"], dtype=float)
    except (TypeError, ValueError) as exc:
        raise PolytopeError("field 'vertex_matrices' must hold numeric matrices") from exc
    return build_matrix_polytope(mats, doc.get("facets"), str(doc.get("name", "")))
