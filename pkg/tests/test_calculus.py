import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from polybary.barrier import solve_weights, weights_on_closure
from polybary.calculus import (Report, boundary_ratio_study, check_gradient_bounds,
                               check_hessian_identity, check_vertex_direction_identities,
                               check_representation_identity, differentiate,
                               estimate_sqrt_lipschitz, probe_directions,
                               random_representation, sqrt_lipschitz_refinement,
                               sqrt_ratio_at, vertex_limit_check)
from polybary.errors import OutsideError, PolytopeError
from polybary.polytope import build_polytope, make_box, make_polygon, make_simplex

from oracles import fd_gradients, random_triangle, regular_hexagon_jitter


def _solve(P, x):
    sol = solve_weights(P, x)
    return sol, differentiate(P, sol)


def _random_case(seed):
    rng = np.random.default_rng(seed)
    kind = seed % 3
    if kind == 0:
        P = make_polygon(regular_hexagon_jitter(rng))
    elif kind == 1:
        P = make_polygon(random_triangle(rng))
    else:
        P = make_box([0, 0], rng.uniform(0.5, 2.0, 2))
    x = rng.dirichlet(np.full(P.n, 2.0)) @ P.vertices
    return P, x, rng


# ---- derivatives -----------------------------------------------------------

@pytest.mark.parametrize("x", [0.1, 0.5, 0.77])
def test_interval_gradients(interval, x):
    sol, der = _solve(interval, [x])
    np.testing.assert_allclose(der.grad_p, [[-1.0], [1.0]], atol=1e-12)
    assert der.hess_U[0, 0] == pytest.approx(-1 / (1 - x) ** 2 - 1 / x ** 2, rel=1e-10)


def test_simplex_gradients_are_constant(rng):
    P = make_simplex(3)
    M = np.vstack([P.vertices.T, np.ones(4)])
    want = np.linalg.inv(M)[:, :3]     # d(barycentric)/dx
    for x in rng.dirichlet(np.full(4, 2.0), size=5) @ P.vertices:
        np.testing.assert_allclose(_solve(P, x)[1].grad_p, want, atol=1e-9)


def _fd_oracle(P):
    def solve(c):
        s = solve_weights(P, P.to_ambient(c))
        return s.weights, s.lam
    return solve


def test_square_gradients_match_finite_differences(square):
    sol, der = _solve(square, [0.25, 0.5])
    dp, dlam = fd_gradients(_fd_oracle(square), sol.x)
    assert np.abs(der.grad_p - dp).max() <= 1e-4 * np.abs(dp).max()
    assert np.abs(der.hess_U - dlam).max() <= 1e-4 * np.abs(dlam).max()


@given(st.integers(0, 2 ** 32 - 1))
def test_gradients_match_finite_differences(seed):
    P, x, _ = _random_case(seed)
    sol, der = _solve(P, x)
    dp, dlam = fd_gradients(_fd_oracle(P), sol.x)
    assert np.abs(der.grad_p - dp).max() <= 1e-4 * np.abs(dp).max()
    assert np.abs(der.hess_U - dlam).max() <= 1e-4 * np.abs(dlam).max()


@given(st.integers(0, 2 ** 32 - 1))
def test_differentiated_partition_and_reproduction(seed):
    P, x, _ = _random_case(seed)
    sol, der = _solve(P, x)
    scale = max(1.0, np.abs(der.grad_p).max())
    assert np.abs(der.grad_p.sum(axis=0)).max() <= 1e-9 * scale
    np.testing.assert_allclose(P.chart_vertices.T @ der.grad_p, np.eye(2), atol=1e-9 * scale)
    assert np.linalg.eigvalsh(der.hess_U).max() < 0


def test_derivatives_need_interior(square):
    with pytest.raises(OutsideError):
        differentiate(square, weights_on_closure(square, [0.5, 0.0]))


def test_probe_directions_are_deterministic():
    a, b = probe_directions(3), probe_directions(3)
    np.testing.assert_array_equal(a, b)
    assert a.shape == (11, 3)
    np.testing.assert_allclose(np.linalg.norm(a, axis=1), 1.0)


# ---- identities ------------------------------------------------------------

def test_hessian_identity_interval_midpoint(interval):
    sol, der = _solve(interval, [0.5])
    assert der.second([1.0]) == pytest.approx(-8.0, rel=1e-12)
    terms = (der.directional([1.0]) / sol.weights) ** 2
    assert -terms.sum() == pytest.approx(-8.0, rel=1e-12)
    assert check_hessian_identity(interval, der).passed


def test_hessian_identity_square_centroid(square):
    _, der = _solve(square, square.centroid)
    rep = check_hessian_identity(square, der)
    assert rep["hessian_identity"].worst <= 1e-13


def test_representation_identity_with_p_itself(hexagon, rng):
    sol, _ = _solve(hexagon, rng.dirichlet(np.ones(6)) @ hexagon.vertices)
    rep = check_representation_identity(hexagon, sol, sol.weights)
    assert rep["representation_identity"].worst <= 1e-12


def test_representation_identity_simplex(rng):
    P = make_simplex(2)
    sol, _ = _solve(P, [0.2, 0.3])
    q = random_representation(P, sol, rng)
    np.testing.assert_array_equal(q, sol.weights)      # the only representation
    assert check_representation_identity(P, sol, q).passed


def test_representation_identity_square_null_space(square, rng):
    sol, _ = _solve(square, [0.25, 0.5])
    null = np.array([1.0, -1.0, -1.0, 1.0])            # sum 0, sum q_k a_k = 0
    for t in rng.normal(size=5):
        rep = check_representation_identity(square, sol, sol.weights + t * null)
        assert rep["representation_identity"].worst <= 1e-10


def test_representation_identity_rejects_bad_q(square):
    sol, _ = _solve(square, [0.25, 0.5])
    with pytest.raises(ValueError):
        check_representation_identity(square, sol, [1.0, 0.0, 0.0, 0.0])
    with pytest.raises(ValueError):
        check_representation_identity(square, sol, [1.0, 1.0])


def test_interval_refined_vertex_identity_by_hand(interval):
    x = 0.3
    sol, der = _solve(interval, [x])
    k = 1                                            # a_2 = 1
    xi = sol.x - interval.chart_vertices[k]         # x - 1
    dp = der.directional(xi)
    assert dp[k] == pytest.approx(x - 1, abs=1e-12)
    assert dp[0] == pytest.approx(1 - x, abs=1e-12)
    q = sol.weights - np.eye(2)[k]
    alpha = (((dp - q) / sol.weights) ** 2).sum()
    assert dp[k] + 1 - sol.weights[k] == pytest.approx(0.0, abs=1e-12)
    assert alpha * sol.weights[k] ** 2 == pytest.approx(0.0, abs=1e-12)
    assert check_vertex_direction_identities(interval, sol, der).passed


def test_symmetry_matrix(hexagon, rng):
    sol, der = _solve(hexagon, rng.dirichlet(np.ones(6)) @ hexagon.vertices)
    x, A, p = sol.x, hexagon.chart_vertices, sol.weights
    # S[k, j] = p_{k(x - a_j)} / p_k^2 + 1 / p_j; the diagonal is symmetric by
    # construction, the off-diagonal part is the content of the identity
    S = np.array([[der.grad_p[k] @ (x - A[j]) / p[k] ** 2 + 1 / p[j] for j in range(6)]
                  for k in range(6)])
    np.testing.assert_array_equal(np.diag(S - S.T), 0.0)
    np.testing.assert_allclose(S, S.T, rtol=1e-9)
    H = (x - A) @ der.hess_U @ (x - A).T
    np.testing.assert_allclose(S - 6, H, rtol=1e-9, atol=1e-9 * np.abs(H).max())


@given(st.integers(0, 2 ** 32 - 1))
def test_identity_suite_on_random_polygons(seed):
    P, x, rng = _random_case(seed)
    sol, der = _solve(P, x)
    rep = Report()
    rep.merge(check_hessian_identity(P, der))
    rep.merge(check_representation_identity(P, sol, random_representation(P, sol, rng)))
    rep.merge(check_vertex_direction_identities(P, sol, der, rng=rng))
    assert rep.passed, rep.as_dict()


def test_identities_accept_a_given_q(square):
    sol, der = _solve(square, [0.25, 0.5])
    rep = check_vertex_direction_identities(square, sol, der, q=[1.0, -1.0, -1.0, 1.0])
    assert rep.passed
    with pytest.raises(ValueError):
        check_vertex_direction_identities(square, sol, der, q=[1.0, 0.0, 0.0, 0.0])


# ---- bounds ----------------------------------------------------------------

@pytest.mark.parametrize("x", [0.05, 0.3, 0.5, 0.95])
def test_interval_bounds_by_hand(interval, x):
    sol, der = _solve(interval, [x])
    N = np.sqrt(2 + 16)
    assert abs(der.grad_p[1, 0]) / sol.weights[1] <= N / min(x, 1 - x)
    assert abs(der.grad_p[1] @ (interval.chart_vertices[1] - sol.x)) <= np.sqrt(3)
    assert check_gradient_bounds(interval, sol, der).passed


@given(st.integers(0, 2 ** 32 - 1))
def test_bound_suite_on_random_polygons(seed):
    P, x, rng = _random_case(seed)
    sol, der = _solve(P, x)
    rep = check_gradient_bounds(P, sol, der, rng=rng)
    assert rep.passed, rep.as_dict()
    assert np.isfinite(rep.extras["sqrt_ratio"])


def test_bounds_need_facets():
    P = build_polytope([[0, 0], [1, 0], [0, 1]])
    sol, der = _solve(P, [0.2, 0.2])
    with pytest.raises(PolytopeError):
        check_gradient_bounds(P, sol, der)


def test_square_boundary_sweep_ratio_stays_bounded(square):
    ratios = []
    for m in range(1, 21):
        sol, der = _solve(square, [2.0 ** -m, 0.5])
        ratios.append(sqrt_ratio_at(square, sol, der, [1.0, 0.0]))
    ratios = np.array(ratios)
    assert np.all(np.isfinite(ratios))
    assert ratios.max() < 2.0
    # the ratio settles down as the boundary is approached
    assert abs(ratios[-1] / ratios[-5] - 1) < 1e-3


def test_boundary_ratio_study(square, hexagon):
    for P in (square, hexagon, make_simplex(3)):
        rep = boundary_ratio_study(P)
        assert rep.passed, rep.as_dict()


# ---- vertex limit ----------------------------------------------------------

def test_interval_vertex_limit_closed_form(interval):
    for x in (0.9, 0.99, 0.999):
        sol = solve_weights(interval, [x])
        assert 2 - 1 / sol.weights[1] == pytest.approx(2 - 1 / x, rel=1e-10)
    assert vertex_limit_check(interval).passed


@pytest.mark.parametrize("P,limit", [(make_simplex(2), 2), (make_box([0, 0], [1, 1]), 3)])
def test_vertex_limit(P, limit):
    rep = vertex_limit_check(P)
    assert rep.passed
    for k in range(P.n):
        a = P.chart_vertices[k]
        c = P.to_chart(P.centroid)
        sol = solve_weights(P, P.to_ambient(a + 1e-6 * (c - a)))
        assert P.n - 1 / sol.weights[k] == pytest.approx(limit, abs=1e-4)


# ---- Lipschitz -------------------------------------------------------------

def test_sqrt_lipschitz_of_sin_squared(interval):
    ys = np.linspace(0, 2 * np.pi, 10_000)
    us = np.sin(ys) ** 2
    est = estimate_sqrt_lipschitz(interval, ys, us[:, None])
    assert 0.99 <= est.constants[1] <= 1.01
    assert 0.99 <= est.constants[0] <= 1.01          # sqrt(cos^2) = |cos|
    assert est.curvature == pytest.approx(2.0, rel=1e-3)


def test_constant_field_has_zero_constants(hexagon):
    ys = np.linspace(0, 1, 11)
    us = np.tile(hexagon.centroid, (11, 1))
    est = estimate_sqrt_lipschitz(hexagon, ys, us)
    np.testing.assert_array_equal(est.constants, 0.0)
    assert est.curvature == 0.0


def test_two_dimensional_grid(square):
    a = np.linspace(0.1, 0.9, 21)
    Y = np.stack(np.meshgrid(a, a, indexing="ij"), axis=-1)
    est = estimate_sqrt_lipschitz(square, Y, Y.copy())
    assert np.all(np.isfinite(est.constants)) and np.all(est.constants > 0)
    assert est.curvature == pytest.approx(0.0, abs=1e-9)   # linear field


def test_lipschitz_outside_sample_raises(square):
    with pytest.raises(OutsideError):
        estimate_sqrt_lipschitz(square, [0, 1], [[0.5, 0.5], [1.5, 0.5]])


def test_dd_path_refinement_is_stable(dd2):
    emb = dd2.embedding
    centre = 0.5 * np.eye(2)
    corner = np.diag([1.0, 0.0])

    def field(y):
        # centroid towards (almost) the vertex diag(1, 0), bending off the
        # straight segment so the path is not an edge-parallel line
        t = 0.98 * np.sin(0.5 * np.pi * y) ** 2
        u = (1 - t) * centre + t * corner
        u[0, 1] = u[1, 0] = 0.1 * t * (1 - t)
        return emb.vec(u)

    study = sqrt_lipschitz_refinement(dd2.polytope, field, 0.0, 1.0)
    assert study.stable, study.ratios
    assert np.all(np.isfinite(study.estimates))


def test_report_merge_keeps_the_worst():
    a, b = Report(), Report()
    a.add("x", 1e-9, 1e-8)
    b.add("x", 1e-7, 1e-8)
    b.add("y", 0.0, 1.0)
    a.merge(b)
    assert a["x"].worst == 1e-7 and not a.passed
    assert a["y"].passed
