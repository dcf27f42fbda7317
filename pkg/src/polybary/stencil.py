"""Monotone finite-difference stencils from fixed-direction factorizations.

Given ``u = sum_j c_j gamma_j gamma_j^T`` with ``c_j >= 0``, the operator
``L f = sum_ij u_ij f_ij`` is approximated by

    L_h f(x) = sum_j c_j (f(x + h gamma_j) - 2 f(x) + f(x - h gamma_j)) / h^2.

Each unit direction is rescaled to a primitive integer vector ``g_j`` when
possible (coefficient divided by ``|g_j|^2``), so all nodes sit on the mesh
``x + h Z^m``.  Off-centre coefficients are nonnegative, hence the scheme is
monotone.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import gcd
from typing import Callable

import numpy as np

from .barrier import SolverOptions
from .calculus import Report
from .matrix import Factorization, MatrixPolytopeModel, factorize_field

LATTICE_TOL = 1e-9
MAX_DENOMINATOR = 16
STENCIL_TOL = 1e-14


def integer_direction(gamma, tol: float = LATTICE_TOL,
                      max_denominator: int = MAX_DENOMINATOR) -> tuple[np.ndarray, bool]:
    """Primitive integer vector parallel to ``gamma``.

    Returns ``(g, True)`` on success, ``(gamma / |gamma|, False)`` otherwise.
    """
    gamma = np.asarray(gamma, dtype=float)
    unit = gamma / np.linalg.norm(gamma)
    nz = np.abs(unit) > tol
    base = unit / np.abs(unit[nz]).min()
    for t in range(1, max_denominator + 1):
        w = t * base
        r = np.rint(w)
        if np.abs(w - r).max() <= tol * t * np.abs(base).max():
            g = r.astype(int)
            div = 0
            for v in g:
                div = gcd(div, abs(int(v)))
            g = g // max(div, 1)
            if np.abs(g / np.linalg.norm(g) - unit).max() <= 10 * tol:
                return g, True
    return unit, False


@dataclass(frozen=True, eq=False)
class StencilSpec:
    """``L_h f(x) = center f(x) + sum_i coeffs[i] f(x + h offsets[i])``.

    ``directions[j]`` are the (integer, when ``on_lattice[j]``) step vectors and
    ``weights[j]`` the coefficients ``c_j`` before division by ``h^2``.
    """

    h: float
    offsets: np.ndarray
    coeffs: np.ndarray
    center: float
    directions: np.ndarray
    weights: np.ndarray
    on_lattice: np.ndarray

    @property
    def lattice(self) -> bool:
        return bool(np.all(self.on_lattice))

    @property
    def monotone(self) -> bool:
        return bool(np.all(self.coeffs >= 0.0))

    def as_dict(self) -> dict:
        offs = self.offsets.astype(int).tolist() if self.lattice else self.offsets.tolist()
        return {"h": self.h,
                "entries": [{"offset": o, "coeff": float(c)} for o, c in zip(offs, self.coeffs)],
                "center": self.center,
                "lattice": self.lattice}


def stencil_from_directions(directions, coefficients, h: float) -> StencilSpec:
    """Stencil for ``u = sum_j coefficients[j] d_j d_j^T`` with unit ``d_j``."""
    if not h > 0:
        raise ValueError("step size h must be positive")
    D = np.atleast_2d(np.asarray(directions, dtype=float))
    c = np.asarray(coefficients, dtype=float).reshape(-1)
    if len(c) != len(D):
        raise ValueError("one coefficient per direction is required")
    if np.any(c < 0):
        raise ValueError("coefficients must be nonnegative")
    steps: list[np.ndarray] = []
    weights: list[float] = []
    flags: list[bool] = []
    for gamma, cj in zip(D, c):
        nrm2 = float(gamma @ gamma)
        g, ok = integer_direction(gamma)
        g = np.asarray(g, dtype=float)
        w = cj * nrm2 / float(g @ g)
        for i, s in enumerate(steps):
            if np.abs(s - g).max() <= LATTICE_TOL or np.abs(s + g).max() <= LATTICE_TOL:
                weights[i] += w
                break
        else:
            steps.append(g)
            weights.append(w)
            flags.append(ok)
    G = np.array(steps)
    W = np.array(weights)
    offsets = np.vstack([G, -G])
    coeffs = np.concatenate([W, W]) / h ** 2
    return StencilSpec(float(h), offsets, coeffs, float(-2.0 * W.sum() / h ** 2), G, W,
                       np.array(flags, dtype=bool))


def build_stencil(fact: Factorization, h: float, sample: int = 0) -> StencilSpec:
    """Stencil of the factorization at one sample."""
    return stencil_from_directions(fact.model.directions, fact.direction_coeffs[sample], h)


def stencil_at(model: MatrixPolytopeModel, u, h: float) -> StencilSpec:
    """Factorize a single matrix and build its stencil.

    The dual solve runs to a tighter residual than the default so that the
    operator the stencil encodes matches ``u`` to near machine precision
    (Newton is quadratically convergent, so this costs about one step).
    """
    fact = factorize_field(model, [(0.0, u)], SolverOptions(tol=STENCIL_TOL))
    return build_stencil(fact, h)


def apply_stencil(spec: StencilSpec, f: Callable[[np.ndarray], float], x) -> float:
    """``L_h f(x)``, summed pairwise as second differences.

    The offsets come in ``+g, -g`` pairs with equal coefficients, so each pair
    contributes ``c (f(x + h g) - f(x)) + c (f(x - h g) - f(x))``.  This is
    algebraically the same sum but the odd parts cancel before scaling by
    ``1 / h^2``.
    """
    x = np.asarray(x, dtype=float)
    f0 = f(x)
    k = len(spec.directions)
    total = (spec.center + spec.coeffs.sum()) * f0
    for i in range(k):
        step = spec.h * spec.offsets[i]
        second = (f(x + step) - f0) + (f(x - step) - f0)
        total += spec.coeffs[i] * second
    return float(total)


def operator_matrix(spec: StencilSpec) -> np.ndarray:
    """The matrix ``sum_j c_j g_j g_j^T`` the stencil is consistent with."""
    G, W = spec.directions, spec.weights
    return (G.T * W) @ G


def _trig_test(m: int):
    """``f(z) = sin(z_1) cos(z_2) [cos(z_3 + 0.3)]`` with its exact Hessian."""
    phases = [0.0, np.pi / 2, np.pi / 2 + 0.3][:m]

    def f(z):
        return float(np.prod([np.sin(z[i] + phases[i]) for i in range(m)]))

    def hess(z):
        s = np.array([np.sin(z[i] + phases[i]) for i in range(m)])
        c = np.array([np.cos(z[i] + phases[i]) for i in range(m)])
        H = np.empty((m, m))
        for i in range(m):
            for j in range(m):
                fac = [s[k] for k in range(m) if k not in (i, j)]
                rest = float(np.prod(fac)) if fac else 1.0
                H[i, j] = -s[i] * rest if i == j else c[i] * c[j] * rest
        return H

    return f, hess


def consistency_report(model: MatrixPolytopeModel, matrices, hs=(0.1, 0.05, 0.025),
                       x0=None, seed: int = 0, quadratics: int = 20,
                       monotone_trials: int = 50) -> Report:
    """Consistency and monotonicity of the stencils of ``matrices``.

    * exactness on random quadratics centred at ``x0`` (relative error,
      scaled by the size of the contraction ``sum |u_ij| |f_ij|``), for
      every ``h``; centring keeps rounding of ``f`` itself out of the check;
    * observed order ``log2(e(h)/e(h/2))`` on a smooth trigonometric product;
    * ``L_h f >= 0`` for random nodal data with its minimum at the centre.
    """
    rng = np.random.default_rng(seed)
    m = model.m
    x0 = np.full(m, 0.3) + 0.1 * np.arange(m) if x0 is None else np.asarray(x0, dtype=float)
    f_trig, hess_trig = _trig_test(m)
    quad_err = 0.0
    orders = []
    mono = np.inf
    offsets_ref = None
    same_support = True
    for u in matrices:
        u = np.asarray(u, dtype=float)
        specs = [stencil_at(model, u, h) for h in hs]
        if offsets_ref is None:
            offsets_ref = specs[0].offsets
        same_support &= specs[0].offsets.shape == offsets_ref.shape and \
            np.allclose(specs[0].offsets, offsets_ref)
        for _ in range(quadratics):
            A = rng.normal(size=(m, m))
            A = 0.5 * (A + A.T)
            b = rng.normal(size=m)

            def fq(z, A=A, b=b):
                w = z - x0
                return float(w @ A @ w + b @ w)

            exact = float(np.sum(u * 2 * A))
            scale = float(np.sum(np.abs(u) * 2 * np.abs(A)))
            for spec in specs:
                quad_err = max(quad_err, abs(apply_stencil(spec, fq, x0) - exact) / scale)
        exact = float(np.sum(u * hess_trig(x0)))
        errs = [abs(apply_stencil(spec, f_trig, x0) - exact) for spec in specs]
        for e1, e2 in zip(errs, errs[1:]):
            if e2 > 0 and e1 > 0:
                orders.append(np.log2(e1 / e2))
        spec = specs[0]
        nodes = x0 + spec.h * spec.offsets
        for _ in range(monotone_trials):
            base = rng.normal()
            vals = base + rng.uniform(0.0, 1.0, len(nodes))

            def fm(z, vals=vals, base=base, nodes=nodes):
                gap = np.abs(nodes - z).max(axis=1)
                i = int(gap.argmin())
                return vals[i] if gap[i] < 1e-12 else base

            mono = min(mono, apply_stencil(spec, fm, x0))
    rep = Report(extras={"orders": orders})
    rep.add("quadratic_exactness", quad_err, 1e-12)
    min_order = min(orders) if orders else np.nan
    rep.add("observed_order", -min_order, -1.9, passed=bool(orders) and min_order >= 1.9,
            min_order=min_order)
    rep.add("monotonicity", max(0.0, -mono), 1e-12, min_value=mono)
    rep.add("fixed_support", 0.0 if same_support else 1.0, 0.0)
    return rep
