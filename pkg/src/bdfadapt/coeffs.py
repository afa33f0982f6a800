"""Porosity and friction-coefficient handling.

The porosity enters the discrete problem through its continuous P1
interpolant; the Darcy and Forchheimer coefficients are scalar closures
of the porosity.  The error indicators additionally need piecewise
constant cell means of the forcing and of alpha, beta composed with the
analytic porosity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fespace import default_rule

_RANGE_SLACK = 1e-12


class PorosityRangeError(Exception):
    """A nodal porosity value escaped [eps0, 1]."""


@dataclass
class CoefficientSet:
    """Analytic fields plus their discrete traces on one mesh."""

    epsilon: object          # callable (n, 2) -> (n,)
    alpha: object            # callable of porosity values
    beta: object             # callable of porosity values
    reynolds: float
    eps_h: np.ndarray        # nodal values of the P1 interpolant
    eps0: float              # lower porosity bound


@dataclass
class CellAverages:
    """Per-triangle means of the data entering the residual."""

    f_h: np.ndarray          # (m, 2)
    alpha_h: np.ndarray      # (m,)
    beta_h: np.ndarray       # (m,)


def interpolate_porosity(epsilon, mesh, eps0: float | None = None) -> np.ndarray:
    """Nodal values of the P1 porosity interpolant, range-checked.

    When eps0 is not given the lower bound is recovered by scanning the
    vertex values.  Values may exceed the bounds by at most 1e-12.
    """
    values = np.asarray(epsilon(mesh.vertices), dtype=np.float64)
    if values.shape != (mesh.n_vertices,):
        raise ValueError("porosity field must return one value per vertex")
    low = float(values.min())
    high = float(values.max())
    if eps0 is None:
        if low <= _RANGE_SLACK:
            raise PorosityRangeError(f"porosity reaches {low:g}, must stay positive")
    elif low < eps0 - _RANGE_SLACK:
        raise PorosityRangeError(f"porosity {low:g} below configured bound {eps0:g}")
    if high > 1.0 + _RANGE_SLACK:
        raise PorosityRangeError(f"porosity {high:g} above 1")
    return values


def build_coefficients(
    epsilon, alpha, beta, reynolds: float, mesh, eps0: float | None = None
) -> CoefficientSet:
    """Bundle the coefficient fields for one mesh.

    alpha and beta must be nonnegative over the porosity range; they are
    sampled on [eps0, 1] as a constructor sanity check.  (Both benchmark
    closures vanish at porosity exactly 1, so the check is nonnegativity
    rather than strict positivity.)
    """
    if reynolds <= 0.0:
        raise ValueError("reynolds must be positive")
    eps_h = interpolate_porosity(epsilon, mesh, eps0=eps0)
    if eps0 is None:
        eps0 = float(eps_h.min())
    sample = np.linspace(eps0, 1.0, 101)
    for name, fn in (("alpha", alpha), ("beta", beta)):
        vals = np.asarray(fn(sample), dtype=np.float64)
        if np.any(vals < -1e-14):
            raise ValueError(f"{name} takes negative values on [{eps0:g}, 1]")
    return CoefficientSet(
        epsilon=epsilon,
        alpha=alpha,
        beta=beta,
        reynolds=float(reynolds),
        eps_h=eps_h,
        eps0=float(eps0),
    )


def cellwise_averages(mesh, coeffs: CoefficientSet, f, rule=None) -> CellAverages:
    """Cell means of f, alpha(eps), beta(eps) by element quadrature.

    Exact whenever the quadrature rule integrates the field exactly; f
    may be None for a zero forcing.
    """
    if rule is None:
        rule = default_rule()
    pts = mesh.vertices[mesh.triangles]           # (m, 3, 2)
    quad = np.einsum("qk,mkd->mqd", rule.points, pts)  # (m, nq, 2)
    flat = quad.reshape(-1, 2)

    if f is None:
        f_h = np.zeros((mesh.n_triangles, 2))
    else:
        fv = np.asarray(f(flat), dtype=np.float64).reshape(len(flat), 2)
        f_h = np.einsum("q,mqd->md", rule.weights, fv.reshape(quad.shape))

    eps_vals = np.asarray(coeffs.epsilon(flat), dtype=np.float64)
    alpha_vals = np.asarray(coeffs.alpha(eps_vals), dtype=np.float64)
    beta_vals = np.asarray(coeffs.beta(eps_vals), dtype=np.float64)
    shape = (mesh.n_triangles, len(rule.weights))
    alpha_h = alpha_vals.reshape(shape) @ rule.weights
    beta_h = beta_vals.reshape(shape) @ rule.weights
    return CellAverages(f_h=f_h, alpha_h=alpha_h, beta_h=beta_h)
