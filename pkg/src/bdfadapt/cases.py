"""Benchmark problem definitions.

Two configurations: a unit-square flow with closed-form velocity and
pressure used for convergence studies, and a packed-bed channel with a
parabolic inflow and an open outlet.  Everything a run needs is bundled
into a ProblemSpec so the solver and the command line never special-case
a particular benchmark.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .estimators import ExactSolution
from .fespace import (
    ConfigurationError,
    GAUGE_NONE,
    GAUGE_ZERO_MEAN,
    build_layout,
    dirichlet_lift,
)
from .mesh import BOTTOM, LEFT, RIGHT, TOP, Mesh, uniform_mesh

_ALL_LABELS = frozenset((LEFT, RIGHT, BOTTOM, TOP))


@dataclass(frozen=True)
class ProblemSpec:
    """One benchmark configuration.

    epsilon maps (n, 2) points to porosity values; alpha and beta map
    porosity values to the Darcy and Forchheimer closures.  f maps
    points to (n, 2) volume forces, or is None for zero force.
    lift_field is an analytic extension of the Dirichlet data to the
    whole domain (None when the data is homogeneous) and lift_grad its
    Jacobian with entries [i, c, d] = d g_c / d x_d; the pair feeds the
    data-oscillation diagnostics.
    """

    name: str
    rect: tuple
    epsilon: Callable
    alpha: Callable
    beta: Callable
    reynolds: float
    f: Optional[Callable]
    dirichlet_labels: tuple
    open_labels: tuple
    gauge: str
    lift_field: Optional[Callable]
    lift_grad: Optional[Callable]
    exact: Optional[ExactSolution]

    def __post_init__(self):
        dirichlet = set(self.dirichlet_labels)
        open_ = set(self.open_labels)
        both = dirichlet & open_
        if both:
            raise ConfigurationError(
                f"labels {sorted(both)} appear on both boundary kinds"
            )
        missing = _ALL_LABELS - dirichlet - open_
        if missing:
            raise ConfigurationError(
                f"boundary labels {sorted(missing)} left unassigned"
            )
        unknown = (dirichlet | open_) - _ALL_LABELS
        if unknown:
            raise ConfigurationError(f"unknown boundary labels {sorted(unknown)}")
        if not self.reynolds > 0:
            raise ConfigurationError(
                f"reynolds must be positive, got {self.reynolds}"
            )
        if (self.lift_field is None) != (self.lift_grad is None):
            raise ConfigurationError("lift_field and lift_grad come as a pair")


@functools.cache
def _manufactured_fields():
    """Symbolically derived closed forms for the unit-square benchmark.

    The velocity is eps^{-1} curl of a Gaussian stream function, so the
    weighted divergence vanishes identically, and the forcing closes the
    momentum balance
        -div((1/Re) eps grad u - eps u (x) u) + alpha u + beta |u| u
            + eps grad p = eps f.
    Returns lambdified callables; cached because the derivation costs a
    couple of seconds.
    """
    import sympy as sp

    x, y = sp.symbols("x y", real=True)
    re = sp.Symbol("re", positive=True)

    eps = (1 + sp.exp(x + y)) / 10
    psi = sp.exp(-30 * ((x - sp.Rational(1, 2)) ** 2 + (y - sp.Rational(1, 2)) ** 2))
    u = (sp.diff(psi, y) / eps, -sp.diff(psi, x) / eps)
    p = sp.cos(sp.pi * x) * sp.cos(sp.pi * y)
    alpha = (1 - eps) ** 2
    beta = 1 + eps
    speed = sp.sqrt(u[0] ** 2 + u[1] ** 2)

    forcing = []
    for c in range(2):
        flux = (
            eps / re * sp.diff(u[c], x) - eps * u[c] * u[0],
            eps / re * sp.diff(u[c], y) - eps * u[c] * u[1],
        )
        strong = (
            -(sp.diff(flux[0], x) + sp.diff(flux[1], y))
            + alpha * u[c]
            + beta * speed * u[c]
            + eps * sp.diff(p, (x, y)[c])
        )
        forcing.append(strong / eps)

    def fn(expr, args):
        return sp.lambdify(args, expr, modules="numpy", cse=True)

    return {
        "u": tuple(fn(u[c], (x, y)) for c in range(2)),
        "grad": tuple(
            tuple(fn(sp.diff(u[c], v), (x, y)) for v in (x, y)) for c in range(2)
        ),
        "p": fn(p, (x, y)),
        "f": tuple(fn(forcing[c], (x, y, re)) for c in range(2)),
    }


def manufactured_case(reynolds: float) -> ProblemSpec:
    """Unit-square benchmark with known velocity and pressure.

    Porosity (1 + e^{x+y})/10, closures alpha = (1 - eps)^2 and
    beta = 1 + eps, a Gaussian vortex velocity, pressure
    cos(pi x) cos(pi y) under the zero-mean gauge, homogeneous
    Dirichlet data on all four sides.
    """
    reynolds = float(reynolds)
    if not reynolds > 0:
        raise ConfigurationError(f"reynolds must be positive, got {reynolds}")
    fields = _manufactured_fields()
    u1, u2 = fields["u"]
    grad = fields["grad"]
    p_fn = fields["p"]
    f1, f2 = fields["f"]

    def _xy(pts):
        pts = np.asarray(pts, dtype=np.float64)
        return pts[..., 0], pts[..., 1]

    def epsilon(pts):
        xx, yy = _xy(pts)
        return (1.0 + np.exp(xx + yy)) / 10.0

    def velocity(pts):
        xx, yy = _xy(pts)
        return np.stack([u1(xx, yy), u2(xx, yy)], axis=-1)

    def grad_velocity(pts):
        xx, yy = _xy(pts)
        out = np.empty(xx.shape + (2, 2))
        for c in range(2):
            for d in range(2):
                out[..., c, d] = grad[c][d](xx, yy)
        return out

    def pressure(pts):
        xx, yy = _xy(pts)
        return p_fn(xx, yy)

    def force(pts):
        xx, yy = _xy(pts)
        return np.stack([f1(xx, yy, reynolds), f2(xx, yy, reynolds)], axis=-1)

    return ProblemSpec(
        name="manufactured",
        rect=(0.0, 0.0, 1.0, 1.0),
        epsilon=epsilon,
        alpha=lambda e: (1.0 - e) ** 2,
        beta=lambda e: 1.0 + e,
        reynolds=reynolds,
        f=force,
        dirichlet_labels=(LEFT, RIGHT, BOTTOM, TOP),
        open_labels=(),
        gauge=GAUGE_ZERO_MEAN,
        lift_field=None,
        lift_grad=None,
        exact=ExactSolution(u=velocity, grad_u=grad_velocity, p=pressure),
    )


def packed_bed_case(reynolds: float, c_in: float) -> ProblemSpec:
    """Channel flow through a bed whose porosity loosens toward the top.

    Domain ]0,2[ x ]0,1[, porosity 0.45 + 0.55 e^{y-1}, Ergun closures
    alpha = (150/Re)((1-eps)/eps)^2 and beta = 1.75 (1-eps)/eps,
    parabolic inflow of amplitude c_in on the left, no slip on top and
    bottom, do-nothing outlet on the right (so no pressure gauge), zero
    volume force.  The inflow profile extends to the whole domain with
    div(eps g) = 0, which makes it usable as a lift.
    """
    reynolds = float(reynolds)
    c_in = float(c_in)
    if not reynolds > 0:
        raise ConfigurationError(f"reynolds must be positive, got {reynolds}")
    if not c_in > 0:
        raise ConfigurationError(
            f"inflow amplitude must be positive, got {c_in}"
        )

    def epsilon(pts):
        pts = np.asarray(pts, dtype=np.float64)
        return 0.45 + 0.55 * np.exp(pts[..., 1] - 1.0)

    def alpha(e):
        return (150.0 / reynolds) * ((1.0 - e) / e) ** 2

    def beta(e):
        return 1.75 * (1.0 - e) / e

    def lift_field(pts):
        pts = np.asarray(pts, dtype=np.float64)
        out = np.zeros(pts.shape)
        yy = pts[..., 1]
        out[..., 0] = c_in * (1.0 - yy) * yy
        return out

    def lift_grad(pts):
        pts = np.asarray(pts, dtype=np.float64)
        yy = pts[..., 1]
        out = np.zeros(yy.shape + (2, 2))
        out[..., 0, 1] = c_in * (1.0 - 2.0 * yy)
        return out

    return ProblemSpec(
        name="packed-bed",
        rect=(0.0, 0.0, 2.0, 1.0),
        epsilon=epsilon,
        alpha=alpha,
        beta=beta,
        reynolds=reynolds,
        f=None,
        dirichlet_labels=(LEFT, BOTTOM, TOP),
        open_labels=(RIGHT,),
        gauge=GAUGE_NONE,
        lift_field=lift_field,
        lift_grad=lift_grad,
        exact=None,
    )


def initial_mesh(spec: ProblemSpec, n: int, sigma_max: float = 10.0) -> Mesh:
    """Structured start mesh with ny = n and roughly square cells."""
    x0, y0, x1, y1 = spec.rect
    nx = max(1, round(n * (x1 - x0) / (y1 - y0)))
    return uniform_mesh(nx, n, spec.rect, sigma_max=sigma_max)


def case_layout(spec: ProblemSpec, mesh):
    return build_layout(mesh, spec.dirichlet_labels, spec.gauge)


def lift_vector(spec: ProblemSpec, mesh, layout) -> np.ndarray:
    """Velocity coefficients of the boundary lift; zero when the data is."""
    return dirichlet_lift(spec.lift_field, layout, mesh, global_field=True)
