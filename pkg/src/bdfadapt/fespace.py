"""Mini-element spaces on triangles.

Velocity lives in (P1 + bubble)^2, pressure in continuous P1.  This
module owns the degree-of-freedom layout, the cubic bubble, reference
quadrature, and construction of the Dirichlet lift vector.  Velocity
DOFs are ordered vertex-x, vertex-y, bubble-x, bubble-y so the two
scalar components occupy identical index patterns shifted by a block.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np

GAUGE_ZERO_MEAN = "zero-mean-pressure"
GAUGE_NONE = "none"


class ConfigurationError(Exception):
    """Inconsistent or unknown configuration input."""


@dataclass
class FeLayout:
    """DOF bookkeeping for one mesh.

    dirichlet_mask covers the full velocity vector; it can only be true
    on vertex DOFs since the bubble vanishes on element boundaries.
    """

    n_vertices: int
    n_triangles: int
    dirichlet_mask: np.ndarray
    dirichlet_vertices: np.ndarray
    gauge: str

    @property
    def n_velocity(self) -> int:
        return 2 * (self.n_vertices + self.n_triangles)

    @property
    def n_pressure(self) -> int:
        return self.n_vertices


@dataclass
class QuadratureRule:
    """Reference-triangle and reference-edge point sets.

    Triangle weights sum to 1; an integral over a physical triangle is
    area * sum(w * f).  Edge points live on [0, 1] with weights summing
    to 1, so an edge integral is length * sum(w * f).
    """

    points: np.ndarray
    weights: np.ndarray
    degree: int
    edge_points: np.ndarray
    edge_weights: np.ndarray
    edge_degree: int


def velocity_dof_indices(layout: FeLayout):
    """Index arrays (vertex-x, vertex-y, bubble-x, bubble-y)."""
    nv, nt = layout.n_vertices, layout.n_triangles
    vx = np.arange(nv)
    vy = nv + np.arange(nv)
    bx = 2 * nv + np.arange(nt)
    by = 2 * nv + nt + np.arange(nt)
    return vx, vy, bx, by


def build_layout(mesh, dirichlet_labels, gauge: str) -> FeLayout:
    """Attach DOF counts and the Dirichlet mask to a mesh.

    Parameters
    ----------
    mesh : Mesh
    dirichlet_labels : iterable of int
        Boundary segment labels carrying essential conditions.  Every
        label must actually occur on the mesh boundary.
    gauge : str
        GAUGE_ZERO_MEAN for enclosed flows (pressure defined up to a
        constant), GAUGE_NONE when an open boundary fixes the level.
    """
    if gauge not in (GAUGE_ZERO_MEAN, GAUGE_NONE):
        raise ConfigurationError(f"unknown gauge {gauge!r}")
    dirichlet_labels = {int(l) for l in dirichlet_labels}
    present = {int(l) for l in mesh.boundary_edges[:, 2]} if len(mesh.boundary_edges) else set()
    unknown = dirichlet_labels - present
    if unknown:
        raise ConfigurationError(
            f"labels {sorted(unknown)} not on the mesh boundary (has {sorted(present)})"
        )

    nv, nt = mesh.n_vertices, mesh.n_triangles
    on_dirichlet = np.zeros(nv, dtype=bool)
    for i, j, label in mesh.boundary_edges:
        if int(label) in dirichlet_labels:
            on_dirichlet[i] = True
            on_dirichlet[j] = True

    mask = np.zeros(2 * (nv + nt), dtype=bool)
    mask[:nv] = on_dirichlet
    mask[nv : 2 * nv] = on_dirichlet
    return FeLayout(
        n_vertices=nv,
        n_triangles=nt,
        dirichlet_mask=mask,
        dirichlet_vertices=np.flatnonzero(on_dirichlet),
        gauge=gauge,
    )


def bubble_eval(lam):
    """Value and reference-coordinate gradient of the cubic bubble.

    lam is one barycentric triple or an (n, 3) array of them.  The
    gradient is with respect to reference coordinates (x, y) where
    lam = (1 - x - y, x, y); it vanishes at the centroid.
    """
    lam = np.asarray(lam, dtype=np.float64)
    single = lam.ndim == 1
    lam = np.atleast_2d(lam)
    value = lam[:, 0] * lam[:, 1] * lam[:, 2]
    # d/dx with lam1 = 1-x-y, lam2 = x, lam3 = y
    gx = lam[:, 2] * (lam[:, 0] - lam[:, 1])
    gy = lam[:, 1] * (lam[:, 0] - lam[:, 2])
    grad = np.column_stack([gx, gy])
    if single:
        return float(value[0]), grad[0]
    return value, grad


@functools.cache
def default_rule(degree: int = 10, edge_points: int = 4) -> QuadratureRule:
    """Collapsed Gauss product rule of the requested exactness.

    The convection integrand with bubbles reaches total degree 9, so the
    default element degree is 10.  Non-polynomial factors (the
    Forchheimer |u|) are simply sampled at these points.
    """
    n = (degree + 3) // 2  # 2n-1 >= degree+1 covers the collapse Jacobian
    x1, w1 = np.polynomial.legendre.leggauss(n)
    s = 0.5 * (x1 + 1.0)
    ws = 0.5 * w1
    # map the unit square onto the triangle: x = s(1-t), y = t
    S, T = np.meshgrid(s, s, indexing="ij")
    WS, WT = np.meshgrid(ws, ws, indexing="ij")
    x = (S * (1.0 - T)).ravel()
    y = T.ravel()
    w = (WS * WT * (1.0 - T)).ravel()
    w = w / w.sum()
    points = np.column_stack([1.0 - x - y, x, y])

    ex, ew = np.polynomial.legendre.leggauss(edge_points)
    edge_pts = 0.5 * (ex + 1.0)
    edge_w = 0.5 * ew
    return QuadratureRule(
        points=points,
        weights=w,
        degree=degree,
        edge_points=edge_pts,
        edge_weights=edge_w / edge_w.sum(),
        edge_degree=2 * edge_points - 1,
    )


def dirichlet_lift(g, layout: FeLayout, mesh, global_field: bool = False):
    """Velocity coefficient vector carrying the boundary data.

    Parameters
    ----------
    g : None, callable, or dict
        None gives the zero vector.  A callable maps (n, 2) coordinates
        to (n, 2) values; a dict maps a boundary label to such a
        callable for that segment only.
    global_field : bool
        Interpolate a callable g at every vertex instead of only the
        Dirichlet ones; used when a case supplies an analytic extension
        of the boundary data to the whole domain.

    Bubble coefficients are always zero, so the lift is the plain P1
    nodal interpolant.
    """
    out = np.zeros(layout.n_velocity)
    if g is None:
        return out
    nv = layout.n_vertices

    if global_field:
        if isinstance(g, dict):
            raise ConfigurationError("a global lift needs a single callable")
        values = np.asarray(g(mesh.vertices), dtype=np.float64)
        out[:nv] = values[:, 0]
        out[nv : 2 * nv] = values[:, 1]
        return out

    if isinstance(g, dict):
        for i, j, label in mesh.boundary_edges:
            fn = g.get(int(label))
            if fn is None:
                continue
            pts = mesh.vertices[[i, j]]
            values = np.asarray(fn(pts), dtype=np.float64)
            for row, v in zip(values, (i, j)):
                out[v] = row[0]
                out[nv + v] = row[1]
        return out

    verts = layout.dirichlet_vertices
    if len(verts):
        values = np.asarray(g(mesh.vertices[verts]), dtype=np.float64)
        out[verts] = values[:, 0]
        out[nv + verts] = values[:, 1]
    return out


def eval_velocity(mesh, layout: FeLayout, w, tris, lam):
    """Evaluate a mini-element velocity field.

    tris is an index array of triangles and lam the matching (n, 3)
    barycentric coordinates; returns (n, 2) values.
    """
    tris = np.asarray(tris, dtype=np.int64)
    lam = np.atleast_2d(np.asarray(lam, dtype=np.float64))
    if len(lam) == 1 and len(tris) > 1:
        lam = np.broadcast_to(lam, (len(tris), 3))
    nv, nt = layout.n_vertices, layout.n_triangles
    conn = mesh.triangles[tris]
    bubble, _ = bubble_eval(lam)
    ux = np.einsum("nk,nk->n", lam, w[conn]) + bubble * w[2 * nv + tris]
    uy = np.einsum("nk,nk->n", lam, w[nv + conn]) + bubble * w[2 * nv + nt + tris]
    return np.column_stack([ux, uy])
