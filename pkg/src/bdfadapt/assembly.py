"""Global assembly of the discrete forms.

All velocity blocks are built per scalar component: the vector mini
element acts componentwise, so one (m, 4, 4) batch of element matrices
serves both the x and y diagonal blocks.  The porosity enters through
its P1 interpolant, whose element gradient is constant, so the product
rule div(eps v) = grad(eps).v + eps div(v) is exact.  Quadrature loops
run point by point with vectorized element batches to keep memory flat.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .fespace import FeLayout, default_rule


@dataclass
class LinearSystem:
    """Assembled saddle-point system, optionally constrained.

    Until apply_constraints runs, free and prescribed are None and the
    matrix covers velocity + pressure (+ one gauge multiplier).  After
    constraining, free lists the retained unknown indices of the full
    ordering and prescribed stores the values of eliminated DOFs.
    """

    matrix: sp.spmatrix
    rhs: np.ndarray
    n_velocity: int
    n_pressure: int
    has_gauge: bool
    free: np.ndarray | None = None
    prescribed: np.ndarray | None = None


def _geometry(mesh):
    """Areas and constant P1 basis gradients, (m,) and (m, 3, 2)."""
    p = mesh.vertices[mesh.triangles]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    area = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
    grads = np.empty((len(p), 3, 2))
    for i in range(3):
        e = p[:, (i + 2) % 3] - p[:, (i + 1) % 3]
        grads[:, i, 0] = -e[:, 1]
        grads[:, i, 1] = e[:, 0]
    grads /= (2.0 * area)[:, None, None]
    return area, grads


def _dof_map(mesh, layout: FeLayout):
    """(m, 4) global DOF indices for each component's element basis."""
    nv, nt = layout.n_vertices, layout.n_triangles
    t = np.arange(nt)[:, None]
    dofs_x = np.hstack([mesh.triangles, 2 * nv + t])
    dofs_y = np.hstack([nv + mesh.triangles, 2 * nv + nt + t])
    return dofs_x, dofs_y


def _basis(rule):
    """P1+bubble values per quadrature point and the barycentric
    products that turn P1 gradients into the bubble gradient."""
    lam = rule.points
    bubble = lam[:, 0] * lam[:, 1] * lam[:, 2]
    phi = np.column_stack([lam, bubble])
    cprod = np.column_stack(
        [lam[:, 1] * lam[:, 2], lam[:, 0] * lam[:, 2], lam[:, 0] * lam[:, 1]]
    )
    return lam, phi, cprod


def _dphi_at(grads, cprod_q):
    m = len(grads)
    dphi = np.empty((m, 4, 2))
    dphi[:, :3] = grads
    dphi[:, 3] = np.einsum("k,mkd->md", cprod_q, grads)
    return dphi


def _scatter(block, rows, cols, shape):
    i = np.repeat(rows[:, :, None], block.shape[2], axis=2)
    j = np.repeat(cols[:, None, :], block.shape[1], axis=1)
    return sp.coo_matrix(
        (block.ravel(), (i.ravel(), j.ravel())), shape=shape
    ).tocsr()


def assemble_a(mesh, coeffs, layout: FeLayout, rule=None) -> sp.csr_matrix:
    """Velocity-velocity matrix of the viscous + Darcy form."""
    rule = rule or default_rule()
    area, grads = _geometry(mesh)
    eps_tri = coeffs.eps_h[mesh.triangles]
    lam, phi, cprod = _basis(rule)
    m = mesh.n_triangles
    S = np.zeros((m, 4, 4))
    inv_re = 1.0 / coeffs.reynolds
    for q, w in enumerate(rule.weights):
        eps_q = eps_tri @ lam[q]
        alpha_q = np.asarray(coeffs.alpha(eps_q), dtype=np.float64)
        dphi = _dphi_at(grads, cprod[q])
        S += (w * inv_re) * np.einsum("m,mid,mjd->mij", eps_q, dphi, dphi)
        S += w * np.einsum("m,i,j->mij", alpha_q, phi[q], phi[q])
    S *= area[:, None, None]
    dofs_x, dofs_y = _dof_map(mesh, layout)
    n = layout.n_velocity
    return _scatter(S, dofs_x, dofs_x, (n, n)) + _scatter(
        S, dofs_y, dofs_y, (n, n)
    )


def assemble_b(mesh, coeffs, layout: FeLayout, rule=None) -> sp.csr_matrix:
    """Pressure-velocity matrix of (div(eps v), q)."""
    rule = rule or default_rule()
    area, grads = _geometry(mesh)
    eps_tri = coeffs.eps_h[mesh.triangles]
    geps = np.einsum("mk,mkd->md", eps_tri, grads)
    lam, phi, cprod = _basis(rule)
    m = mesh.n_triangles
    blocks = [np.zeros((m, 3, 4)), np.zeros((m, 3, 4))]
    for q, w in enumerate(rule.weights):
        eps_q = eps_tri @ lam[q]
        dphi = _dphi_at(grads, cprod[q])
        for c in (0, 1):
            integrand = (
                geps[:, c, None] * phi[q][None, :] + eps_q[:, None] * dphi[:, :, c]
            )
            blocks[c] += w * np.einsum("k,mj->mkj", lam[q], integrand)
    dofs = _dof_map(mesh, layout)
    shape = (layout.n_pressure, layout.n_velocity)
    out = sp.csr_matrix(shape)
    for c in (0, 1):
        blocks[c] *= area[:, None, None]
        out = out + _scatter(blocks[c], mesh.triangles, dofs[c], shape)
    return out


def assemble_convection(
    mesh, coeffs, layout: FeLayout, u_transport, forch_fields=None, rule=None
):
    """Transport matrix D and Forchheimer mass matrix M.

    D carries (eps (u.grad)v, w) plus half the (div(eps u) v, w)
    stabilization, evaluated at the given transport velocity (lift
    included by the caller).  M weights the mass matrix with
    beta(eps) times the sum of |field| over forch_fields, which
    defaults to [u_transport].  Returned separately so callers can test
    the skew identity of D alone; the Picard matrix is their sum.
    """
    rule = rule or default_rule()
    if forch_fields is None:
        forch_fields = [u_transport]
    area, grads = _geometry(mesh)
    eps_tri = coeffs.eps_h[mesh.triangles]
    geps = np.einsum("mk,mkd->md", eps_tri, grads)
    lam, phi, cprod = _basis(rule)
    m = mesh.n_triangles
    dofs_x, dofs_y = _dof_map(mesh, layout)
    utx, uty = u_transport[dofs_x], u_transport[dofs_y]
    fields = [(f[dofs_x], f[dofs_y]) for f in forch_fields]

    D = np.zeros((m, 4, 4))
    Mb = np.zeros((m, 4, 4))
    for q, w in enumerate(rule.weights):
        eps_q = eps_tri @ lam[q]
        beta_q = np.asarray(coeffs.beta(eps_q), dtype=np.float64)
        dphi = _dphi_at(grads, cprod[q])
        ux = utx @ phi[q]
        uy = uty @ phi[q]
        divu = np.einsum("mj,mj->m", utx, dphi[:, :, 0]) + np.einsum(
            "mj,mj->m", uty, dphi[:, :, 1]
        )
        div_eps_u = geps[:, 0] * ux + geps[:, 1] * uy + eps_q * divu
        conv = ux[:, None] * dphi[:, :, 0] + uy[:, None] * dphi[:, :, 1]
        D += w * np.einsum("m,i,mj->mij", eps_q, phi[q], conv)
        D += (0.5 * w) * np.einsum("m,i,j->mij", div_eps_u, phi[q], phi[q])

        weight = np.zeros(m)
        for fx, fy in fields:
            weight += np.hypot(fx @ phi[q], fy @ phi[q])
        Mb += w * np.einsum("m,i,j->mij", beta_q * weight, phi[q], phi[q])

    D *= area[:, None, None]
    Mb *= area[:, None, None]
    n = layout.n_velocity
    D_mat = _scatter(D, dofs_x, dofs_x, (n, n)) + _scatter(D, dofs_y, dofs_y, (n, n))
    M_mat = _scatter(Mb, dofs_x, dofs_x, (n, n)) + _scatter(Mb, dofs_y, dofs_y, (n, n))
    return D_mat, M_mat


def assemble_load(mesh, coeffs, layout: FeLayout, f, rule=None) -> np.ndarray:
    """Load vector of (eps f, v); f None means zero forcing."""
    out = np.zeros(layout.n_velocity)
    if f is None:
        return out
    rule = rule or default_rule()
    area, _ = _geometry(mesh)
    eps_tri = coeffs.eps_h[mesh.triangles]
    p = mesh.vertices[mesh.triangles]
    lam, phi, _ = _basis(rule)
    m = mesh.n_triangles
    loads = [np.zeros((m, 4)), np.zeros((m, 4))]
    for q, w in enumerate(rule.weights):
        eps_q = eps_tri @ lam[q]
        points = np.einsum("k,mkd->md", lam[q], p)
        fv = np.asarray(f(points), dtype=np.float64).reshape(m, 2)
        for c in (0, 1):
            loads[c] += w * (eps_q * fv[:, c])[:, None] * phi[q][None, :]
    dofs = _dof_map(mesh, layout)
    for c in (0, 1):
        np.add.at(out, dofs[c], loads[c] * area[:, None])
    return out


def assemble_rhs(
    mesh, coeffs, layout: FeLayout, f, u_prev, lift, rule=None
) -> np.ndarray:
    """Right-hand side of one fixed-point step.

    Computes the load minus the full operator applied to the lift, with
    the transport and Forchheimer slots both evaluated at u_prev + lift.
    """
    rule = rule or default_rule()
    load = assemble_load(mesh, coeffs, layout, f, rule)
    if not np.any(lift):
        return load
    A = assemble_a(mesh, coeffs, layout, rule)
    D, M = assemble_convection(mesh, coeffs, layout, u_prev + lift, rule=rule)
    return load - (A + D + M) @ lift


def pressure_integral_vector(mesh, layout: FeLayout) -> np.ndarray:
    """Vector m with m.p = integral of the P1 pressure field p."""
    area, _ = _geometry(mesh)
    return np.bincount(
        mesh.triangles.ravel(),
        weights=np.repeat(area / 3.0, 3),
        minlength=layout.n_pressure,
    )


def build_saddle(mesh, layout: FeLayout, K, B, rhs_velocity) -> LinearSystem:
    """Block system for one step: [[K, -B^T], [B, 0]] plus a gauge row.

    With the zero-mean gauge a single Lagrange multiplier couples to the
    pressure integral; an open boundary needs none.
    """
    nv, np_ = layout.n_velocity, layout.n_pressure
    has_gauge = layout.gauge == "zero-mean-pressure"
    if has_gauge:
        mvec = sp.csr_matrix(pressure_integral_vector(mesh, layout)[:, None])
        matrix = sp.bmat(
            [[K, -B.T, None], [B, None, mvec], [None, mvec.T, None]], format="csr"
        )
        rhs = np.concatenate([rhs_velocity, np.zeros(np_ + 1)])
    else:
        matrix = sp.bmat([[K, -B.T], [B, None]], format="csr")
        rhs = np.concatenate([rhs_velocity, np.zeros(np_)])
    return LinearSystem(
        matrix=matrix,
        rhs=rhs,
        n_velocity=nv,
        n_pressure=np_,
        has_gauge=has_gauge,
    )


def apply_constraints(
    system: LinearSystem, layout: FeLayout, g_values=None
) -> LinearSystem:
    """Eliminate Dirichlet velocity DOFs symmetrically.

    g_values optionally supplies nonzero values for the eliminated DOFs
    (moved to the right-hand side); the fixed-point unknown is
    homogeneous, so solvers pass nothing.
    """
    total = system.matrix.shape[0]
    constrained = np.zeros(total, dtype=bool)
    constrained[: system.n_velocity] = layout.dirichlet_mask
    free = np.flatnonzero(~constrained)
    prescribed = np.zeros(total)
    if g_values is not None:
        prescribed[: system.n_velocity][layout.dirichlet_mask] = np.asarray(
            g_values
        )[layout.dirichlet_mask]

    csc = system.matrix.tocsc()
    rhs = system.rhs.copy()
    fixed = np.flatnonzero(constrained)
    if len(fixed) and np.any(prescribed):
        rhs = rhs - csc[:, fixed] @ prescribed[fixed]
    sub = csc[:, free].tocsr()[free, :]
    return LinearSystem(
        matrix=sub,
        rhs=rhs[free],
        n_velocity=system.n_velocity,
        n_pressure=system.n_pressure,
        has_gauge=system.has_gauge,
        free=free,
        prescribed=prescribed,
    )


def expand_solution(system: LinearSystem, x_free) -> np.ndarray:
    """Scatter a constrained solution back to the full ordering."""
    out = system.prescribed.copy()
    out[system.free] = x_free
    return out
