"""A posteriori indicators and derived run metrics.

Two per-element quantities drive the outer loops.  The linearization
indicator is the full H1(kappa) norm of the update between consecutive
fixed-point iterates.  The discretization indicator is a residual
estimator for the porosity-weighted momentum/mass system: an element
residual with piecewise-averaged data, weighted by the element
diameter; interior-edge jumps of the diffusive flux minus the pressure,
weighted by sqrt(h_e) and split evenly between the two neighbours; and
the L2 defect of the weighted divergence constraint.  The second
derivatives entering the strong residual come from the bubble alone,
since the P1 part is elementwise affine.

Metrics normalize the global indicator by solution norms (analytic
when an exact solution exists, discrete otherwise) and form the
efficiency index against the true error.  Data-oscillation terms are
computed as a separate diagnostic; they are never folded into the
indicator that drives refinement.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .assembly import _basis, _dphi_at, _geometry
from .fespace import GAUGE_ZERO_MEAN, default_rule
from .mesh import mesh_metrics

_FD_STEP = 1e-6  # central-difference step for the analytic porosity gradient


class ShapeError(ValueError):
    """An input vector does not match the mesh's DOF layout."""


class UnsupportedMetricError(Exception):
    """A requested metric needs data the caller did not provide."""


@dataclass
class IndicatorField:
    """Per-element indicators with their global aggregates.

    eta_D is the sum of the three stored parts; the globals are
    root-sum-squares over elements.
    """

    eta_L: np.ndarray
    residual_part: np.ndarray
    jump_part: np.ndarray
    divergence_part: np.ndarray

    @property
    def eta_D(self) -> np.ndarray:
        return self.residual_part + self.jump_part + self.divergence_part

    @property
    def eta_L_total(self) -> float:
        return float(np.sqrt(np.sum(self.eta_L**2)))

    @property
    def eta_D_total(self) -> float:
        return float(np.sqrt(np.sum(self.eta_D**2)))


@dataclass
class RunMetrics:
    """Normalized indicator and (when available) true-error figures."""

    e_total: float
    norm_u: float            # H1 seminorm of the reference velocity
    norm_p: float            # (mean-free) L2 norm of the reference pressure
    err: float | None = None
    ei: float | None = None
    err_abs: float | None = None


@dataclass
class ExactSolution:
    """Closed-form reference fields for the manufactured benchmark.

    u maps (n, 2) points to (n, 2) velocities, grad_u to (n, 2, 2)
    tensors with [i, c, d] = d u_c / d x_d, p to (n,) pressures.
    """

    u: Callable
    grad_u: Callable
    p: Callable


def _velocity_dofs(mesh):
    nv, nt = mesh.n_vertices, mesh.n_triangles
    t = np.arange(nt)[:, None]
    dofs_x = np.hstack([mesh.triangles, 2 * nv + t])
    dofs_y = np.hstack([nv + mesh.triangles, 2 * nv + nt + t])
    return dofs_x, dofs_y


def _check_velocity(mesh, **vectors):
    n = 2 * (mesh.n_vertices + mesh.n_triangles)
    for name, v in vectors.items():
        if v is not None and len(v) != n:
            raise ShapeError(f"{name} has {len(v)} entries, layout needs {n}")


def compute_eta_L(w_prev, w_next, mesh, rule=None) -> np.ndarray:
    """Per-element H1 norm (L2 part plus seminorm) of the iterate update."""
    w_prev = np.asarray(w_prev, dtype=np.float64)
    w_next = np.asarray(w_next, dtype=np.float64)
    _check_velocity(mesh, w_prev=w_prev, w_next=w_next)
    rule = rule or default_rule()
    lam, phi, cprod = _basis(rule)
    area, grads = _geometry(mesh)
    dofs_x, dofs_y = _velocity_dofs(mesh)
    delta = w_next - w_prev
    dx, dy = delta[dofs_x], delta[dofs_y]
    acc = np.zeros(mesh.n_triangles)
    for q, wq in enumerate(rule.weights):
        dphi = _dphi_at(grads, cprod[q])
        vx = dx @ phi[q]
        vy = dy @ phi[q]
        gx = np.einsum("mj,mjd->md", dx, dphi)
        gy = np.einsum("mj,mjd->md", dy, dphi)
        acc += wq * (vx**2 + vy**2 + (gx**2).sum(axis=1) + (gy**2).sum(axis=1))
    return np.sqrt(area * acc)


def _interior_edges(mesh):
    boundary = {(int(i), int(j)) for i, j, _ in mesh.boundary_edges}
    keys = [k for k in mesh.edge_adjacency if k not in boundary]
    if not keys:
        return None, None
    ev = np.asarray(keys, dtype=np.int64)
    et = np.asarray([mesh.edge_adjacency[k] for k in keys], dtype=np.int64)
    return ev, et


def _jump_part(mesh, coeffs, u_full, p_next, rule) -> np.ndarray:
    """Half of each interior edge's flux-jump norm, per incident element."""
    out = np.zeros(mesh.n_triangles)
    ev, et = _interior_edges(mesh)
    if ev is None:
        return out
    verts = mesh.vertices
    tang = verts[ev[:, 1]] - verts[ev[:, 0]]
    he = np.hypot(tang[:, 0], tang[:, 1])
    nrm = np.column_stack([-tang[:, 1], tang[:, 0]]) / he[:, None]

    _, grads = _geometry(mesh)
    conn = mesh.triangles[et]           # (E, 2, 3)
    gt = grads[et]                      # (E, 2, 3, 2)
    nv, nt = mesh.n_vertices, mesh.n_triangles
    cx, cy = u_full[conn], u_full[nv + conn]
    bx, by = u_full[2 * nv + et], u_full[2 * nv + nt + et]
    pv = p_next[conn]
    eps_ab = coeffs.eps_h[ev]           # (E, 2), continuous along the edge
    loc_a = (conn == ev[:, 0, None, None]).argmax(axis=2)
    loc_b = (conn == ev[:, 1, None, None]).argmax(axis=2)
    rows = np.arange(len(ev))[:, None]
    cols = np.arange(2)[None, :]
    inv_re = 1.0 / coeffs.reynolds

    acc = np.zeros(len(ev))
    for s, ws in zip(rule.edge_points, rule.edge_weights):
        lam = np.zeros((len(ev), 2, 3))
        lam[rows, cols, loc_a] = 1.0 - s
        lam[rows, cols, loc_b] = s
        cpr = np.stack(
            [
                lam[..., 1] * lam[..., 2],
                lam[..., 0] * lam[..., 2],
                lam[..., 0] * lam[..., 1],
            ],
            axis=-1,
        )
        gradb = np.einsum("esk,eskd->esd", cpr, gt)
        gux = np.einsum("esk,eskd->esd", cx, gt) + bx[..., None] * gradb
        guy = np.einsum("esk,eskd->esd", cy, gt) + by[..., None] * gradb
        eps_s = eps_ab[:, 0] * (1.0 - s) + eps_ab[:, 1] * s
        pq = np.einsum("esk,esk->es", pv, lam)
        flux = inv_re * eps_s[:, None]
        val_x = flux * np.einsum("esd,ed->es", gux, nrm) - pq * nrm[:, 0, None]
        val_y = flux * np.einsum("esd,ed->es", guy, nrm) - pq * nrm[:, 1, None]
        jx = val_x[:, 0] - val_x[:, 1]
        jy = val_y[:, 0] - val_y[:, 1]
        acc += ws * (jx**2 + jy**2)
    # h_e^(1/2) * sqrt(h_e * acc) collapses to h_e * sqrt(acc)
    contribution = he * np.sqrt(acc)
    np.add.at(out, et[:, 0], 0.5 * contribution)
    np.add.at(out, et[:, 1], 0.5 * contribution)
    return out


def compute_eta_D(
    mesh,
    coeffs,
    averages,
    w_prev,
    w_next,
    p_next,
    lift=None,
    transport=None,
    rule=None,
    split_forchheimer_weight=False,
):
    """Element components of the discretization indicator.

    Returns (residual_part, jump_part, divergence_part), each (m,).
    The strong residual keeps the transport and Forchheimer slots at
    the previous iterate and everything else at the new one; transport
    overrides the advecting field (lift included) for schemes that
    average it.  The Forchheimer magnitude is |lift + w_prev|;
    split_forchheimer_weight switches to the printed |lift| + |w_prev|
    variant.  Jumps run over interior edges only, so open-boundary
    edges never contribute.
    """
    w_prev = np.asarray(w_prev, dtype=np.float64)
    w_next = np.asarray(w_next, dtype=np.float64)
    p_next = np.asarray(p_next, dtype=np.float64)
    _check_velocity(mesh, w_prev=w_prev, w_next=w_next, lift=lift, transport=transport)
    if len(p_next) != mesh.n_vertices:
        raise ShapeError(
            f"pressure has {len(p_next)} entries, mesh has {mesh.n_vertices} vertices"
        )
    rule = rule or default_rule()
    nvel = 2 * (mesh.n_vertices + mesh.n_triangles)
    lift_vec = np.zeros(nvel) if lift is None else np.asarray(lift, dtype=np.float64)
    if transport is None:
        transport = lift_vec + w_prev
    else:
        transport = np.asarray(transport, dtype=np.float64)
    if split_forchheimer_weight:
        forch_fields = [lift_vec, w_prev]
    else:
        forch_fields = [lift_vec + w_prev]

    lam, phi, cprod = _basis(rule)
    area, grads = _geometry(mesh)
    metrics = mesh_metrics(mesh)
    eps_tri = coeffs.eps_h[mesh.triangles]
    geps = np.einsum("mk,mkd->md", eps_tri, grads)
    gg = np.einsum("mid,mjd->mij", grads, grads)
    dofs_x, dofs_y = _velocity_dofs(mesh)

    u_full = w_next + lift_vec
    ufx, ufy = u_full[dofs_x], u_full[dofs_y]
    trx, trY = transport[dofs_x], transport[dofs_y]
    fxy = [(fld[dofs_x], fld[dofs_y]) for fld in forch_fields]
    gp = np.einsum("mk,mkd->md", p_next[mesh.triangles], grads)
    f_h, alpha_h, beta_h = averages.f_h, averages.alpha_h, averages.beta_h
    inv_re = 1.0 / coeffs.reynolds

    racc = np.zeros(mesh.n_triangles)
    dacc = np.zeros(mesh.n_triangles)
    for q, wq in enumerate(rule.weights):
        dphi = _dphi_at(grads, cprod[q])
        eps_q = eps_tri @ lam[q]
        # Laplacian of the bubble: the P1 part is elementwise affine
        lapb = 2.0 * (
            lam[q, 2] * gg[:, 0, 1] + lam[q, 1] * gg[:, 0, 2] + lam[q, 0] * gg[:, 1, 2]
        )
        ux, uy = ufx @ phi[q], ufy @ phi[q]
        gux = np.einsum("mj,mjd->md", ufx, dphi)
        guy = np.einsum("mj,mjd->md", ufy, dphi)
        tx, ty = trx @ phi[q], trY @ phi[q]
        divtr = np.einsum("mj,mj->m", trx, dphi[:, :, 0]) + np.einsum(
            "mj,mj->m", trY, dphi[:, :, 1]
        )
        div_eps_tr = geps[:, 0] * tx + geps[:, 1] * ty + eps_q * divtr
        speed = np.zeros(mesh.n_triangles)
        for fx, fy in fxy:
            speed += np.hypot(fx @ phi[q], fy @ phi[q])

        rx = (
            eps_q * f_h[:, 0]
            + inv_re * (geps[:, 0] * gux[:, 0] + geps[:, 1] * gux[:, 1] + eps_q * ufx[:, 3] * lapb)
            - alpha_h * ux
            - eps_q * (tx * gux[:, 0] + ty * gux[:, 1])
            - 0.5 * div_eps_tr * ux
            - beta_h * speed * ux
            - eps_q * gp[:, 0]
        )
        ry = (
            eps_q * f_h[:, 1]
            + inv_re * (geps[:, 0] * guy[:, 0] + geps[:, 1] * guy[:, 1] + eps_q * ufy[:, 3] * lapb)
            - alpha_h * uy
            - eps_q * (tx * guy[:, 0] + ty * guy[:, 1])
            - 0.5 * div_eps_tr * uy
            - beta_h * speed * uy
            - eps_q * gp[:, 1]
        )
        racc += wq * (rx**2 + ry**2)
        divu = np.einsum("mj,mj->m", ufx, dphi[:, :, 0]) + np.einsum(
            "mj,mj->m", ufy, dphi[:, :, 1]
        )
        dacc += wq * (geps[:, 0] * ux + geps[:, 1] * uy + eps_q * divu) ** 2

    residual_part = metrics.h * np.sqrt(area * racc)
    divergence_part = np.sqrt(area * dacc)
    jump_part = _jump_part(mesh, coeffs, u_full, p_next, rule)
    return residual_part, jump_part, divergence_part


def compute_indicators(
    mesh,
    coeffs,
    averages,
    w_prev,
    w_next,
    p_next,
    lift=None,
    transport=None,
    rule=None,
    split_forchheimer_weight=False,
) -> IndicatorField:
    """Bundle eta_L and the eta_D parts for one iterate pair."""
    eta_L = compute_eta_L(w_prev, w_next, mesh, rule=rule)
    resid, jump, div = compute_eta_D(
        mesh,
        coeffs,
        averages,
        w_prev,
        w_next,
        p_next,
        lift=lift,
        transport=transport,
        rule=rule,
        split_forchheimer_weight=split_forchheimer_weight,
    )
    return IndicatorField(
        eta_L=eta_L, residual_part=resid, jump_part=jump, divergence_part=div
    )


def _mean_free_norm(sq_int, lin_int, total_area, remove_mean):
    if remove_mean:
        sq_int = max(sq_int - lin_int**2 / total_area, 0.0)
    return float(np.sqrt(sq_int))


def compute_metrics(
    mesh,
    layout,
    w,
    p,
    lift=None,
    *,
    eta_D_total,
    exact=None,
    include_error=None,
    rule=None,
) -> RunMetrics:
    """Normalized indicator, relative error, and efficiency index.

    The denominator |u|_X + ||p||_M uses the exact fields when given,
    the discrete solution otherwise (open-boundary cases have no
    analytic reference).  include_error defaults to "when exact is
    available"; forcing it without an exact solution raises.  With the
    zero-mean gauge the pressure norms are taken mean-free.
    """
    include_error = (exact is not None) if include_error is None else include_error
    if include_error and exact is None:
        raise UnsupportedMetricError("err/EI need an exact solution")
    w = np.asarray(w, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    _check_velocity(mesh, w=w, lift=lift)
    if len(p) != mesh.n_vertices:
        raise ShapeError("pressure vector does not match the mesh")
    rule = rule or default_rule()
    remove_mean = layout.gauge == GAUGE_ZERO_MEAN
    u_full = w if lift is None else w + np.asarray(lift, dtype=np.float64)

    lam, phi, cprod = _basis(rule)
    area, grads = _geometry(mesh)
    pts_tri = mesh.vertices[mesh.triangles]
    dofs_x, dofs_y = _velocity_dofs(mesh)
    ufx, ufy = u_full[dofs_x], u_full[dofs_y]
    pv = p[mesh.triangles]
    total_area = float(area.sum())

    su_h = sp_h = ip_h = 0.0
    su_ex = sp_ex = ip_ex = 0.0
    su_d = sp_d = ip_d = 0.0
    for q, wq in enumerate(rule.weights):
        dphi = _dphi_at(grads, cprod[q])
        gux = np.einsum("mj,mjd->md", ufx, dphi)
        guy = np.einsum("mj,mjd->md", ufy, dphi)
        wa = wq * area
        su_h += float(np.sum(wa * ((gux**2).sum(axis=1) + (guy**2).sum(axis=1))))
        ph = pv @ lam[q]
        sp_h += float(np.sum(wa * ph**2))
        ip_h += float(np.sum(wa * ph))
        if exact is not None:
            x = np.einsum("k,mkd->md", lam[q], pts_tri)
            ge = np.asarray(exact.grad_u(x), dtype=np.float64)
            su_ex += float(np.sum(wa * (ge**2).sum(axis=(1, 2))))
            dgx = ge[:, 0, :] - gux
            dgy = ge[:, 1, :] - guy
            su_d += float(np.sum(wa * ((dgx**2).sum(axis=1) + (dgy**2).sum(axis=1))))
            pe = np.asarray(exact.p(x), dtype=np.float64)
            sp_ex += float(np.sum(wa * pe**2))
            ip_ex += float(np.sum(wa * pe))
            dp = pe - ph
            sp_d += float(np.sum(wa * dp**2))
            ip_d += float(np.sum(wa * dp))

    if exact is not None:
        norm_u = float(np.sqrt(su_ex))
        norm_p = _mean_free_norm(sp_ex, ip_ex, total_area, remove_mean)
    else:
        norm_u = float(np.sqrt(su_h))
        norm_p = _mean_free_norm(sp_h, ip_h, total_area, remove_mean)
    denom = norm_u + norm_p
    metrics = RunMetrics(
        e_total=eta_D_total / denom, norm_u=norm_u, norm_p=norm_p
    )
    if include_error:
        err_abs = float(np.sqrt(su_d)) + _mean_free_norm(
            sp_d, ip_d, total_area, remove_mean
        )
        metrics.err_abs = err_abs
        metrics.err = err_abs / denom
        metrics.ei = eta_D_total / err_abs
    return metrics


def compute_oscillation(
    mesh, coeffs, averages, f=None, lift=None, lift_exact=None, rule=None
) -> np.ndarray:
    """Per-element data-oscillation diagnostic.

    Root-sum of the data errors that accompany the indicator in the
    error bound: h||f - f_h||_L2, the H1 seminorm of the lift
    interpolation error, ||eps - eps_h||_inf, the L3 norm of the
    porosity-gradient error, and the L2/L6 norms of the averaged
    alpha/beta errors.  The analytic porosity gradient is taken by
    central differences, and the max norm is sampled at the quadrature
    points, which is adequate for a diagnostic.  Reported alongside
    eta_D, never added into it.
    """
    rule = rule or default_rule()
    if (lift is None) != (lift_exact is None):
        raise ShapeError("lift and lift_exact must be given together")
    _check_velocity(mesh, lift=lift)
    lam, phi, cprod = _basis(rule)
    area, grads = _geometry(mesh)
    pts_tri = mesh.vertices[mesh.triangles]
    eps_tri = coeffs.eps_h[mesh.triangles]
    geps_h = np.einsum("mk,mkd->md", eps_tri, grads)
    f_h, alpha_h, beta_h = averages.f_h, averages.alpha_h, averages.beta_h
    m = mesh.n_triangles
    if lift is not None:
        dofs_x, dofs_y = _velocity_dofs(mesh)
        gx_dofs, gy_dofs = lift[dofs_x], lift[dofs_y]

    sf = np.zeros(m)
    sg = np.zeros(m)
    eps_max = np.zeros(m)
    s_geps = np.zeros(m)
    sa = np.zeros(m)
    sb = np.zeros(m)
    dx = np.array([_FD_STEP, 0.0])
    dy = np.array([0.0, _FD_STEP])
    for q, wq in enumerate(rule.weights):
        x = np.einsum("k,mkd->md", lam[q], pts_tri)
        eps_exact = np.asarray(coeffs.epsilon(x), dtype=np.float64)
        eps_h_q = eps_tri @ lam[q]
        eps_max = np.maximum(eps_max, np.abs(eps_exact - eps_h_q))

        gx = (coeffs.epsilon(x + dx) - coeffs.epsilon(x - dx)) / (2.0 * _FD_STEP)
        gy = (coeffs.epsilon(x + dy) - coeffs.epsilon(x - dy)) / (2.0 * _FD_STEP)
        gdiff = np.hypot(gx - geps_h[:, 0], gy - geps_h[:, 1])
        s_geps += wq * gdiff**3

        sa += wq * (np.asarray(coeffs.alpha(eps_exact)) - alpha_h) ** 2
        sb += wq * np.abs(np.asarray(coeffs.beta(eps_exact)) - beta_h) ** 6

        if f is not None:
            fv = np.asarray(f(x), dtype=np.float64).reshape(m, 2)
            sf += wq * ((fv - f_h) ** 2).sum(axis=1)
        if lift is not None:
            dphi = _dphi_at(grads, cprod[q])
            ghx = np.einsum("mj,mjd->md", gx_dofs, dphi)
            ghy = np.einsum("mj,mjd->md", gy_dofs, dphi)
            ge = np.asarray(lift_exact.grad_u(x), dtype=np.float64)
            sg += wq * (
                ((ge[:, 0, :] - ghx) ** 2).sum(axis=1)
                + ((ge[:, 1, :] - ghy) ** 2).sum(axis=1)
            )

    metrics = mesh_metrics(mesh)
    out = (
        metrics.h**2 * area * sf
        + area * sg
        + eps_max**2
        + (area * s_geps) ** (2.0 / 3.0)
        + area * sa
        + (area * sb) ** (1.0 / 3.0)
    )
    return np.sqrt(out)
