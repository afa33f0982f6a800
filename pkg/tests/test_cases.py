"""Benchmark case definitions checked against independent evaluations.

The forcing of the manufactured case comes from symbolic derivatives;
the oracle here rebuilds the strong residual from hand-transcribed
closures and fourth-order finite differences, so an error in either
derivation path shows up as a mismatch.
"""

import numpy as np
import pytest

from bdfadapt.cases import (
    ProblemSpec,
    initial_mesh,
    manufactured_case,
    packed_bed_case,
)
from bdfadapt.fespace import ConfigurationError, GAUGE_NONE, GAUGE_ZERO_MEAN
from bdfadapt.mesh import BOTTOM, LEFT, RIGHT, TOP

FD_H = 1e-3


def hand_psi(x, y):
    return np.exp(-30.0 * ((x - 0.5) ** 2 + (y - 0.5) ** 2))


def hand_eps(x, y):
    return (1.0 + np.exp(x + y)) / 10.0


def hand_u(x, y):
    # (1/eps) * (d psi/dy, -d psi/dx)
    psi = hand_psi(x, y)
    eps = hand_eps(x, y)
    return np.stack(
        [-60.0 * (y - 0.5) * psi / eps, 60.0 * (x - 0.5) * psi / eps], axis=-1
    )


def hand_p(x, y):
    return np.cos(np.pi * x) * np.cos(np.pi * y)


def d1(fn, x, y, axis):
    h = FD_H
    dx = h if axis == 0 else 0.0
    dy = h if axis == 1 else 0.0
    return (
        -fn(x + 2 * dx, y + 2 * dy)
        + 8.0 * fn(x + dx, y + dy)
        - 8.0 * fn(x - dx, y - dy)
        + fn(x - 2 * dx, y - 2 * dy)
    ) / (12.0 * h)


def d2(fn, x, y, axis):
    h = FD_H
    dx = h if axis == 0 else 0.0
    dy = h if axis == 1 else 0.0
    return (
        -fn(x + 2 * dx, y + 2 * dy)
        + 16.0 * fn(x + dx, y + dy)
        - 30.0 * fn(x, y)
        + 16.0 * fn(x - dx, y - dy)
        - fn(x - 2 * dx, y - 2 * dy)
    ) / (12.0 * h**2)


def test_manufactured_point_values():
    spec = manufactured_case(100.0)
    pts = np.array([[0.0, 0.0], [0.5, 0.5], [1.0, 1.0]])
    p = spec.exact.p(pts)
    assert p[0] == pytest.approx(1.0, abs=1e-14)
    assert p[1] == pytest.approx(0.0, abs=1e-14)
    u = spec.exact.u(pts)
    assert np.all(np.abs(u[1]) <= 1e-14)
    eps = spec.epsilon(pts)
    assert eps[0] == pytest.approx(0.2, rel=1e-14)
    assert eps[2] == pytest.approx((1.0 + np.exp(2.0)) / 10.0, rel=1e-14)
    assert spec.alpha(np.array([0.2]))[0] == pytest.approx(0.64, rel=1e-14)
    assert spec.beta(np.array([0.2]))[0] == pytest.approx(1.2, rel=1e-14)


def test_manufactured_matches_hand_closures():
    spec = manufactured_case(50.0)
    rng = np.random.default_rng(21)
    pts = rng.uniform(0.0, 1.0, size=(40, 2))
    x, y = pts[:, 0], pts[:, 1]
    assert spec.exact.u(pts) == pytest.approx(hand_u(x, y), rel=1e-12, abs=1e-14)
    assert spec.exact.p(pts) == pytest.approx(hand_p(x, y), rel=1e-12)
    assert spec.epsilon(pts) == pytest.approx(hand_eps(x, y), rel=1e-13)


def test_manufactured_velocity_divergence_free():
    # div(eps u) = div curl psi = 0; checked from the produced closed
    # forms with the hand gradient of eps
    spec = manufactured_case(200.0)
    rng = np.random.default_rng(5)
    pts = rng.uniform(0.0, 1.0, size=(100, 2))
    u = spec.exact.u(pts)
    g = spec.exact.grad_u(pts)
    geps = np.exp(pts[:, 0] + pts[:, 1])[:, None] / 10.0 * np.ones((1, 2))
    div_eps_u = (
        geps[:, 0] * u[:, 0]
        + geps[:, 1] * u[:, 1]
        + spec.epsilon(pts) * (g[:, 0, 0] + g[:, 1, 1])
    )
    assert np.all(np.abs(div_eps_u) <= 1e-12)


def test_manufactured_grad_u_matches_finite_differences():
    spec = manufactured_case(100.0)
    rng = np.random.default_rng(9)
    pts = rng.uniform(0.05, 0.95, size=(50, 2))
    x, y = pts[:, 0], pts[:, 1]
    g = spec.exact.grad_u(pts)
    for c in (0, 1):
        comp = lambda xx, yy: hand_u(xx, yy)[..., c]
        assert np.max(np.abs(g[:, c, 0] - d1(comp, x, y, 0))) <= 1e-6
        assert np.max(np.abs(g[:, c, 1] - d1(comp, x, y, 1))) <= 1e-6


def test_manufactured_forcing_fd_oracle():
    # strong residual rebuilt with hand closures and FD derivatives:
    # -(1/Re)(grad eps . grad u_c + eps lap u_c) + u_c div(eps u)
    # + eps (u.grad)u_c + alpha u_c + beta |u| u_c + eps dp_c = eps f_c
    re = 100.0
    spec = manufactured_case(re)
    rng = np.random.default_rng(31)
    pts = rng.uniform(0.05, 0.95, size=(50, 2))
    x, y = pts[:, 0], pts[:, 1]

    eps = hand_eps(x, y)
    geps = np.stack([d1(hand_eps, x, y, 0), d1(hand_eps, x, y, 1)], axis=-1)
    u = hand_u(x, y)
    speed = np.hypot(u[:, 0], u[:, 1])
    alpha = (1.0 - eps) ** 2
    beta = 1.0 + eps
    gp = np.stack([d1(hand_p, x, y, 0), d1(hand_p, x, y, 1)], axis=-1)

    comps = [lambda xx, yy: hand_u(xx, yy)[..., 0], lambda xx, yy: hand_u(xx, yy)[..., 1]]
    gu = np.empty((len(pts), 2, 2))
    lap = np.empty((len(pts), 2))
    for c in (0, 1):
        gu[:, c, 0] = d1(comps[c], x, y, 0)
        gu[:, c, 1] = d1(comps[c], x, y, 1)
        lap[:, c] = d2(comps[c], x, y, 0) + d2(comps[c], x, y, 1)
    div_eps_u = geps[:, 0] * u[:, 0] + geps[:, 1] * u[:, 1] + eps * (
        gu[:, 0, 0] + gu[:, 1, 1]
    )

    f = spec.f(pts)
    for c in (0, 1):
        residual = (
            -(geps[:, 0] * gu[:, c, 0] + geps[:, 1] * gu[:, c, 1] + eps * lap[:, c]) / re
            + u[:, c] * div_eps_u
            + eps * (u[:, 0] * gu[:, c, 0] + u[:, 1] * gu[:, c, 1])
            + alpha * u[:, c]
            + beta * speed * u[:, c]
            + eps * gp[:, c]
            - eps * f[:, c]
        )
        assert np.max(np.abs(residual)) <= 1e-6


def test_manufactured_configuration():
    spec = manufactured_case(500.0)
    assert spec.rect == (0.0, 0.0, 1.0, 1.0)
    assert sorted(spec.dirichlet_labels) == sorted((LEFT, RIGHT, BOTTOM, TOP))
    assert spec.open_labels == ()
    assert spec.gauge == GAUGE_ZERO_MEAN
    assert spec.lift_field is None
    assert spec.exact is not None
    assert spec.reynolds == 500.0
    with pytest.raises(ConfigurationError):
        manufactured_case(0.0)


def test_packed_bed_coefficient_values():
    spec = packed_bed_case(100.0, 0.2)
    pts = np.array([[0.3, 1.0], [1.7, 0.0]])
    eps = spec.epsilon(pts)
    assert eps[0] == pytest.approx(1.0, rel=1e-14)
    assert eps[1] == pytest.approx(0.45 + 0.55 * np.exp(-1.0), rel=1e-14)
    e = np.array([0.45])
    assert spec.alpha(e)[0] == pytest.approx(1.5 * (0.55 / 0.45) ** 2, rel=1e-14)
    assert spec.beta(e)[0] == pytest.approx(1.75 * 0.55 / 0.45, rel=1e-14)
    assert spec.f is None
    assert spec.exact is None
    assert spec.gauge == GAUGE_NONE
    assert sorted(spec.dirichlet_labels) == sorted((LEFT, BOTTOM, TOP))
    assert spec.open_labels == (RIGHT,)
    with pytest.raises(ConfigurationError):
        packed_bed_case(100.0, -1.0)


def test_packed_bed_lift_profile_and_divergence():
    c_in = 0.2
    spec = packed_bed_case(50.0, c_in)
    rng = np.random.default_rng(17)
    pts = rng.uniform((0.0, 0.0), (2.0, 1.0), size=(60, 2))
    g = spec.lift_field(pts)
    y = pts[:, 1]
    assert g[:, 0] == pytest.approx(c_in * (1.0 - y) * y, rel=1e-14)
    assert np.all(g[:, 1] == 0.0)
    walls = np.array([[0.5, 0.0], [1.5, 1.0]])
    assert np.all(np.abs(spec.lift_field(walls)) <= 1e-15)

    # div(eps G): the x component depends only on y and G_y = 0, so the
    # finite-difference x derivative is identically zero
    def eps_gx(x, y):
        p = np.stack([x, y], axis=-1)
        return spec.epsilon(p) * spec.lift_field(p)[..., 0]

    x, y = pts[:, 0], pts[:, 1]
    assert np.all(np.abs(d1(eps_gx, x, y, 0)) <= 1e-12)

    grads = spec.lift_grad(pts)
    assert grads.shape == (60, 2, 2)
    assert grads[:, 0, 1] == pytest.approx(c_in * (1.0 - 2.0 * y), rel=1e-12)
    assert np.all(grads[:, 0, 0] == 0.0) and np.all(grads[:, 1, :] == 0.0)


def test_initial_mesh_counts():
    spec = manufactured_case(100.0)
    mesh = initial_mesh(spec, 8)
    assert mesh.n_triangles == 2 * 8 * 8
    assert np.max(mesh.vertices, axis=0) == pytest.approx([1.0, 1.0])

    bed = packed_bed_case(100.0, 0.2)
    mesh = initial_mesh(bed, 6)
    # the 2:1 domain keeps elements square: 4 n^2 triangles
    assert mesh.n_triangles == 4 * 6 * 6
    assert np.max(mesh.vertices, axis=0) == pytest.approx([2.0, 1.0])


def test_problem_spec_validates_label_partition():
    spec = manufactured_case(10.0)
    with pytest.raises(ConfigurationError):
        ProblemSpec(
            name="broken",
            rect=spec.rect,
            epsilon=spec.epsilon,
            alpha=spec.alpha,
            beta=spec.beta,
            reynolds=10.0,
            f=None,
            dirichlet_labels=(LEFT, RIGHT, BOTTOM),  # TOP unassigned
            open_labels=(),
            gauge=GAUGE_ZERO_MEAN,
            lift_field=None,
            lift_grad=None,
            exact=None,
        )
    with pytest.raises(ConfigurationError):
        ProblemSpec(
            name="overlap",
            rect=spec.rect,
            epsilon=spec.epsilon,
            alpha=spec.alpha,
            beta=spec.beta,
            reynolds=10.0,
            f=None,
            dirichlet_labels=(LEFT, RIGHT, BOTTOM, TOP),
            open_labels=(RIGHT,),
            gauge=GAUGE_ZERO_MEAN,
            lift_field=None,
            lift_grad=None,
            exact=None,
        )
