"""Mini-element layout, quadrature, bubble function, Dirichlet lifting."""

import math

import numpy as np
import pytest

from bdfadapt.fespace import (
    GAUGE_NONE,
    GAUGE_ZERO_MEAN,
    ConfigurationError,
    bubble_eval,
    build_layout,
    default_rule,
    dirichlet_lift,
    eval_velocity,
    velocity_dof_indices,
)
from bdfadapt.mesh import BOTTOM, LEFT, RIGHT, TOP, uniform_mesh

UNIT = (0.0, 0.0, 1.0, 1.0)
ALL_SIDES = {LEFT, RIGHT, BOTTOM, TOP}


def test_layout_counts_two_triangle_square():
    mesh = uniform_mesh(1, 1, UNIT)
    layout = build_layout(mesh, ALL_SIDES, GAUGE_ZERO_MEAN)
    assert layout.n_velocity == 12
    assert layout.n_pressure == 4
    assert layout.dirichlet_mask.sum() == 8
    # bubble DOFs are never constrained
    assert not layout.dirichlet_mask[8:].any()
    assert layout.gauge == GAUGE_ZERO_MEAN


def test_layout_unknown_label_rejected():
    mesh = uniform_mesh(1, 1, UNIT)
    with pytest.raises(ConfigurationError):
        build_layout(mesh, {LEFT, 99}, GAUGE_NONE)
    with pytest.raises(ConfigurationError):
        build_layout(mesh, ALL_SIDES, "pin-a-node")


def test_layout_open_outflow_side():
    # no Dirichlet label on the right side: its interior vertices stay
    # free, its corners are caught by top/bottom
    mesh = uniform_mesh(2, 2, UNIT)
    layout = build_layout(mesh, {LEFT, BOTTOM, TOP}, GAUGE_NONE)
    for v, (x, y) in enumerate(mesh.vertices):
        on_dirichlet = x == 0.0 or y == 0.0 or y == 1.0
        assert layout.dirichlet_mask[v] == on_dirichlet
        assert layout.dirichlet_mask[layout.n_vertices + v] == on_dirichlet


def test_quadrature_weights_normalized():
    rule = default_rule()
    assert np.all(rule.weights > 0)
    assert rule.weights.sum() == pytest.approx(1.0, abs=1e-14)
    assert np.all(rule.edge_weights > 0)
    assert rule.edge_weights.sum() == pytest.approx(1.0, abs=1e-14)
    assert np.allclose(rule.points.sum(axis=1), 1.0, atol=1e-14)


def test_quadrature_monomial_exactness():
    # reference triangle integral of x^a y^b is a! b! / (a+b+2)!
    rule = default_rule()
    assert rule.degree >= 10
    x = rule.points[:, 1]
    y = rule.points[:, 2]
    for a in range(rule.degree + 1):
        for b in range(rule.degree + 1 - a):
            got = 0.5 * np.sum(rule.weights * x**a * y**b)
            exact = (
                math.factorial(a)
                * math.factorial(b)
                / math.factorial(a + b + 2)
            )
            assert got == pytest.approx(exact, rel=1e-13), (a, b)


def test_edge_rule_exactness():
    rule = default_rule()
    assert rule.edge_degree >= 7
    for k in range(rule.edge_degree + 1):
        got = np.sum(rule.edge_weights * rule.edge_points**k)
        assert got == pytest.approx(1.0 / (k + 1), rel=1e-14), k


def test_bubble_point_values():
    val, grad = bubble_eval(np.array([1 / 3, 1 / 3, 1 / 3]))
    assert val == pytest.approx(1.0 / 27.0, abs=1e-15)
    assert np.allclose(grad, 0.0, atol=1e-15)
    for vertex in np.eye(3):
        val, _ = bubble_eval(vertex)
        assert val == 0.0


def test_bubble_gradient_matches_finite_differences():
    # reference coordinates (x, y) with lam = (1-x-y, x, y)
    rng = np.random.default_rng(3)
    delta = 1e-6
    for _ in range(20):
        x, y = rng.dirichlet((2.0, 2.0, 2.0))[:2]

        def value(px, py):
            v, _ = bubble_eval(np.array([1.0 - px - py, px, py]))
            return v

        _, grad = bubble_eval(np.array([1.0 - x - y, x, y]))
        fd_x = (value(x + delta, y) - value(x - delta, y)) / (2 * delta)
        fd_y = (value(x, y + delta) - value(x, y - delta)) / (2 * delta)
        assert grad[0] == pytest.approx(fd_x, abs=5e-10)
        assert grad[1] == pytest.approx(fd_y, abs=5e-10)


def test_dirichlet_lift_zero_and_dict():
    mesh = uniform_mesh(2, 2, UNIT)
    layout = build_layout(mesh, ALL_SIDES, GAUGE_ZERO_MEAN)
    assert np.all(dirichlet_lift(None, layout, mesh) == 0.0)

    def g_left(points):
        out = np.zeros_like(points)
        out[:, 0] = 1.0 + points[:, 1]
        return out

    layout_left = build_layout(mesh, {LEFT}, GAUGE_NONE)
    lift = dirichlet_lift({LEFT: g_left}, layout_left, mesh)
    for v, (x, y) in enumerate(mesh.vertices):
        if x == 0.0:
            assert lift[v] == pytest.approx(1.0 + y)
        else:
            assert lift[v] == 0.0
    # bubbles and off-boundary DOFs stay zero
    assert np.all(lift[2 * layout.n_vertices :] == 0.0)


def test_dirichlet_lift_global_field():
    mesh = uniform_mesh(2, 2, (0.0, 0.0, 2.0, 1.0))
    layout = build_layout(mesh, {LEFT, BOTTOM, TOP}, GAUGE_NONE)

    def g(points):
        out = np.zeros_like(points)
        out[:, 0] = 0.2 * (1.0 - points[:, 1]) * points[:, 1]
        return out

    lift = dirichlet_lift(g, layout, mesh, global_field=True)
    for v, (x, y) in enumerate(mesh.vertices):
        assert lift[v] == pytest.approx(0.2 * (1.0 - y) * y, abs=1e-15)
    mid = [v for v, (x, y) in enumerate(mesh.vertices) if y == 0.5]
    assert mid and all(lift[v] == pytest.approx(0.05) for v in mid)


def test_vertex_evaluation_reproduces_coefficients():
    mesh = uniform_mesh(2, 2, UNIT)
    layout = build_layout(mesh, ALL_SIDES, GAUGE_ZERO_MEAN)
    rng = np.random.default_rng(11)
    w = rng.standard_normal(layout.n_velocity)
    for t, tri in enumerate(mesh.triangles):
        for local, v in enumerate(tri):
            lam = np.zeros(3)
            lam[local] = 1.0
            u = eval_velocity(mesh, layout, w, np.array([t]), lam[None, :])
            assert u[0, 0] == pytest.approx(w[v], abs=1e-14)
            assert u[0, 1] == pytest.approx(w[layout.n_vertices + v], abs=1e-14)


def test_velocity_dof_indices_layout_order():
    mesh = uniform_mesh(1, 1, UNIT)
    layout = build_layout(mesh, ALL_SIDES, GAUGE_ZERO_MEAN)
    vx, vy, bx, by = velocity_dof_indices(layout)
    assert vx.tolist() == [0, 1, 2, 3]
    assert vy.tolist() == [4, 5, 6, 7]
    assert bx.tolist() == [8, 9]
    assert by.tolist() == [10, 11]
