"""Linearized fixed-point sweeps on a fixed mesh.

Each sweep freezes the transport and Forchheimer fields at the previous
iterate (the relaxed variant averages the transport over the iteration
history), assembles the saddle system, and solves it with a direct
factorization.  Per-sweep iteration and discretization indicators drive
the stopping test, so the caller can balance the two error sources or
just iterate to a fixed tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional

import numpy as np
import scipy.sparse.linalg as spla

from .assembly import (
    apply_constraints,
    assemble_a,
    assemble_b,
    assemble_convection,
    assemble_load,
    build_saddle,
    expand_solution,
)
from .cases import ProblemSpec, case_layout, lift_vector
from .coeffs import build_coefficients, cellwise_averages
from .estimators import IndicatorField, compute_indicators
from .fespace import ConfigurationError, default_rule

PICARD_PLAIN = "plain"
PICARD_RELAXED = "relaxed"
_SCHEMES = (PICARD_PLAIN, PICARD_RELAXED)

_RESIDUAL_TOL = 1e-10
_DIVERGENCE_FACTOR = 1e6


class SingularSystemError(Exception):
    """A linear solve failed outright or left a large residual."""


@dataclass
class Problem:
    """Mesh-bound data shared by every sweep: layouts, coefficient
    interpolants, the boundary lift, and the iterate-independent
    matrices and load vector."""

    spec: ProblemSpec
    mesh: object
    layout: object
    coeffs: object
    averages: object
    lift: np.ndarray
    rule: object
    a_mat: object
    b_mat: object
    load: np.ndarray


@dataclass
class DiscreteState:
    """One iterate: homogeneous velocity coefficients w, pressure p,
    and for the relaxed scheme the running transport average (also
    stored as a homogeneous part).  linear_residual is the relative
    residual the direct solve left behind, kept as a diagnostic."""

    w: np.ndarray
    p: np.ndarray
    iterate_index: int = 0
    u_tilde: Optional[np.ndarray] = None
    linear_residual: Optional[float] = None


@dataclass(frozen=True)
class StoppingRule:
    """Criteria are OR-ed; None disables one.  tol_abs bounds the
    iteration indicator outright, gamma_tilde bounds it relative to the
    discretization indicator."""

    tol_abs: Optional[float] = 1e-6
    gamma_tilde: Optional[float] = None
    max_iter: int = 100


@dataclass
class IterationRecord:
    iterate: int
    eta_L: float
    eta_D: float
    linear_residual: float


@dataclass
class FixedMeshResult:
    state: DiscreteState
    records: List[IterationRecord]
    reason: str
    indicators: Optional[IndicatorField]

    @property
    def iterations(self) -> int:
        return len(self.records)


def build_problem(spec: ProblemSpec, mesh, rule=None) -> Problem:
    rule = rule or default_rule()
    layout = case_layout(spec, mesh)
    coeffs = build_coefficients(
        spec.epsilon, spec.alpha, spec.beta, spec.reynolds, mesh
    )
    averages = cellwise_averages(mesh, coeffs, spec.f, rule)
    return Problem(
        spec=spec,
        mesh=mesh,
        layout=layout,
        coeffs=coeffs,
        averages=averages,
        lift=lift_vector(spec, mesh, layout),
        rule=rule,
        a_mat=assemble_a(mesh, coeffs, layout, rule),
        b_mat=assemble_b(mesh, coeffs, layout, rule),
        load=assemble_load(mesh, coeffs, layout, spec.f, rule),
    )


def initial_iterate(problem: Problem) -> DiscreteState:
    return DiscreteState(
        w=np.zeros(problem.layout.n_velocity),
        p=np.zeros(problem.layout.n_pressure),
    )


def _solve_sparse(matrix, rhs, iterate: int):
    csc = matrix.tocsc()
    try:
        lu = spla.splu(csc)
        x = lu.solve(rhs)
        # one refinement sweep recovers digits lost to small pivots
        r = rhs - csc @ x
        x = x + lu.solve(r)
        r = rhs - csc @ x
    except RuntimeError as exc:
        raise SingularSystemError(
            f"factorization failed at iterate {iterate}: {exc}"
        ) from exc
    denom = np.linalg.norm(rhs) or 1.0
    rel = float(np.linalg.norm(r) / denom)
    if not rel <= _RESIDUAL_TOL:
        raise SingularSystemError(
            f"linear solve at iterate {iterate} left relative residual {rel:.2e}"
        )
    return x, rel


def _advance(problem: Problem, state: DiscreteState, scheme: str):
    """One sweep; returns the next state and the transport it used."""
    lift = problem.lift
    if scheme == PICARD_RELAXED:
        prev_avg = state.u_tilde if state.u_tilde is not None else state.w
        u_tilde = 0.5 * (state.w + prev_avg)
        transport = lift + u_tilde
    else:
        u_tilde = None
        transport = lift + state.w
    d_mat, m_mat = assemble_convection(
        problem.mesh,
        problem.coeffs,
        problem.layout,
        transport,
        forch_fields=[lift + state.w],
        rule=problem.rule,
    )
    k_mat = problem.a_mat + d_mat + m_mat
    system = build_saddle(
        problem.mesh, problem.layout, k_mat, problem.b_mat,
        problem.load - k_mat @ lift,
    )
    constrained = apply_constraints(system, problem.layout)
    x_free, residual = _solve_sparse(
        constrained.matrix, constrained.rhs, state.iterate_index + 1
    )
    full = expand_solution(constrained, x_free)
    nv = problem.layout.n_velocity
    next_state = DiscreteState(
        w=full[:nv],
        p=full[nv : nv + problem.layout.n_pressure],
        iterate_index=state.iterate_index + 1,
        u_tilde=u_tilde,
        linear_residual=residual,
    )
    return next_state, transport


def stopping_decision(
    stop: StoppingRule, iterate: int, eta_L: float, eta_D: float, first_eta_L: float
) -> Optional[str]:
    """Name of the criterion that fires, or None to keep sweeping."""
    if not np.isfinite(eta_L) or eta_L > _DIVERGENCE_FACTOR * first_eta_L:
        return "diverged"
    if stop.tol_abs is not None and eta_L <= stop.tol_abs:
        return "abs-tol"
    if stop.gamma_tilde is not None and eta_L <= stop.gamma_tilde * eta_D:
        return "balance"
    if iterate >= stop.max_iter:
        return "max-iter"
    return None


def run_fixed_mesh(
    problem: Problem,
    scheme: str,
    stop: Optional[StoppingRule] = None,
    start: Optional[DiscreteState] = None,
    split_forchheimer_weight: bool = False,
) -> FixedMeshResult:
    """Sweep until a stopping criterion fires.

    start allows resuming from a stored state; max_iter counts sweeps
    of this call, not the absolute iterate index.
    """
    if scheme not in _SCHEMES:
        raise ConfigurationError(f"unknown scheme {scheme!r}; use one of {_SCHEMES}")
    stop = stop or StoppingRule()
    state = start if start is not None else initial_iterate(problem)

    records: List[IterationRecord] = []
    indicators: Optional[IndicatorField] = None
    reason: Optional[str] = None
    first_eta_L = None
    steps = 0
    while steps < stop.max_iter:
        prev = state
        state, transport = _advance(problem, prev, scheme)
        steps += 1
        indicators = compute_indicators(
            problem.mesh,
            problem.coeffs,
            problem.averages,
            prev.w,
            state.w,
            state.p,
            lift=problem.lift,
            transport=transport,
            rule=problem.rule,
            split_forchheimer_weight=split_forchheimer_weight,
        )
        eta_L = indicators.eta_L_total
        eta_D = indicators.eta_D_total
        if first_eta_L is None:
            first_eta_L = eta_L
        records.append(
            IterationRecord(
                iterate=state.iterate_index,
                eta_L=eta_L,
                eta_D=eta_D,
                linear_residual=state.linear_residual,
            )
        )
        reason = stopping_decision(stop, steps, eta_L, eta_D, first_eta_L)
        if reason is not None:
            break
    if reason is None:
        reason = "max-iter"
    return FixedMeshResult(
        state=state, records=records, reason=reason, indicators=indicators
    )
