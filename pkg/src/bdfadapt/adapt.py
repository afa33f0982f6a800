"""Bulk marking and the outer solve-estimate-mark-refine loop.

mark implements Doerfler marking on the squared element indicators; the
loop drives either adaptive refinement or the uniform baseline through
the same code path, restarting the fixed-point iteration from zero on
every new mesh.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .estimators import compute_metrics
from .fespace import ConfigurationError, GAUGE_ZERO_MEAN
from .mesh import RefinementOverflowError, refine
from .solver import (
    PICARD_RELAXED,
    SingularSystemError,
    StoppingRule,
    build_problem,
    run_fixed_mesh,
)
from .cases import ProblemSpec, initial_mesh

MODE_ADAPTIVE = "adaptive"
MODE_UNIFORM = "uniform"


@dataclass(frozen=True)
class AdaptConfig:
    mode: str = MODE_ADAPTIVE
    theta: float = 0.5
    max_levels: int = 4
    scheme: str = PICARD_RELAXED
    stop: StoppingRule = StoppingRule(tol_abs=None, gamma_tilde=0.01, max_iter=100)

    def __post_init__(self):
        if self.mode not in (MODE_ADAPTIVE, MODE_UNIFORM):
            raise ConfigurationError(f"unknown mode {self.mode!r}")
        if not 0.0 < self.theta <= 1.0:
            raise ConfigurationError(f"theta must lie in (0, 1], got {self.theta}")
        if self.max_levels < 1:
            raise ConfigurationError("max_levels must be at least 1")
        if self.stop.max_iter < 1:
            raise ConfigurationError("per-level stopping needs max_iter >= 1")


@dataclass
class LevelRecord:
    level: int
    n_triangles: int
    n_dofs: int
    eta_L: float
    eta_D: float
    e_total: float
    err: Optional[float]
    ei: Optional[float]
    iterations: int
    reason: str
    wall_time: float


@dataclass
class RunReport:
    records: List[LevelRecord] = field(default_factory=list)
    incomplete: bool = False
    failure: Optional[str] = None


def system_size(layout) -> int:
    """Unknown count of one level: velocity + pressure + gauge row."""
    gauge = 1 if layout.gauge == GAUGE_ZERO_MEAN else 0
    return layout.n_velocity + layout.n_pressure + gauge


def mark(eta_d, theta: float) -> np.ndarray:
    """Smallest index set whose squared indicators reach the bulk.

    Elements are taken in order of descending eta_D^2 (ties by ascending
    index) until their squared sum reaches theta^2 times the total, so a
    zero indicator is never marked and an all-zero field marks nothing.
    Returns ascending indices.
    """
    if not 0.0 < theta <= 1.0:
        raise ConfigurationError(f"theta must lie in (0, 1], got {theta}")
    eta_d = np.asarray(eta_d, dtype=np.float64)
    if eta_d.ndim != 1:
        raise ValueError("expected one indicator per triangle")
    if not np.all(np.isfinite(eta_d)) or np.any(eta_d < 0):
        raise ValueError("indicators must be finite and nonnegative")
    sq = eta_d**2
    order = np.argsort(-sq, kind="stable")
    csum = np.cumsum(sq[order])
    total = csum[-1]
    if total == 0.0:
        return np.array([], dtype=np.intp)
    k = int(np.searchsorted(csum, theta**2 * total, side="left"))
    return np.sort(order[: k + 1])


def adaptive_solve(
    spec: ProblemSpec,
    n0: int,
    config: AdaptConfig,
    rule=None,
    split_forchheimer_weight: bool = False,
    on_level=None,
) -> RunReport:
    """Run max_levels of solve/estimate/refine and collect one row each.

    on_level, when given, is called as on_level(level, mesh, problem,
    result) after each completed level so callers can emit artifacts.
    A singular solve or a refinement overflow stops the loop early and
    returns whatever levels completed, flagged incomplete.
    """
    report = RunReport()
    mesh = initial_mesh(spec, n0)
    for level in range(config.max_levels):
        t0 = time.perf_counter()
        try:
            problem = build_problem(spec, mesh, rule)
            result = run_fixed_mesh(
                problem,
                config.scheme,
                config.stop,
                split_forchheimer_weight=split_forchheimer_weight,
            )
            metrics = compute_metrics(
                mesh,
                problem.layout,
                result.state.w,
                result.state.p,
                problem.lift,
                eta_D_total=result.indicators.eta_D_total,
                exact=spec.exact,
                rule=problem.rule,
            )
            if level + 1 < config.max_levels:
                if config.mode == MODE_UNIFORM:
                    marked = np.arange(mesh.n_triangles)
                else:
                    marked = mark(result.indicators.eta_D, config.theta)
                next_mesh = refine(mesh, marked)
            else:
                next_mesh = None
        except (SingularSystemError, RefinementOverflowError) as exc:
            report.incomplete = True
            report.failure = f"level {level}: {exc}"
            return report
        report.records.append(
            LevelRecord(
                level=level,
                n_triangles=mesh.n_triangles,
                n_dofs=system_size(problem.layout),
                eta_L=result.records[-1].eta_L,
                eta_D=result.indicators.eta_D_total,
                e_total=metrics.e_total,
                err=metrics.err,
                ei=metrics.ei,
                iterations=result.iterations,
                reason=result.reason,
                wall_time=time.perf_counter() - t0,
            )
        )
        if on_level is not None:
            on_level(level, mesh, problem, result)
        if next_mesh is None:
            break
        mesh = next_mesh
    return report
