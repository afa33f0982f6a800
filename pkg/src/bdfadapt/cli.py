"""Command-line driver.

Resolves a flat key=value config file plus flag overrides into a run,
executes a single solve or a uniform-vs-adaptive study, and emits
meshes, VTK solution files, and CSV report tables.  Exit codes: 0 ok,
2 configuration problem, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass
from pathlib import Path

from .adapt import AdaptConfig, MODE_ADAPTIVE, MODE_UNIFORM, adaptive_solve
from .cases import manufactured_case, packed_bed_case
from .coeffs import PorosityRangeError
from .fespace import ConfigurationError, default_rule
from .mesh import RefinementOverflowError, write_bdfmesh
from .solver import SingularSystemError, StoppingRule

_CSV_HEADER = "mode,level,n_tri,stu,iters,term_reason,eta_L,eta_D,e_total,err,ei,wall_s"

_CASES = ("manufactured", "packed_bed")
_SCHEMES = ("plain", "relaxed")
_STOPS = ("abs", "balance")
_MODES = (MODE_ADAPTIVE, MODE_UNIFORM)

_BOOL_WORDS = {
    "true": True, "yes": True, "1": True,
    "false": False, "no": False, "0": False,
}


def _parse_bool(text: str) -> bool:
    try:
        return _BOOL_WORDS[text.lower()]
    except KeyError:
        raise ValueError(f"not a boolean: {text!r}")


_COERCERS = {
    "case": str,
    "re": float,
    "c_in": float,
    "n0": int,
    "scheme": str,
    "stop": str,
    "tol_abs": float,
    "gamma_tilde": float,
    "max_iter": int,
    "theta": float,
    "max_levels": int,
    "mode": str,
    "quad_degree": int,
    "output_dir": str,
    "deterministic": _parse_bool,
}


@dataclass(frozen=True)
class RunConfig:
    case: str = "manufactured"
    re: float = 100.0
    c_in: float = 0.2
    n0: int = 8
    scheme: str = "relaxed"
    stop: str = "balance"
    tol_abs: float = 1e-6
    gamma_tilde: float = 0.01
    max_iter: int = 100
    theta: float = 0.5
    max_levels: int = 4
    mode: str = MODE_ADAPTIVE
    quad_degree: int = 10
    output_dir: str = "out"
    deterministic: bool = False

    def __post_init__(self):
        def expect(ok, message):
            if not ok:
                raise ConfigurationError(message)

        expect(self.case in _CASES, f"case must be one of {_CASES}")
        expect(self.scheme in _SCHEMES, f"scheme must be one of {_SCHEMES}")
        expect(self.stop in _STOPS, f"stop must be one of {_STOPS}")
        expect(self.mode in _MODES, f"mode must be one of {_MODES}")
        expect(self.re > 0, f"re must be positive, got {self.re}")
        expect(self.c_in > 0, f"c_in must be positive, got {self.c_in}")
        expect(self.n0 >= 1, "n0 must be at least 1")
        expect(self.tol_abs > 0, "tol_abs must be positive")
        expect(self.gamma_tilde > 0, "gamma_tilde must be positive")
        expect(self.max_iter >= 1, "max_iter must be at least 1")
        expect(0 < self.theta <= 1, "theta must lie in (0, 1]")
        expect(self.max_levels >= 1, "max_levels must be at least 1")
        expect(self.quad_degree >= 1, "quad_degree must be at least 1")


def parse_config_file(path) -> dict:
    """key=value lines; # starts a comment; unknown keys are errors."""
    values = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigurationError(f"{path}:{lineno}: expected key=value")
        coerce = _COERCERS.get(key)
        if coerce is None:
            raise ConfigurationError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            values[key] = coerce(value)
        except ValueError as exc:
            raise ConfigurationError(f"{path}:{lineno}: {exc}")
    return values


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bdf-adapt",
        description="Adaptive mini-element runs for Brinkman-Darcy-Forchheimer flow",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, blurb in (
        ("solve", "one run, emitting meshes, VTK fields, and report.csv"),
        ("study", "uniform and adaptive runs merged into study.csv"),
    ):
        p = sub.add_parser(name, help=blurb)
        p.add_argument("--config", default=None, help="flat key=value file")
        p.add_argument("--case", choices=_CASES)
        p.add_argument("--re", type=float)
        p.add_argument("--c-in", dest="c_in", type=float)
        p.add_argument("--n0", type=int)
        p.add_argument("--scheme", choices=_SCHEMES)
        p.add_argument("--stop", choices=_STOPS)
        p.add_argument("--tol-abs", dest="tol_abs", type=float)
        p.add_argument("--gamma-tilde", dest="gamma_tilde", type=float)
        p.add_argument("--max-iter", dest="max_iter", type=int)
        p.add_argument("--theta", type=float)
        p.add_argument("--max-levels", dest="max_levels", type=int)
        p.add_argument("--mode", choices=_MODES)
        p.add_argument("--quad-degree", dest="quad_degree", type=int)
        p.add_argument("--output-dir", dest="output_dir")
        p.add_argument(
            "--deterministic", action="store_const", const=True, default=None
        )
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    values = parse_config_file(args.config) if args.config else {}
    for key in _COERCERS:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    return RunConfig(**values)


def _apply_thread_cap():
    """Honor BDF_ADAPT_THREADS by capping the numeric thread pools."""
    raw = os.environ.get("BDF_ADAPT_THREADS")
    if raw is None or raw == "":
        return None
    try:
        n = int(raw)
    except ValueError:
        raise ConfigurationError(f"BDF_ADAPT_THREADS must be an integer, got {raw!r}")
    if n < 1:
        raise ConfigurationError("BDF_ADAPT_THREADS must be at least 1")
    for var in (
        "OMP_NUM_THREADS",
        "OPENBLAS_NUM_THREADS",
        "MKL_NUM_THREADS",
        "NUMEXPR_NUM_THREADS",
    ):
        os.environ[var] = str(n)
    try:
        import threadpoolctl

        threadpoolctl.threadpool_limits(n)
    except ImportError:
        pass  # env vars above cover pools that start later
    return n


def _fmt(x) -> str:
    # 17 significant digits round-trip any double
    return "" if x is None else format(float(x), ".17g")


def write_report_csv(path, mode_rows, deterministic: bool) -> None:
    lines = [_CSV_HEADER]
    for mode, rec in mode_rows:
        wall = 0.0 if deterministic else rec.wall_time
        lines.append(
            ",".join(
                [
                    mode,
                    str(rec.level),
                    str(rec.n_triangles),
                    str(rec.n_dofs),
                    str(rec.iterations),
                    rec.reason,
                    _fmt(rec.eta_L),
                    _fmt(rec.eta_D),
                    _fmt(rec.e_total),
                    _fmt(rec.err),
                    _fmt(rec.ei),
                    _fmt(wall),
                ]
            )
        )
    Path(path).write_text("\n".join(lines) + "\n")


def write_vtk(path, mesh, velocity_full, pressure, eta_d, eta_l) -> None:
    """Legacy ASCII unstructured-grid file with point and cell fields."""
    nv, m = mesh.n_vertices, mesh.n_triangles
    vx, vy = velocity_full[:nv], velocity_full[nv : 2 * nv]
    lines = [
        "# vtk DataFile Version 3.0",
        "bdfadapt solution",
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {nv} double",
    ]
    lines += [f"{x:.17g} {y:.17g} 0" for x, y in mesh.vertices]
    lines.append(f"CELLS {m} {4 * m}")
    lines += ["3 {} {} {}".format(*tri) for tri in mesh.triangles]
    lines.append(f"CELL_TYPES {m}")
    lines += ["5"] * m
    lines.append(f"POINT_DATA {nv}")
    lines.append("VECTORS velocity double")
    lines += [f"{a:.17g} {b:.17g} 0" for a, b in zip(vx, vy)]
    lines.append("SCALARS pressure double 1")
    lines.append("LOOKUP_TABLE default")
    lines += [f"{p:.17g}" for p in pressure]
    lines.append(f"CELL_DATA {m}")
    for name, values in (("eta_D", eta_d), ("eta_L", eta_l)):
        lines.append(f"SCALARS {name} double 1")
        lines.append("LOOKUP_TABLE default")
        lines += [f"{v:.17g}" for v in values]
    Path(path).write_text("\n".join(lines) + "\n")


def _make_spec(cfg: RunConfig):
    if cfg.case == "manufactured":
        return manufactured_case(cfg.re)
    return packed_bed_case(cfg.re, cfg.c_in)


def _stopping(cfg: RunConfig) -> StoppingRule:
    if cfg.stop == "abs":
        return StoppingRule(tol_abs=cfg.tol_abs, gamma_tilde=None, max_iter=cfg.max_iter)
    return StoppingRule(tol_abs=None, gamma_tilde=cfg.gamma_tilde, max_iter=cfg.max_iter)


def _adapt_config(cfg: RunConfig, mode: str) -> AdaptConfig:
    return AdaptConfig(
        mode=mode,
        theta=cfg.theta,
        max_levels=cfg.max_levels,
        scheme=cfg.scheme,
        stop=_stopping(cfg),
    )


def cmd_solve(cfg: RunConfig) -> int:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    spec = _make_spec(cfg)
    rule = default_rule(cfg.quad_degree)

    def emit(level, mesh, problem, result):
        write_bdfmesh(mesh, out / f"mesh_{level}.bdfmesh")
        write_vtk(
            out / f"solution_{level}.vtk",
            mesh,
            result.state.w + problem.lift,
            result.state.p,
            result.indicators.eta_D,
            result.indicators.eta_L,
        )

    report = adaptive_solve(
        spec, cfg.n0, _adapt_config(cfg, cfg.mode), rule=rule, on_level=emit
    )
    write_report_csv(
        out / "report.csv",
        [(cfg.mode, rec) for rec in report.records],
        cfg.deterministic,
    )
    if report.incomplete:
        print(f"error: numerical: {report.failure}", file=sys.stderr)
        return 3
    return 0


def cmd_study(cfg: RunConfig) -> int:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    spec = _make_spec(cfg)
    rule = default_rule(cfg.quad_degree)
    rows = []
    for mode in (MODE_UNIFORM, MODE_ADAPTIVE):
        report = adaptive_solve(spec, cfg.n0, _adapt_config(cfg, mode), rule=rule)
        rows.extend((mode, rec) for rec in report.records)
        if report.incomplete:
            write_report_csv(out / "study.csv", rows, cfg.deterministic)
            print(f"error: numerical: {report.failure}", file=sys.stderr)
            return 3
    write_report_csv(out / "study.csv", rows, cfg.deterministic)
    return 0


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        _apply_thread_cap()
        cfg = resolve_config(args)
    except ConfigurationError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return 2
    try:
        if args.command == "solve":
            return cmd_solve(cfg)
        return cmd_study(cfg)
    except ConfigurationError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return 2
    except (SingularSystemError, RefinementOverflowError, PorosityRangeError) as exc:
        print(f"error: numerical: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
