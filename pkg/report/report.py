#!/usr/bin/env python3
"""Offline report generator for study.csv files.

Reads the CSV emitted by `bdf-adapt study` and renders the comparison
figure (err and E_total against system size, one curve per mode) plus a
plain-text efficiency-index table.  Rendering is read-only; the input
file is never modified.
"""

import argparse
import csv
import sys
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

# column order is a frozen interface shared with the solver CLI
SCHEMA = (
    "mode", "level", "n_tri", "stu", "iters", "term_reason",
    "eta_L", "eta_D", "e_total", "err", "ei", "wall_s",
)

# benchmark EI magnitude at comparable resolution, shown for context
REFERENCE_POINT = (32634, 0.216)


class SchemaError(Exception):
    """Input csv does not match the frozen study schema."""


@dataclass(frozen=True)
class StudyRow:
    mode: str
    level: int
    n_tri: int
    stu: int
    iters: int
    term_reason: str
    eta_L: float
    eta_D: float
    e_total: float
    err: float | None
    ei: float | None
    wall_s: float


@dataclass(frozen=True)
class StudyTable:
    rows: tuple

    def modes(self):
        seen = []
        for row in self.rows:
            if row.mode not in seen:
                seen.append(row.mode)
        return seen

    def group(self, mode):
        return [r for r in self.rows if r.mode == mode]

    def has_err(self):
        return any(r.err is not None for r in self.rows)


def _parse_float(text, column, lineno, optional=False):
    if text == "":
        if optional:
            return None
        raise SchemaError(f"line {lineno}: empty {column} field")
    try:
        return float(text)
    except ValueError:
        raise SchemaError(f"line {lineno}: bad {column} value {text!r}") from None


def _parse_int(text, column, lineno):
    try:
        return int(text)
    except ValueError:
        raise SchemaError(f"line {lineno}: bad {column} value {text!r}") from None


def load_study(path) -> StudyTable:
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError("empty file, expected a header row") from None
        if tuple(header) != SCHEMA:
            raise SchemaError(
                f"header mismatch: expected {','.join(SCHEMA)}, got {','.join(header)}"
            )
        rows = []
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(SCHEMA):
                raise SchemaError(f"line {lineno}: expected {len(SCHEMA)} fields, got {len(rec)}")
            rows.append(
                StudyRow(
                    mode=rec[0],
                    level=_parse_int(rec[1], "level", lineno),
                    n_tri=_parse_int(rec[2], "n_tri", lineno),
                    stu=_parse_int(rec[3], "stu", lineno),
                    iters=_parse_int(rec[4], "iters", lineno),
                    term_reason=rec[5],
                    eta_L=_parse_float(rec[6], "eta_L", lineno),
                    eta_D=_parse_float(rec[7], "eta_D", lineno),
                    e_total=_parse_float(rec[8], "e_total", lineno),
                    err=_parse_float(rec[9], "err", lineno, optional=True),
                    ei=_parse_float(rec[10], "ei", lineno, optional=True),
                    wall_s=_parse_float(rec[11], "wall_s", lineno),
                )
            )
    if not rows:
        raise SchemaError("no data rows")
    return StudyTable(rows=tuple(rows))


def render_error_plot(table: StudyTable, out_path) -> int:
    """Write the log-log comparison figure; returns the panel count."""
    panels = []
    if table.has_err():
        panels.append(("err", lambda r: r.err))
    panels.append(("E_total", lambda r: r.e_total))

    fig, axes = plt.subplots(1, len(panels), figsize=(5.2 * len(panels), 4.2))
    if len(panels) == 1:
        axes = [axes]
    for ax, (label, pick) in zip(axes, panels):
        for mode in table.modes():
            rows = sorted(table.group(mode), key=lambda r: r.stu)
            pts = [(r.stu, pick(r)) for r in rows if pick(r) is not None]
            if not pts:
                continue
            x, y = zip(*pts)
            ax.loglog(x, y, marker="o", label=mode)
        ax.set_xlabel("system size (STU)")
        ax.set_ylabel(label)
        ax.grid(True, which="both", alpha=0.3)
        ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return len(panels)


def render_ei_table(table: StudyTable, out_path) -> int:
    """Write the (STU, EI) text table; returns the number of data rows."""
    lines = [f"{'mode':<10} {'STU':>10} {'EI':>8}"]
    count = 0
    for row in table.rows:
        if row.ei is None:
            continue
        lines.append(f"{row.mode:<10} {row.stu:>10d} {row.ei:>8.3f}")
        count += 1
    lines.append(f"{'reference':<10} {REFERENCE_POINT[0]:>10d} {REFERENCE_POINT[1]:>8.3f}")
    Path(out_path).write_text("\n".join(lines) + "\n")
    return count


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--input", required=True, help="study.csv produced by the solver CLI")
    parser.add_argument("--outdir", required=True, help="directory for rendered outputs")
    args = parser.parse_args(argv)

    try:
        table = load_study(args.input)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SchemaError as exc:
        print(f"error: schema: {exc}", file=sys.stderr)
        return 2

    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    plot_path = outdir / "error_plot.png"
    table_path = outdir / "ei_table.txt"
    panels = render_error_plot(table, plot_path)
    ei_rows = render_ei_table(table, table_path)
    print(f"wrote {plot_path} ({panels} panel{'s' if panels != 1 else ''})")
    print(f"wrote {table_path} ({ei_rows} rows)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
