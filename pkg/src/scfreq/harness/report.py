"""Human-readable summaries of experiment results."""

from __future__ import annotations

import io
from typing import Sequence

from ..domain import InvalidInputError
from .experiment import NA, RunResult

__all__ = ["REPORT_COLUMNS", "report", "report_rows"]

REPORT_COLUMNS = (
    "initial [dB]",
    "step [GHz]",
    "iterations",
    "final [dB]",
    "oracle best [dB]",
    "oracle worst [dB]",
    "impr. vs worst [dB]",
    "impr. vs equidistant [dB]",
)


def _fmt(x: float | None) -> str:
    return NA if x is None else f"{x:.2f}"


def report_rows(results: Sequence[RunResult]) -> list[list[str]]:
    """One row per run: a label followed by the eight summary columns."""
    rows = []
    for r in results:
        rows.append([
            f"{r.case} {r.objective.value} #{r.start_index}",
            _fmt(r.initial_objective),
            f"{r.f_step:g}",
            str(r.iterations),
            _fmt(r.final_objective),
            _fmt(r.oracle_best),
            _fmt(r.oracle_worst),
            _fmt(r.improvement_vs_worst),
            _fmt(r.improvement_vs_equidistant),
        ])
    return rows


def report(results: Sequence[RunResult], warnings: Sequence[str] = ()) -> str:
    """Fixed-width table of *results*; missing oracle data shows as ``NA``."""
    if not results:
        raise InvalidInputError("report needs at least one result")
    header = ["run", *REPORT_COLUMNS]
    rows = report_rows(results)
    widths = [max(len(row[i]) for row in [header, *rows]) for i in range(len(header))]
    buf = io.StringIO()
    for row in [header, *rows]:
        cells = [row[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(row[1:], widths[1:])]
        buf.write("  ".join(cells).rstrip() + "\n")
    for w in warnings:
        buf.write(f"warning: {w}\n")
    return buf.getvalue()
