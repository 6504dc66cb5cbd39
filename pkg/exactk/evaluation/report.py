import csv
import math
import os
from typing import Optional, Sequence

from rich.table import Table

from exactk.evaluation.harness import EvalReport


REPORT_HEADER = ("method", "n", "p_at_k", "hr_at_k", "mean_reward", "oracle_ratio", "infeasible_count")
BEAM_HEADER = ("beam_size", "n", "p_at_k", "hr_at_k", "mean_reward", "oracle_ratio", "infeasible_count")


def format_cell(value: Optional[float]) -> str:
    if value is None or math.isnan(value):
        return ""
    return repr(float(value))


def _metrics(report: EvalReport) -> list:
    return [
        report.n,
        format_cell(report.p_at_k),
        format_cell(report.hr_at_k),
        format_cell(report.mean_reward),
        format_cell(report.oracle_ratio),
        report.infeasible_count,
    ]


def write_report_csv(reports: Sequence[EvalReport], path: str, by_beam: bool = False) -> None:
    tmp_path = path + ".tmp"
    with open(tmp_path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(BEAM_HEADER if by_beam else REPORT_HEADER)
        for report in reports:
            writer.writerow([report.beam_size if by_beam else report.method] + _metrics(report))
    os.replace(tmp_path, path)


def _shown(value: Optional[float]) -> str:
    if value is None or math.isnan(value):
        return "-"
    return f"{value:.4f}"


def report_table(reports: Sequence[EvalReport], title: str = "Evaluation", by_beam: bool = False) -> Table:
    table = Table(title=title, title_justify="left", header_style="bold cyan")
    table.add_column("beam" if by_beam else "method", style="green")
    for name in ("n", "P@K", "HR@K", "reward", "oracle ratio", "infeasible"):
        table.add_column(name, justify="right")
    for report in reports:
        table.add_row(
            str(report.beam_size) if by_beam else report.method,
            str(report.n),
            _shown(report.p_at_k),
            _shown(report.hr_at_k),
            _shown(report.mean_reward),
            _shown(report.oracle_ratio),
            str(report.infeasible_count),
        )
    return table
