import io
from pathlib import Path
from typing import List, Optional

import pandas as pd
from prettytable import PrettyTable

from shared_code.exceptions import ConfigurationError
from shared_code.models import EnvState
from shared_code.statistics import WelchResult


def read_report_column(path, column: str = "queries", strategy: Optional[str] = None) -> List[float]:
    """Numeric values of one column from the trial rows of a report (everything before the first blank line)"""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigurationError(f"Could not read {path}: {e}") from e

    data_lines = []
    for line in text.splitlines():
        if not line.strip():
            break
        data_lines.append(line)
    if len(data_lines) < 2:
        raise ConfigurationError(f"{path} holds no data rows")

    try:
        frame = pd.read_csv(io.StringIO("\n".join(data_lines)))
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise ConfigurationError(f"Could not parse {path}: {e}") from e

    if column not in frame.columns:
        raise ConfigurationError(f"{path} has no column {column!r}")
    if strategy is not None:
        if "strategy" not in frame.columns:
            raise ConfigurationError(f"{path} has no strategy column to filter on")
        frame = frame[frame["strategy"] == strategy]

    try:
        values = pd.to_numeric(frame[column], errors="raise")
    except (ValueError, TypeError) as e:
        raise ConfigurationError(f"Column {column!r} in {path} is not numeric") from e
    return [float(v) for v in values]


def render_summary_table(summaries) -> str:
    table = PrettyTable()
    table.field_names = ["strategy", "mean", "sd", "max", "n"]
    for name, summary in summaries.items():
        table.add_row([name, f"{summary.mean:.3f}", f"{summary.sd:.3f}", f"{summary.max:.0f}", summary.n])
    return table.get_string()


def render_welch_table(result: WelchResult) -> str:
    table = PrettyTable()
    table.field_names = ["t", "df", "p"]
    table.add_row([f"{result.t:.4f}", f"{result.df:.4f}", f"{result.p:.6f}"])
    return table.get_string()


def render_step_row(state: EnvState, drifted: bool, note: str = "") -> List:
    flags = [int(v) for v in state.factor_states] + [int(v) for v in state.results_present]
    return [state.time] + flags + ["*" if drifted else "", note]
