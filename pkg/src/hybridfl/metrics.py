"""Per-round metrics log and its CSV form."""

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List

from .errors import ContractError, FormatError
from .orchestrator import RoundMetrics

SCHEMA_VERSION = 1
CSV_COLUMNS = ("round", "accuracy", "alpha", "k1", "mean_q_fl", "mean_q_fd", "wall_ms")
_INT_COLUMNS = ("round", "k1")
_OPTIONAL_COLUMNS = ("mean_q_fl", "mean_q_fd")


@dataclass
class MetricsLog:
    config: Dict[str, Any]
    rounds: List[RoundMetrics] = field(default_factory=list)
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        idx = [m.round for m in self.rounds]
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ContractError("round indices must be strictly increasing")

    def final_accuracy(self, last: int = 10) -> float:
        tail = self.rounds[-last:]
        return sum(m.accuracy for m in tail) / len(tail)


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)  # shortest string that round-trips exactly
    return str(value)


def write_metrics_csv(log: MetricsLog, path) -> None:
    """Header plus one row per round; an empty group's mean q is an empty cell.

    IO errors propagate as ``OSError`` carrying the path.
    """
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for m in log.rounds:
            writer.writerow([_cell(getattr(m, c)) for c in CSV_COLUMNS])


def _parse(column: str, text: str):
    if text == "" and column in _OPTIONAL_COLUMNS:
        return None
    return int(text) if column in _INT_COLUMNS else float(text)


def read_metrics_csv(path) -> List[RoundMetrics]:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != CSV_COLUMNS:
            raise FormatError(f"{path}: unexpected header {header}")
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if len(row) != len(CSV_COLUMNS):
                raise FormatError(f"{path}: line {line_no} has {len(row)} fields")
            try:
                rows.append(RoundMetrics(**{c: _parse(c, v) for c, v in zip(CSV_COLUMNS, row)}))
            except ValueError as exc:
                raise FormatError(f"{path}: line {line_no}: {exc}") from exc
    return rows


def write_config_echo(log: MetricsLog, path) -> None:
    """JSON sidecar holding the schema version and the run's configuration."""
    payload = {"schema_version": log.schema_version, "config": log.config}
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(value):
    if hasattr(value, "tolist"):
        return value.tolist()
    raise TypeError(f"cannot serialise {type(value).__name__}")

