"""Training metrics as RFC-4180 CSV with a fixed column order."""

from __future__ import annotations

import csv
import os

from .checks import ValidationError

COLUMNS = [
    "run_id",
    "method",
    "reward",
    "alpha",
    "explore_magnitude",
    "seed",
    "iteration",
    "epoch",
    "cumulative_trajectories",
    "train_loss",
    "val_reward",
    "test_reward",
    "wall_clock_s",
]

_FLOAT_COLUMNS = {"alpha", "explore_magnitude", "train_loss", "val_reward",
                  "test_reward", "wall_clock_s"}
_INT_COLUMNS = {"seed", "iteration", "epoch", "cumulative_trajectories"}


def format_value(column: str, value) -> str:
    if value is None or value == "":
        return ""
    if column in _FLOAT_COLUMNS:
        return repr(float(value))
    if column in _INT_COLUMNS:
        return str(int(value))
    return str(value)


class MetricsWriter:
    """Append-only CSV writer; creates the header on first use."""

    def __init__(self, path: str):
        self.path = path

    def append(self, rows) -> None:
        new_file = not os.path.exists(self.path) or os.path.getsize(self.path) == 0
        with open(self.path, "a", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\r\n")
            if new_file:
                writer.writerow(COLUMNS)
            for row in rows:
                writer.writerow([format_value(c, row.get(c)) for c in COLUMNS])


def truncate_rows(path: str, n_rows: int) -> None:
    """Keep the header plus the first ``n_rows`` data rows (resume cleanup)."""
    if not os.path.exists(path):
        return
    with open(path, "r", newline="", encoding="utf-8") as fh:
        lines = list(csv.reader(fh))
    kept = lines[:1 + n_rows]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\r\n")
        writer.writerows(kept)


def read_metrics(path: str) -> list[dict]:
    """Parse a metrics CSV back into typed row dicts ('' becomes None)."""
    rows = []
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValidationError(f"{path}: empty metrics file")
        if header != COLUMNS:
            raise ValidationError(f"{path}: unexpected metrics columns {header}")
        for raw in reader:
            row = {}
            for column, text in zip(COLUMNS, raw):
                if text == "":
                    row[column] = None
                elif column in _FLOAT_COLUMNS:
                    row[column] = float(text)
                elif column in _INT_COLUMNS:
                    row[column] = int(text)
                else:
                    row[column] = text
            rows.append(row)
    return rows
