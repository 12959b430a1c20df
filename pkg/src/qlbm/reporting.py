"""Deterministic CSV serialization for verification rows and reports."""
from __future__ import annotations

import csv

from .suites import CheckRow


def format_value(x) -> str:
    """Locale-independent rendering; floats carry 17 significant digits."""
    if isinstance(x, bool):
        return str(int(x))
    if isinstance(x, float):
        return f"{x:.17g}"
    return str(x)


def check_rows_csv(rows: list[CheckRow], path) -> None:
    """One CSV per suite family: the union of value keys becomes the header."""
    keys: list[str] = []
    for row in rows:
        for key in row.values:
            if key not in keys:
                keys.append(key)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["suite", "name"] + keys + ["pass"])
        for row in rows:
            writer.writerow(
                [row.suite, row.name]
                + [format_value(row.values.get(k, "")) for k in keys]
                + [int(row.passed)]
            )
