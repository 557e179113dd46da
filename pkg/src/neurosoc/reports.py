"""Deterministic CSV writing shared by every report the package emits."""

from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Iterable, Sequence

from . import __version__


def fmt(v) -> str:
    """Stable text form: ints as-is, floats with 10 significant digits."""
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        return f"{v:.10g}"
    return str(v)


def write_report(path, header: Sequence[str], rows: Iterable[Sequence], seed: int | None = None) -> Path:
    """Write a comment line (tool version + seed), a header row, then rows."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(f"# neurosoc {__version__} seed={seed if seed is not None else 'none'}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def read_report(path) -> tuple[list[str], list[list[str]]]:
    """Inverse of :func:`write_report`; comment lines are skipped."""
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = list(csv.reader(lines))
    return rows[0], rows[1:]
