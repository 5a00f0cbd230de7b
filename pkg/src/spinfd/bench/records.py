"""CSV schema for experiment output.

Columns, in order::

    experiment, estimator, environment, seed, delta, noise_sigma, iteration,
    cost_or_error, evaluations, wall_nanos, status, config_hash

Floats are written with ``repr`` (shortest round-tripping form), so a CSV
read back reproduces the exact values. ``wall_nanos`` is left empty unless
timing is recorded inline, which keeps reruns byte-identical.
"""
from __future__ import annotations

import csv
import io
from dataclasses import astuple, dataclass, fields
from typing import Iterable, Optional

__all__ = ["COLUMNS", "ExperimentRecord", "read_csv", "records_to_csv", "write_csv"]


@dataclass(frozen=True)
class ExperimentRecord:
    experiment: str
    estimator: str
    environment: str
    seed: int
    delta: float
    noise_sigma: float
    iteration: int
    cost_or_error: float
    evaluations: int
    wall_nanos: Optional[int] = None
    status: str = "ok"
    config_hash: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "ok"


COLUMNS = tuple(f.name for f in fields(ExperimentRecord))
_INT = {"seed", "iteration", "evaluations", "wall_nanos"}
_FLOAT = {"delta", "noise_sigma", "cost_or_error"}


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def records_to_csv(records: Iterable[ExperimentRecord], timing: bool = False) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in records:
        row = list(astuple(r))
        if not timing:
            row[COLUMNS.index("wall_nanos")] = None
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def write_csv(records: Iterable[ExperimentRecord], path, timing: bool = False) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(records_to_csv(records, timing))


def _parse(name: str, text: str):
    if name in _INT:
        return int(text) if text != "" else None
    if name in _FLOAT:
        return float(text)
    return text


def read_csv(source) -> list:
    """Read records from a path or an open text stream."""
    if hasattr(source, "read"):
        rows = list(csv.reader(source))
    else:
        with open(source, newline="") as fh:
            rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != COLUMNS:
        raise ValueError("missing or unexpected CSV header")
    return [ExperimentRecord(**{c: _parse(c, v) for c, v in zip(COLUMNS, row)})
            for row in rows[1:] if row]
