"""Per-iteration records shared by both solver phases, with CSV/JSON output."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

COLUMNS = ("k", "phase", "f", "residual", "step_len", "descent_ok", "residual_ineq_ok", "F_norm")


@dataclass
class TraceRow:
    k: int
    phase: str
    f: float
    residual: float
    step_len: Optional[float] = None
    descent_ok: Optional[bool] = None
    residual_ineq_ok: Optional[bool] = None
    F_norm: Optional[float] = None
    x: Optional[np.ndarray] = field(default=None, repr=False)
    lam: Optional[np.ndarray] = field(default=None, repr=False)

    def as_record(self):
        return {name: getattr(self, name) for name in COLUMNS}


@dataclass
class IterationTrace:
    rows: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def append(self, row: TraceRow):
        self.rows.append(row)

    def extend(self, other: "IterationTrace"):
        self.rows.extend(other.rows)

    def phase(self, name):
        return [r for r in self.rows if r.phase == name]

    def __len__(self):
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    def __getitem__(self, i):
        return self.rows[i]

    def column(self, name, phase=None):
        rows = self.rows if phase is None else self.phase(phase)
        return [getattr(r, name) for r in rows]

    def to_records(self):
        return [r.as_record() for r in self.rows]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for rec in self.to_records():
            w.writerow([_fmt(rec[c]) for c in COLUMNS])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps([{c: _jsonable(rec[c]) for c in COLUMNS} for rec in self.to_records()])

    def write(self, path, fmt="csv"):
        text = self.to_csv() if fmt == "csv" else self.to_json()
        with open(path, "w") as fh:
            fh.write(text)


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _jsonable(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, np.generic):
        return v.item()
    return v
