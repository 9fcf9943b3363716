"""Rectangular result grids and their on-disk form."""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Axis:
    name: str
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).reshape(-1)
        if v.size == 0:
            raise ValueError(f"axis {self.name!r} has no values")
        if v.size > 1:
            d = np.diff(v)
            if not (np.all(d > 0) or np.all(d < 0)):
                raise ValueError(f"axis {self.name!r} values must be strictly monotone")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.size


@dataclass
class SweepGrid:
    """Keyed records over the cartesian product of the axes.

    ``cells`` maps an index tuple to a dict of column values (floats, ints,
    bools or short strings). A failed cell holds ``{"failed": True}`` and
    writes blanks in every other column.
    """

    name: str
    axes: list[Axis]
    columns: list[str]
    cells: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(len(a) for a in self.axes)

    def indices(self):
        return itertools.product(*(range(len(a)) for a in self.axes))

    def point(self, idx) -> dict:
        return {a.name: float(a.values[i]) for a, i in zip(self.axes, idx)}

    def set(self, idx, record: dict) -> None:
        unknown = set(record) - set(self.columns) - {"failed"}
        if unknown:
            raise KeyError(f"unknown columns {sorted(unknown)}")
        self.cells[tuple(idx)] = dict(record)

    def is_complete(self) -> bool:
        return all(tuple(i) in self.cells for i in self.indices())

    def column(self, key: str) -> np.ndarray:
        """Values of one column as an array shaped like the grid (NaN where failed)."""
        out = np.full(self.shape, np.nan)
        for idx in self.indices():
            v = self.cells.get(idx, {}).get(key)
            if v is not None and not isinstance(v, str):
                out[idx] = float(v)
        return out

    def labels(self, key: str) -> np.ndarray:
        out = np.empty(self.shape, dtype=object)
        for idx in self.indices():
            out[idx] = self.cells.get(idx, {}).get(key)
        return out

    def numeric_columns(self) -> list[str]:
        keys = []
        for k in self.columns:
            vals = [c.get(k) for c in self.cells.values() if k in c]
            if vals and all(isinstance(v, (int, float, np.floating, np.integer)) and not isinstance(v, bool)
                            for v in vals):
                keys.append(k)
        return keys

    def header(self) -> list[str]:
        return [a.name for a in self.axes] + list(self.columns)

    def rows(self):
        for idx in self.indices():
            rec = self.cells.get(idx)
            pt = [fmt_value(float(a.values[i])) for a, i in zip(self.axes, idx)]
            if rec is None or rec.get("failed"):
                yield pt + [""] * len(self.columns)
            else:
                yield pt + [fmt_value(rec.get(k)) for k in self.columns]

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(self.header())
        for r in self.rows():
            w.writerow(r)
        return buf.getvalue()

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write(self.to_csv_text())


def fmt_value(v) -> str:
    """Round-trip text for a cell value."""
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        f = float(v)
        if math.isnan(f):
            return "nan"
        return repr(f)
    return str(v)


def to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else str(f)
    return obj


def dump_json(obj) -> str:
    return json.dumps(to_jsonable(obj), sort_keys=True, indent=2, ensure_ascii=False) + "\n"
