"""Bit-stable report files: CSV rows, JSON summaries, two-column plot data."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp


def fmt(x) -> str:
    """17 significant digits for floats, plain text otherwise."""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return f"{x:.17g}"
    if isinstance(x, complex):
        return f"{fmt(x.real)}{'+' if x.imag >= 0 else '-'}{fmt(abs(x.imag))}j"
    s = str(x)
    return '"' + s.replace('"', '""') + '"' if ("," in s or '"' in s) else s


@dataclass
class SweepReport:
    columns: list
    rows: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        lines = [",".join(self.columns)]
        lines += [",".join(fmt(v) for v in r) for r in self.rows]
        return "\n".join(lines) + "\n"

    def column(self, name: str) -> np.ndarray:
        j = self.columns.index(name)
        return np.array([r[j] for r in self.rows])


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if isinstance(x, complex):
        return [x.real, x.imag]
    return x


def write_text(path, text: str):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write(text)


def write_csv(path, report: SweepReport):
    write_text(path, report.to_csv())


def write_json(path, obj):
    write_text(path, json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def write_plotdata(path, x, y, header: str = ""):
    lines = [f"# {header}"] if header else []
    lines += [f"{fmt(float(a))} {fmt(float(b))}" for a, b in zip(x, y)]
    write_text(path, "\n".join(lines) + "\n")


def export_operator(path, A):
    """Coordinate list (row, col, re, im) with a dimension header."""
    C = sp.coo_matrix(A)
    order = np.lexsort((C.col, C.row))
    lines = [f"# dim {C.shape[0]} {C.shape[1]} nnz {C.nnz}"]
    for i in order:
        v = complex(C.data[i])
        lines.append(f"{C.row[i]} {C.col[i]} {fmt(v.real)} {fmt(v.imag)}")
    write_text(path, "\n".join(lines) + "\n")
