"""Report tables rendered to aligned text, CSV, or JSON.

Cells hold raw numbers; formatting ("0.74 ±0.15") happens only at render
time so the JSON output stays machine-readable.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field

from .metrics import MacroStat

ABSENT = "n/a"


@dataclass
class Cell:
    mean: float | None = None
    std: float | None = None
    n: int | None = None
    text: str | None = None

    @classmethod
    def from_stat(cls, stat: MacroStat) -> "Cell":
        return cls(mean=stat.mean, std=stat.std, n=stat.n)

    @classmethod
    def value(cls, v: float | None) -> "Cell":
        return cls(mean=v)

    def fmt(self) -> str:
        if self.text is not None:
            return self.text
        if self.mean is None:
            return ABSENT
        if self.std is None:
            return f"{self.mean:.2f}"
        return f"{self.mean:.2f} ±{self.std:.2f}"

    def to_dict(self) -> dict:
        if self.text is not None:
            return {"text": self.text}
        obj: dict = {"mean": self.mean}
        if self.std is not None:
            obj["std"] = self.std
        if self.n is not None:
            obj["n"] = self.n
        return obj


@dataclass
class Table:
    name: str
    title: str
    columns: list[str]
    rows: list[tuple[str, list[Cell]]] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    def add_row(self, label: str, cells: list[Cell]) -> None:
        self.rows.append((label, cells))

    def render_text(self) -> str:
        header = [""] + self.columns
        body = [[label] + [c.fmt() for c in cells] for label, cells in self.rows]
        widths = [max(len(r[i]) for r in [header] + body) for i in range(len(header))]
        out = io.StringIO()
        out.write(f"# {self.title}\n")
        out.write("  ".join(h.ljust(w) for h, w in zip(header, widths)).rstrip() + "\n")
        out.write("  ".join("-" * w for w in widths) + "\n")
        for row in body:
            out.write("  ".join(v.ljust(w) for v, w in zip(row, widths)).rstrip() + "\n")
        for note in self.notes:
            out.write(f"note: {note}\n")
        return out.getvalue()

    def render_csv(self) -> str:
        import csv

        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        header = ["label"]
        for col in self.columns:
            header += [f"{col}.mean", f"{col}.std"]
        writer.writerow(header)
        for label, cells in self.rows:
            row: list[object] = [label]
            for c in cells:
                if c.text is not None:
                    row += [c.text, ""]
                else:
                    row += [
                        "" if c.mean is None else repr(c.mean),
                        "" if c.std is None else repr(c.std),
                    ]
            writer.writerow(row)
        return out.getvalue()

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "title": self.title,
            "columns": self.columns,
            "rows": [
                {"label": label, "cells": [c.to_dict() for c in cells]}
                for label, cells in self.rows
            ],
            "notes": self.notes,
        }


def format_metrics_row(cells: list[Cell], sep: str = " / ") -> str:
    """Single-line summary, e.g. "0.74 ±0.15 / 0.80 ±0.16 / 0.42 ±0.27"."""
    return sep.join(c.fmt() for c in cells)


def tables_to_json(tables: list[Table], provenance: dict | None = None) -> str:
    doc: dict = {t.name: t.to_dict() for t in tables}
    if provenance:
        doc["provenance"] = provenance
    return json.dumps(doc, sort_keys=True, ensure_ascii=False, indent=2)
