"""Named-column feature matrix with missing markers and deterministic CSV round-trip."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import DimensionMismatch


def _fmt(v: float) -> str:
    """Shortest round-trip decimal representation; empty cell for missing."""
    if math.isnan(v):
        return ""
    return repr(float(v))


@dataclass
class FeatureMatrix:
    """Rows are record ids, columns are named features; NaN marks missing.

    ``metadata`` carries provenance (catalog versions, per-column modality
    tags) and is persisted in a JSON sidecar next to the CSV.
    """

    ids: list[str]
    names: list[str]
    values: np.ndarray  # (n_rows, n_cols) float64, NaN = missing
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (len(self.ids), len(self.names)):
            raise DimensionMismatch(
                f"values shape {self.values.shape} != ({len(self.ids)}, {len(self.names)})"
            )

    @property
    def n_rows(self) -> int:
        return len(self.ids)

    @property
    def n_cols(self) -> int:
        return len(self.names)

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.names.index(name)]

    def select_columns(self, names: list[str]) -> "FeatureMatrix":
        idx = [self.names.index(n) for n in names]
        return FeatureMatrix(list(self.ids), list(names), self.values[:, idx],
                             dict(self.metadata))

    def select_rows(self, ids: list[str]) -> "FeatureMatrix":
        pos = {rid: i for i, rid in enumerate(self.ids)}
        idx = [pos[r] for r in ids]
        return FeatureMatrix(list(ids), list(self.names), self.values[idx, :],
                             dict(self.metadata))

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_csv_string())

    def to_csv_string(self) -> str:
        buf = io.StringIO()
        buf.write("record_id," + ",".join(self.names) + "\n")
        for i, rid in enumerate(self.ids):
            row = self.values[i]
            buf.write(rid + "," + ",".join(_fmt(v) for v in row) + "\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, path, metadata: dict | None = None) -> "FeatureMatrix":
        df = pd.read_csv(path, dtype={0: str}, float_precision="round_trip")
        ids = df.iloc[:, 0].tolist()
        names = list(df.columns[1:])
        values = df.iloc[:, 1:].to_numpy(dtype=np.float64)
        return cls(ids, names, values, metadata or {})

    @staticmethod
    def hstack(parts: list["FeatureMatrix"]) -> "FeatureMatrix":
        first = parts[0]
        for p in parts[1:]:
            if p.ids != first.ids:
                raise DimensionMismatch("row ids differ between stacked parts")
        names = [n for p in parts for n in p.names]
        values = np.concatenate([p.values for p in parts], axis=1)
        meta: dict = {}
        for p in parts:
            meta.update(p.metadata)
        return FeatureMatrix(list(first.ids), names, values, meta)
