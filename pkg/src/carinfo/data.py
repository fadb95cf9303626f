"""Areal count data and its CSV format (``region_id,y,n[,x1,...,xp]``)."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ValidationError

__all__ = ["CountData", "load_counts", "write_counts"]


@dataclass(frozen=True, eq=False)
class CountData:
    """Event counts ``y`` over exposure ``n`` per region.

    ``X`` always carries an intercept as its first column; extra columns are
    the covariates read from ``x1..xp``.
    """

    region_ids: tuple[str, ...]
    y: np.ndarray
    n: np.ndarray
    X: np.ndarray = field(default=None)
    covariate_names: tuple[str, ...] = ()

    def __post_init__(self):
        ids = tuple(str(r) for r in self.region_ids)
        y = np.asarray(self.y)
        n = np.asarray(self.n, dtype=float)
        if len(set(ids)) != len(ids):
            raise ValidationError("duplicate region ids in count data")
        if y.shape != (len(ids),) or n.shape != (len(ids),):
            raise ValidationError("y and n must have one entry per region")
        if not len(ids):
            raise ValidationError("count data has no regions")
        if np.any(y < 0) or np.any(np.asarray(y, float) != np.round(np.asarray(y, float))):
            raise ValidationError("counts y must be non-negative integers")
        if np.any(~np.isfinite(n)) or np.any(n <= 0):
            raise ValidationError("exposures n must be finite and > 0")
        X = np.ones((len(ids), 1)) if self.X is None else np.asarray(self.X, dtype=float)
        if X.ndim != 2 or X.shape[0] != len(ids):
            raise ValidationError(f"covariate matrix must have {len(ids)} rows, got shape {X.shape}")
        if np.any(~np.isfinite(X)):
            raise ValidationError("covariates must be finite")
        object.__setattr__(self, "region_ids", ids)
        object.__setattr__(self, "y", y.astype(np.int64))
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "X", X)
        for arr in (self.y, self.n, self.X):
            arr.flags.writeable = False

    def __eq__(self, other):
        if not isinstance(other, CountData):
            return NotImplemented
        return (
            self.region_ids == other.region_ids
            and self.covariate_names == other.covariate_names
            and np.array_equal(self.y, other.y)
            and np.array_equal(self.n, other.n)
            and np.array_equal(self.X, other.X)
        )

    __hash__ = None

    @property
    def size(self) -> int:
        return len(self.region_ids)

    def take(self, order: Sequence[int]) -> "CountData":
        order = list(order)
        return CountData(
            tuple(self.region_ids[k] for k in order),
            self.y[order],
            self.n[order],
            self.X[order],
            self.covariate_names,
        )

    def reorder(self, region_ids: Sequence[str]) -> "CountData":
        pos = {r: k for k, r in enumerate(self.region_ids)}
        try:
            return self.take([pos[r] for r in region_ids])
        except KeyError as exc:
            raise ValidationError(f"unknown region id {exc.args[0]!r}") from None


def load_counts(path) -> CountData:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader, [])]
        if header[:3] != ["region_id", "y", "n"]:
            raise ValidationError(f"{path}: header must start with 'region_id,y,n', got {header!r}")
        extra = header[3:]
        for k, name in enumerate(extra, start=1):
            if name != f"x{k}":
                raise ValidationError(f"{path}: covariate column {k} must be named 'x{k}', got {name!r}")
        ids, ys, ns, xs = [], [], [], []
        seen = set()
        for lineno, row in enumerate(reader, start=2):
            if not row or not any(c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ValidationError(f"{path} row {lineno}: expected {len(header)} fields, got {len(row)}")
            rid = row[0].strip()
            if not rid:
                raise ValidationError(f"{path} row {lineno}: empty region_id")
            try:
                yv = float(row[1])
                nv = float(row[2])
                xv = [float(c) for c in row[3:]]
            except ValueError as exc:
                raise ValidationError(f"{path} row {lineno}: {exc}") from None
            if not (yv >= 0 and yv == math.floor(yv)):
                raise ValidationError(f"{path} row {lineno}: y must be a non-negative integer, got {row[1]!r}")
            if not (math.isfinite(nv) and nv > 0):
                raise ValidationError(f"{path} row {lineno}: n must be > 0, got {row[2]!r}")
            if rid in seen:
                raise ValidationError(f"{path} row {lineno}: duplicate region_id {rid!r}")
            ids.append(rid)
            seen.add(rid)
            ys.append(int(yv))
            ns.append(nv)
            xs.append(xv)
    if not ids:
        raise ValidationError(f"{path}: no data rows")
    X = np.column_stack([np.ones(len(ids)), np.array(xs, dtype=float).reshape(len(ids), len(extra))])
    return CountData(tuple(ids), np.array(ys), np.array(ns), X, tuple(extra))


def write_counts(path, data: CountData) -> None:
    names = list(data.covariate_names) or [f"x{k}" for k in range(1, data.X.shape[1])]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["region_id", "y", "n", *names])
        for k, rid in enumerate(data.region_ids):
            w.writerow([rid, int(data.y[k]), repr(float(data.n[k])), *(repr(float(v)) for v in data.X[k, 1:])])
