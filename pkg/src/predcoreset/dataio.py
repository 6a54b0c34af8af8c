"""CSV input and output for streams and selections."""

from __future__ import annotations

import csv
import io
import math
from pathlib import Path
from typing import Sequence

import numpy as np

from .harness import StreamDataset

__all__ = ["DataError", "read_stream_csv", "write_stream_csv", "write_selection_csv"]


class DataError(ValueError):
    pass


def _float(text: str, line: int, column: str) -> float:
    if text.strip() == "":
        raise DataError(f"line {line}: missing value in column {column!r}")
    try:
        v = float(text)
    except ValueError:
        raise DataError(f"line {line}: cannot parse {text!r} in column {column!r}") from None
    if not math.isfinite(v):
        raise DataError(f"line {line}: non-finite value in column {column!r}")
    return v


def read_stream_csv(source, features: Sequence[str] | None = None, label: str | None = None,
                    epoch: str = "epoch", fit_rows: int = 0) -> StreamDataset:
    """Parse a header-first CSV with one epoch per row.

    Without an explicit ``features`` list, every column other than the epoch
    and label columns is a feature.
    """
    text = Path(source).read_text() if not isinstance(source, io.StringIO) else source.getvalue()
    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise DataError("line 1: empty file") from None
    if epoch not in header:
        raise DataError(f"line 1: no {epoch!r} column in header {header}")
    if label is not None and label not in header:
        raise DataError(f"line 1: no label column {label!r}")
    if features is None:
        features = [h for h in header if h not in (epoch, label)]
    missing = [f for f in features if f not in header]
    if missing or not features:
        raise DataError(f"line 1: feature columns {missing or features} not found")
    e_idx = header.index(epoch)
    f_idx = [header.index(f) for f in features]
    l_idx = header.index(label) if label is not None else None
    epochs, rows, labels = [], [], []
    for lineno, rec in enumerate(reader, start=2):
        if not rec or all(c.strip() == "" for c in rec):
            continue
        if len(rec) != len(header):
            raise DataError(f"line {lineno}: expected {len(header)} fields, got {len(rec)}")
        ev = _float(rec[e_idx], lineno, epoch)
        if not ev.is_integer() or ev < 0:
            raise DataError(f"line {lineno}: epoch must be a non-negative integer")
        if epochs and ev <= epochs[-1]:
            raise DataError(f"line {lineno}: epochs must be strictly increasing")
        epochs.append(int(ev))
        rows.append([_float(rec[i], lineno, header[i]) for i in f_idx])
        if l_idx is not None:
            lv = _float(rec[l_idx], lineno, label)
            if not lv.is_integer():
                raise DataError(f"line {lineno}: label must be an integer")
            labels.append(int(lv))
    if not epochs:
        raise DataError("no data rows")
    if not (0 <= fit_rows <= len(epochs)):
        raise DataError(f"fit_rows={fit_rows} exceeds the {len(epochs)} rows")
    return StreamDataset(np.array(epochs), np.array(rows), np.array(labels) if l_idx is not None else None,
                         fit_rows, list(features))


def _fmt(v: float) -> str:
    return repr(float(v))


def write_stream_csv(dataset: StreamDataset, path, label: str = "label") -> None:
    names = dataset.feature_names or [f"x{i}" for i in range(dataset.d)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", *names] + ([label] if dataset.labels is not None else []))
        for i, e in enumerate(dataset.epochs):
            row = [int(e), *(_fmt(v) for v in dataset.features[i])]
            if dataset.labels is not None:
                row.append(int(dataset.labels[i]))
            w.writerow(row)


def write_selection_csv(path, dataset: StreamDataset, epochs: Sequence[int], weights: dict[int, int] | None = None,
                        origins: dict[int, str] | None = None) -> None:
    """Selected epochs with their raw features (and labels if known), for labelling tools."""
    row_of = {int(e): i for i, e in enumerate(dataset.epochs)}
    names = dataset.feature_names or [f"x{i}" for i in range(dataset.d)]
    header = ["epoch"]
    if weights is not None:
        header.append("weight")
    if origins is not None:
        header.append("origin")
    header += names
    if dataset.labels is not None:
        header.append("label")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for e in sorted(epochs):
            i = row_of[int(e)]
            row: list = [int(e)]
            if weights is not None:
                row.append(weights[e])
            if origins is not None:
                row.append(origins[e])
            row += [_fmt(v) for v in dataset.features[i]]
            if dataset.labels is not None:
                row.append(int(dataset.labels[i]))
            w.writerow(row)
