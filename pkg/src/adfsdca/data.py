"""Sparse dataset handling: LIBSVM text I/O, feature scaling, per-example stats."""

from __future__ import annotations

import gzip
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp


class LibsvmParseError(ValueError):
    """Malformed LIBSVM input; the message names the offending line."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Dataset:
    """Immutable row-compressed sparse design matrix with labels.

    Rows are examples.  ``indices`` are 0-based and strictly increasing
    within each row, with no explicit zeros stored.  ``norms[i]`` caches
    the squared euclidean norm of row i.  Instances are safe to share
    across concurrent solver runs.
    """

    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray
    labels: np.ndarray
    d: int
    norms: np.ndarray
    max_example_nnz: int
    max_feature_degree: int

    @property
    def n(self) -> int:
        return int(self.labels.size)

    @cached_property
    def matrix(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.data, self.indices, self.indptr), shape=(self.n, self.d))

    def matvec(self, w: np.ndarray) -> np.ndarray:
        """Row margins X @ w."""
        return self.matrix @ w

    def rmatvec(self, u: np.ndarray) -> np.ndarray:
        """Feature-space combination X.T @ u."""
        return self.matrix.T @ u

    def row(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.indptr[i], self.indptr[i + 1]
        return self.indices[lo:hi], self.data[lo:hi]

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.d == other.d
            and np.array_equal(self.indptr, other.indptr)
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.data, other.data)
            and np.array_equal(self.labels, other.labels)
        )

    __hash__ = None


def make_dataset(indptr, indices, data, labels, d) -> Dataset:
    """Validate raw CSR arrays and derive the per-example statistics."""
    indptr = np.ascontiguousarray(indptr, dtype=np.int64)
    indices = np.ascontiguousarray(indices, dtype=np.int64)
    data = np.ascontiguousarray(data, dtype=np.float64)
    labels = np.ascontiguousarray(labels, dtype=np.float64)
    n = labels.size
    d = int(d)
    if n < 1 or d < 1:
        raise ValueError("dataset needs at least one example and one feature")
    if indptr.size != n + 1 or indptr[0] != 0 or indptr[-1] != indices.size:
        raise ValueError("inconsistent CSR index pointers")
    if indices.size != data.size:
        raise ValueError("indices/data length mismatch")
    if indices.size:
        if indices.min() < 0 or indices.max() >= d:
            raise ValueError("feature index out of range")
        inner = np.diff(indices)
        # row starts may decrease; interior positions must strictly increase
        starts = np.zeros(indices.size, dtype=bool)
        starts[indptr[:-1][indptr[:-1] < indices.size]] = True
        if np.any((inner <= 0) & ~starts[1:]):
            raise ValueError("indices within a row must strictly increase")
        if np.any(data == 0.0):
            raise ValueError("explicit zero values are not allowed")
    if not np.all(np.isfinite(labels)) or not np.all(np.isfinite(data)):
        raise ValueError("non-finite values in dataset")

    sq = np.concatenate(([0.0], np.cumsum(data * data)))
    norms = sq[indptr[1:]] - sq[indptr[:-1]]
    row_nnz = np.diff(indptr)
    max_nnz = int(row_nnz.max()) if n else 0
    degree = np.bincount(indices, minlength=d)
    max_degree = int(degree.max()) if d else 0
    return Dataset(
        indptr=_frozen(indptr),
        indices=_frozen(indices),
        data=_frozen(data),
        labels=_frozen(labels),
        d=d,
        norms=_frozen(norms),
        max_example_nnz=max_nnz,
        max_feature_degree=max_degree,
    )


def _normalize_labels(labels: np.ndarray) -> np.ndarray:
    distinct = set(np.unique(labels).tolist())
    if distinct <= {-1.0, 1.0}:
        return labels
    if distinct <= {0.0, 1.0}:
        return np.where(labels == 0.0, -1.0, 1.0)
    if distinct <= {1.0, 2.0}:
        return np.where(labels == 1.0, -1.0, 1.0)
    return labels  # regression targets pass through unchanged


def parse_libsvm(text: str | bytes, dim: int | None = None) -> Dataset:
    """Parse LIBSVM text: ``<label> <idx>:<val> ...`` with 1-based indices.

    ``dim`` overrides the feature dimension (useful when train/test splits
    must share one); it must cover the largest index seen.
    """
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    labels: list[float] = []
    indptr: list[int] = [0]
    indices: list[int] = []
    values: list[float] = []
    max_seen = 0
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        tokens = line.split()
        try:
            y = float(tokens[0])
        except ValueError:
            raise LibsvmParseError(f"malformed label {tokens[0]!r} at line {lineno}") from None
        if not np.isfinite(y):
            raise LibsvmParseError(f"non-finite label at line {lineno}")
        prev = 0
        for tok in tokens[1:]:
            idx_s, sep, val_s = tok.partition(":")
            if not sep:
                raise LibsvmParseError(f"malformed token {tok!r} at line {lineno}")
            try:
                idx = int(idx_s)
                val = float(val_s)
            except ValueError:
                raise LibsvmParseError(f"malformed token {tok!r} at line {lineno}") from None
            if idx < 1:
                raise LibsvmParseError(f"index {idx} < 1 at line {lineno}")
            if idx <= prev:
                raise LibsvmParseError(f"indices not increasing at line {lineno}")
            if not np.isfinite(val):
                raise LibsvmParseError(f"non-finite value at line {lineno}")
            prev = idx
            max_seen = max(max_seen, idx)
            if val != 0.0:
                indices.append(idx - 1)
                values.append(val)
        labels.append(y)
        indptr.append(len(indices))
    if not labels:
        raise LibsvmParseError("empty dataset")
    if dim is None:
        d = max(max_seen, 1)
    else:
        d = int(dim)
        if d < max_seen:
            raise LibsvmParseError(f"dimension override {d} below largest index {max_seen}")
    y = _normalize_labels(np.asarray(labels, dtype=np.float64))
    return make_dataset(indptr, indices, values, y, d)


def to_libsvm(ds: Dataset) -> str:
    """Serialize back to LIBSVM text (1-based indices, round-tripping floats)."""
    lines = []
    for i in range(ds.n):
        idx, vals = ds.row(i)
        parts = [repr(float(ds.labels[i]))]
        parts.extend(f"{int(j) + 1}:{repr(float(v))}" for j, v in zip(idx, vals))
        lines.append(" ".join(parts))
    return "\n".join(lines) + "\n"


def load_dataset(path: str | Path, dim: int | None = None) -> Dataset:
    """Read a LIBSVM file; names ending in ``.gz`` are gunzipped first."""
    path = Path(path)
    if path.name.endswith(".gz"):
        with gzip.open(path, "rb") as fh:
            return parse_libsvm(fh.read(), dim=dim)
    return parse_libsvm(path.read_bytes(), dim=dim)


def scale_features(ds: Dataset, mode: str) -> Dataset:
    """``unit_norm`` rescales each row to unit euclidean norm (zero rows kept);
    ``none`` returns the input unchanged."""
    if mode == "none":
        return ds
    if mode != "unit_norm":
        raise ValueError(f"unknown scaling mode {mode!r}")
    norm = np.sqrt(ds.norms)
    scale = np.where(norm > 0.0, 1.0 / np.where(norm > 0.0, norm, 1.0), 1.0)
    data = ds.data * np.repeat(scale, np.diff(ds.indptr))
    return make_dataset(ds.indptr.copy(), ds.indices.copy(), data, ds.labels.copy(), ds.d)


def synthetic_dataset(n: int, d: int, density: float, seed: int) -> Dataset:
    """Random sparse instance: standard-normal values at the given density,
    binary labels from a random ground-truth hyperplane."""
    if n < 1 or d < 1 or not 0.0 < density <= 1.0:
        raise ValueError("need n >= 1, d >= 1 and density in (0, 1]")
    rng = np.random.Generator(np.random.Philox(seed))
    indptr = [0]
    indices: list[int] = []
    for _ in range(n):
        mask = rng.random(d) < density
        if not mask.any():
            mask[rng.integers(d)] = True  # keep every example informative
        indices.extend(np.flatnonzero(mask).tolist())
        indptr.append(len(indices))
    values = rng.standard_normal(len(indices))
    values[values == 0.0] = 1.0
    ds = make_dataset(indptr, indices, values, np.ones(n), d)
    w_true = rng.standard_normal(d)
    margins = ds.matvec(w_true)
    labels = np.where(margins >= 0.0, 1.0, -1.0)
    return make_dataset(ds.indptr.copy(), ds.indices.copy(), ds.data.copy(), labels, d)
