"""Sparse labeled binary datasets and pattern statistics.

A pattern is a set of feature indices; a row contains the pattern iff all
of its features are 1 in that row. Everything downstream (training,
extraction, evaluation) is built on the counting operations defined here.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class DataError(ValueError):
    """Invalid dataset contents or a violated statistics precondition."""


class ParseError(DataError):
    """Malformed input file; message names the offending line."""


@dataclass(frozen=True)
class Pattern:
    """Nonempty, strictly increasing tuple of feature indices."""

    features: tuple[int, ...]

    def __init__(self, features) -> None:
        feats = tuple(sorted({int(j) for j in features}))
        if not feats:
            raise DataError("pattern must be nonempty")
        if feats[0] < 0:
            raise DataError("pattern contains a negative feature index")
        object.__setattr__(self, "features", feats)

    def __len__(self) -> int:
        return len(self.features)

    def __iter__(self):
        return iter(self.features)

    def as_set(self) -> frozenset:
        return frozenset(self.features)


class BinaryDataset:
    """Sparse binary matrix stored as one sorted index array per row.

    Immutable after construction; a dense float32 view is materialized
    lazily for the model code.
    """

    def __init__(self, rows, m: int) -> None:
        self.m = int(m)
        if self.m < 1:
            raise DataError("feature count must be >= 1")
        packed = []
        for i, row in enumerate(rows):
            arr = np.asarray(sorted({int(j) for j in row}), dtype=np.int64)
            if arr.size and (arr[0] < 0 or arr[-1] >= self.m):
                raise DataError(f"row {i}: feature index out of range [0, {self.m})")
            packed.append(arr)
        self.rows = packed
        self.n = len(packed)
        self._row_sets = [frozenset(r.tolist()) for r in packed]
        self._dense: np.ndarray | None = None

    def row_set(self, i: int) -> frozenset:
        return self._row_sets[i]

    def to_dense(self, dtype=np.float32) -> np.ndarray:
        """Dense (n, m) view; cached for float32 requests."""
        if self._dense is not None and self._dense.dtype == dtype:
            return self._dense
        X = np.zeros((self.n, self.m), dtype=dtype)
        for i, row in enumerate(self.rows):
            X[i, row] = 1
        if dtype == np.float32:
            self._dense = X
        return X

    def ones_count(self) -> int:
        return sum(int(r.size) for r in self.rows)


@dataclass
class LabeledDataset:
    """Binary dataset plus a class id per row; every class is populated."""

    data: BinaryDataset
    labels: np.ndarray
    K: int = field(default=0)

    def __post_init__(self) -> None:
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.labels.ndim != 1 or self.labels.shape[0] != self.data.n:
            raise DataError("labels length must equal the number of rows")
        if self.K == 0:
            self.K = int(self.labels.max()) + 1 if self.labels.size else 0
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.K):
            raise DataError(f"class ids must lie in [0, {self.K})")
        counts = np.bincount(self.labels, minlength=self.K)
        if self.K < 1 or (counts == 0).any():
            missing = [int(k) for k in np.flatnonzero(counts == 0)]
            raise DataError(f"classes with no rows: {missing}")
        self.class_counts = counts
        self.class_rows = [np.flatnonzero(self.labels == k) for k in range(self.K)]

    @property
    def n(self) -> int:
        return self.data.n

    @property
    def m(self) -> int:
        return self.data.m


def load_sparse(path_data, path_labels, m: int | None = None) -> LabeledDataset:
    """Read the one-row-per-line sparse format plus a label file.

    Each data line lists the 0-based indices of the active cells, space
    separated; an empty line is an all-zero row. The label file carries one
    integer class id per line in the same row order. When `m` is not given
    it is inferred as 1 + the largest observed index.
    """
    rows = []
    with open(path_data, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            toks = line.split()
            try:
                idx = [int(t) for t in toks]
            except ValueError as exc:
                raise ParseError(f"{path_data}: non-integer token at line {lineno}") from exc
            if any(j < 0 for j in idx):
                raise ParseError(f"{path_data}: negative index at line {lineno}")
            if m is not None and any(j >= m for j in idx):
                raise ParseError(
                    f"{path_data}: index >= declared m={m} at line {lineno}"
                )
            rows.append(idx)
    if not rows:
        raise ParseError(f"{path_data}: zero rows")

    labels = []
    with open(path_labels, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            tok = line.strip()
            if not tok:
                continue
            try:
                labels.append(int(tok))
            except ValueError as exc:
                raise ParseError(f"{path_labels}: non-integer token at line {lineno}") from exc
            if lineno > len(rows):
                raise ParseError(f"{path_labels}: row-count mismatch at line {lineno}")
    if len(labels) != len(rows):
        bad = min(len(labels), len(rows)) + 1
        where = path_labels if len(labels) < len(rows) else path_data
        raise ParseError(f"{where}: row-count mismatch at line {bad}")

    if m is None:
        observed = max((max(r) for r in rows if r), default=-1)
        m = observed + 1
        if m < 1:
            raise ParseError(f"{path_data}: cannot infer feature count from all-zero data")
    return LabeledDataset(BinaryDataset(rows, m), np.asarray(labels))


def save_sparse(D: LabeledDataset, path_data, path_labels) -> None:
    """Inverse of load_sparse; LF-terminated, UTF-8."""
    with open(path_data, "w", encoding="utf-8", newline="\n") as fh:
        for row in D.data.rows:
            fh.write(" ".join(str(int(j)) for j in row) + "\n")
    with open(path_labels, "w", encoding="utf-8", newline="\n") as fh:
        for y in D.labels:
            fh.write(f"{int(y)}\n")


def _check_pattern(p: Pattern, m: int) -> None:
    if p.features[-1] >= m:
        raise DataError(f"pattern index {p.features[-1]} out of range [0, {m})")


def support(p: Pattern, D: BinaryDataset) -> int:
    """Number of rows containing every feature of `p`."""
    _check_pattern(p, D.m)
    ps = p.as_set()
    return sum(1 for rs in D._row_sets if ps <= rs)


def support_in_class(p: Pattern, D: LabeledDataset, k: int) -> int:
    """Support restricted to rows labeled `k`."""
    if not 0 <= k < D.K:
        raise DataError(f"class id {k} out of range [0, {D.K})")
    _check_pattern(p, D.m)
    ps = p.as_set()
    return sum(1 for i in D.class_rows[k] if ps <= D.data.row_set(int(i)))


def prob_pattern_given_class(p: Pattern, D: LabeledDataset, k: int) -> float:
    """supp_k(p) / n_k."""
    return support_in_class(p, D, k) / int(D.class_counts[k])


def prob_class_given_pattern(p: Pattern, D: LabeledDataset, k: int) -> float:
    """supp_k(p) / supp(p); requires the pattern to occur at all."""
    s = support(p, D.data)
    if s == 0:
        raise DataError("pattern has zero support; conditional is undefined")
    return support_in_class(p, D, k) / s


def is_differential(p: Pattern, D: LabeledDataset, k: int) -> bool:
    """Double-argmax test; any tie in either argmax counts as not differential."""
    s = support(p, D.data)
    if s == 0:
        raise DataError("pattern has zero support; conditional is undefined")
    supp_k = np.array([support_in_class(p, D, kk) for kk in range(D.K)], dtype=np.float64)
    p_given = supp_k / D.class_counts
    k_given = supp_k / s
    for arr in (p_given, k_given):
        best = arr.max()
        winners = np.flatnonzero(arr == best)
        if winners.size != 1 or winners[0] != k:
            return False
    return True


def density(D: BinaryDataset) -> float:
    """Fraction of active cells, in [0, 1]."""
    if D.n == 0 or D.m == 0:
        raise DataError("density of an empty dataset is undefined")
    return D.ones_count() / (D.n * D.m)
