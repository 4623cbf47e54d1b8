"""LIBSVM-format parsing and the immutable dataset model.

Files are one instance per line, ``label idx:val idx:val ...`` with 1-based,
strictly increasing feature indices. Internally indices are stored 0-based
and labels are remapped onto a dense ``[0, m)`` id space, assigning ids in
ascending order of the original label value so the mapping is deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np
import scipy.sparse as sp

# Dense feature caches are only built when the full matrix stays this small
# (entry count); larger data keeps the CSR-only path.
_DENSE_CACHE_MAX_ENTRIES = 20_000_000


class ParseError(ValueError):
    """Malformed LIBSVM input, carrying the 1-based line number when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class FeatureVector:
    """Sparse feature vector: 0-based, strictly increasing (index, value) pairs."""

    entries: tuple[tuple[int, float], ...]

    def to_dense(self, dim: int) -> np.ndarray:
        out = np.zeros(dim)
        for j, v in self.entries:
            out[j] = v
        return out


@dataclass(frozen=True)
class LabeledInstance:
    """A feature vector paired with its dense class id."""

    features: FeatureVector
    label: int


class Dataset:
    """Immutable set of sparse labeled instances with a dense label space.

    Parameters
    ----------
    X : scipy.sparse.csr_matrix of shape (n, d)
        Feature rows, 0-based column indices.
    y : ndarray of shape (n,)
        Dense class ids in ``[0, m)``.
    label_map : dict
        Original label value -> dense id. Dense ids must be exactly
        ``0..m-1``, assigned in ascending order of original value.

    Attributes
    ----------
    n : int
        Number of instances.
    d : int
        Feature dimension.
    m : int
        Number of classes.
    """

    def __init__(self, X: sp.csr_matrix, y: np.ndarray, label_map: dict[int, int]):
        X = sp.csr_matrix(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        if X.shape[0] != y.shape[0]:
            raise ValueError(
                f"feature rows ({X.shape[0]}) and labels ({y.shape[0]}) disagree"
            )
        if X.shape[0] < 1:
            raise ValueError("dataset must contain at least one instance")
        if not np.all(np.isfinite(X.data)):
            raise ValueError("non-finite feature value")
        ids = sorted(label_map.values())
        if ids != list(range(len(label_map))):
            raise ValueError("label_map ids must be exactly 0..m-1")
        originals = sorted(label_map)
        if [label_map[v] for v in originals] != list(range(len(label_map))):
            raise ValueError("label_map ids must ascend with original label value")
        if y.size and (y.min() < 0 or y.max() >= len(label_map)):
            raise ValueError("label outside [0, m)")
        X.sort_indices()
        self._X = X
        self._y = y
        self._y.setflags(write=False)
        self._label_map = dict(label_map)
        self._dense: np.ndarray | None = None

    # -- basic accessors ---------------------------------------------------
    @property
    def X(self) -> sp.csr_matrix:
        return self._X

    @property
    def y(self) -> np.ndarray:
        return self._y

    @property
    def label_map(self) -> dict[int, int]:
        return dict(self._label_map)

    @property
    def n(self) -> int:
        return self._X.shape[0]

    @property
    def d(self) -> int:
        return self._X.shape[1]

    @property
    def m(self) -> int:
        return len(self._label_map)

    def __len__(self) -> int:
        return self.n

    def instance(self, i: int) -> LabeledInstance:
        row = self._X.getrow(i)
        entries = tuple(zip(row.indices.tolist(), row.data.tolist()))
        return LabeledInstance(FeatureVector(entries), int(self._y[i]))

    def __iter__(self) -> Iterator[LabeledInstance]:
        return (self.instance(i) for i in range(self.n))

    def dense(self) -> np.ndarray:
        """Dense copy of X, cached; only for matrices small enough to afford it."""
        if self._dense is None:
            if self.n * self.d > _DENSE_CACHE_MAX_ENTRIES:
                raise ValueError(
                    f"dense cache refused for {self.n}x{self.d} matrix"
                )
            self._dense = self._X.toarray()
            self._dense.setflags(write=False)
        return self._dense

    def row_squared_norms(self) -> np.ndarray:
        return np.asarray(self._X.multiply(self._X).sum(axis=1)).ravel()

    def subset(self, indices) -> "Dataset":
        """New dataset holding the given rows (label space unchanged)."""
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self._X[idx], self._y[idx], self._label_map)

    def with_dim(self, d: int) -> "Dataset":
        """Same data, feature dimension widened to ``d`` (must not shrink)."""
        if d < self.d:
            raise ValueError(f"cannot shrink dimension {self.d} to {d}")
        if d == self.d:
            return self
        X = sp.csr_matrix(
            (self._X.data, self._X.indices, self._X.indptr), shape=(self.n, d)
        )
        return Dataset(X, self._y, self._label_map)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self._X.shape == other._X.shape
            and np.array_equal(self._X.indptr, other._X.indptr)
            and np.array_equal(self._X.indices, other._X.indices)
            and np.array_equal(self._X.data, other._X.data)
            and np.array_equal(self._y, other._y)
            and self._label_map == other._label_map
        )

    def __repr__(self) -> str:
        return f"Dataset(n={self.n}, d={self.d}, m={self.m})"


def _parse_label(token: str, line_no: int) -> int:
    try:
        value = float(token)
    except ValueError:
        raise ParseError(f"malformed label {token!r}", line_no) from None
    if not value.is_integer():
        raise ParseError(f"non-integer label {token!r}", line_no)
    return int(value)


def parse_libsvm(source: str | Iterable[str], min_dim: int = 0) -> Dataset:
    """Parse LIBSVM text into a :class:`Dataset`.

    Parameters
    ----------
    source : str or iterable of str
        The text, or an iterable of lines (e.g. an open file).
    min_dim : int, default=0
        Lower bound on the feature dimension; the result's ``d`` is the max
        of this and the largest index seen. Used to widen a file whose last
        features happen to be absent (aligning train/test is the usual
        caller).

    Returns
    -------
    Dataset

    Raises
    ------
    ParseError
        On a malformed numeric token, non-increasing indices within a line,
        or an input with no instances; the message names the 1-based line.
    """
    if isinstance(source, str):
        lines: Iterable[str] = source.splitlines()
    else:
        lines = source

    labels: list[int] = []
    data: list[float] = []
    indices: list[int] = []
    indptr: list[int] = [0]
    max_index = 0  # 1-based, 0 = none seen

    for line_no, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        labels.append(_parse_label(tokens[0], line_no))
        prev_index = 0
        for token in tokens[1:]:
            idx_s, sep, val_s = token.partition(":")
            if not sep:
                raise ParseError(f"expected idx:val, got {token!r}", line_no)
            try:
                idx = int(idx_s)
            except ValueError:
                raise ParseError(f"malformed index {idx_s!r}", line_no) from None
            try:
                val = float(val_s)
            except ValueError:
                raise ParseError(f"malformed value {val_s!r}", line_no) from None
            if idx < 1:
                raise ParseError(f"index {idx} is not positive", line_no)
            if idx <= prev_index:
                raise ParseError(
                    f"index {idx} does not increase (previous {prev_index})", line_no
                )
            if not np.isfinite(val):
                raise ParseError(f"non-finite value {val_s!r}", line_no)
            prev_index = idx
            indices.append(idx - 1)  # store 0-based
            data.append(val)
        indptr.append(len(data))
        max_index = max(max_index, prev_index)

    if not labels:
        raise ParseError("no instances in input")

    d = max(max_index, min_dim)
    label_map = {v: i for i, v in enumerate(sorted(set(labels)))}
    y = np.array([label_map[v] for v in labels], dtype=np.int64)
    X = sp.csr_matrix(
        (np.array(data), np.array(indices, dtype=np.int32), np.array(indptr)),
        shape=(len(labels), d),
    )
    return Dataset(X, y, label_map)


def parse_libsvm_file(path, min_dim: int = 0) -> Dataset:
    with open(path, "r", encoding="ascii") as fh:
        return parse_libsvm(fh, min_dim=min_dim)


def dump_libsvm(dataset: Dataset) -> str:
    """Serialize back to LIBSVM text (1-based indices, original labels).

    Values are written with ``repr`` so re-parsing reproduces the dataset
    exactly.
    """
    inverse = {i: v for v, i in dataset.label_map.items()}
    X = dataset.X
    lines = []
    for i in range(dataset.n):
        start, end = X.indptr[i], X.indptr[i + 1]
        parts = [str(inverse[int(dataset.y[i])])]
        parts.extend(
            f"{X.indices[p] + 1}:{float(X.data[p])!r}" for p in range(start, end)
        )
        lines.append(" ".join(parts))
    return "\n".join(lines) + "\n"


def align(train: Dataset, test: Dataset) -> tuple[Dataset, Dataset]:
    """Put two datasets on a shared feature dimension and label space.

    Both results use ``d = max(d_train, d_test)`` and the training label
    map.

    Raises
    ------
    ValueError
        If the test set contains a label the training set does not.
    """
    test_inverse = {i: v for v, i in test.label_map.items()}
    unseen = sorted(set(test.label_map) - set(train.label_map))
    if unseen:
        raise ValueError(f"test set contains labels unseen in training: {unseen}")

    d = max(train.d, test.d)
    new_train = train.with_dim(d)
    remap = np.array(
        [train.label_map[test_inverse[i]] for i in range(test.m)], dtype=np.int64
    )
    new_test = Dataset(test.with_dim(d).X, remap[test.y], train.label_map)
    # identity case: hand back the originals untouched
    if new_train == train and new_test == test:
        return train, test
    return new_train, new_test
