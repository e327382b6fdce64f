"""Probability tensors for three raters, cell classes and two-way marginals.

All public indexing is 1-based: ``P[1, 1, 1]`` is the cell where every rater
chose category 1. Storage is a read-only numpy array, ``dtype=object``
holding ``Fraction`` values for the rational backend and ``float64`` for the
float backend.
"""

from __future__ import annotations

import enum
import itertools
from fractions import Fraction
from pathlib import Path

import numpy as np

from ._numbers import FLOAT, RATIONAL, coerce, format_number, parse_number
from .errors import InvalidTensor

FLOAT_SUM_TOL = 1e-12


class CellClass(enum.Enum):
    ALL_EQUAL = "AllEqual"
    EQ12 = "Eq12"
    EQ13 = "Eq13"
    EQ23 = "Eq23"
    ALL_DISTINCT = "AllDistinct"


def classify_cell(i, j, k, n=None):
    """Return the agreement pattern of cell ``(i, j, k)``.

    ``EQ12`` means ``i == j != k``; ``EQ13`` means ``i == k != j``;
    ``EQ23`` means ``j == k != i``.
    """
    for idx in (i, j, k):
        if idx < 1 or (n is not None and idx > n):
            raise IndexError(f"cell index {(i, j, k)} out of range for n={n}")
    if i == j == k:
        return CellClass.ALL_EQUAL
    if i == j:
        return CellClass.EQ12
    if i == k:
        return CellClass.EQ13
    if j == k:
        return CellClass.EQ23
    return CellClass.ALL_DISTINCT


def cells(n):
    """All cells of an ``n x n x n`` tensor in lexicographic order, 1-based."""
    return list(itertools.product(range(1, n + 1), repeat=3))


def class_sizes(n):
    """Closed-form cardinality of each cell class."""
    return {
        CellClass.ALL_EQUAL: n,
        CellClass.EQ12: n * (n - 1),
        CellClass.EQ13: n * (n - 1),
        CellClass.EQ23: n * (n - 1),
        CellClass.ALL_DISTINCT: n**3 - 3 * n**2 + 2 * n,
    }


def _as_array(entries, ndim):
    """Coerce nested sequences / arrays into a read-only numpy array."""
    if isinstance(entries, np.ndarray) and entries.dtype.kind == "f":
        arr = np.array(entries, dtype=np.float64)
        backend = FLOAT
    else:
        raw = np.asarray(entries, dtype=object)
        flat = [coerce(v) for v in raw.ravel()]
        if any(isinstance(v, float) for v in flat):
            arr = np.array([float(v) for v in flat], dtype=np.float64).reshape(raw.shape)
            backend = FLOAT
        else:
            arr = np.empty(raw.shape, dtype=object)
            arr.ravel()[:] = flat
            backend = RATIONAL
    if arr.ndim != ndim or len(set(arr.shape)) != 1:
        raise InvalidTensor(f"expected a cubical array with {ndim} axes, got shape {arr.shape}")
    if arr.shape[0] < 2:
        raise InvalidTensor("category count n must be at least 2")
    if backend == FLOAT and not np.all(np.isfinite(arr)):
        raise InvalidTensor("entries must be finite")
    if any(v < 0 for v in arr.ravel()):
        raise InvalidTensor("entries must be non-negative")
    arr.flags.writeable = False
    return arr, backend


def _check_total(total, backend):
    if backend == RATIONAL:
        if total != 1:
            raise InvalidTensor(f"entries sum to {total}, not 1")
    elif abs(total - 1.0) > FLOAT_SUM_TOL:
        raise InvalidTensor(f"entries sum to {total!r}, not 1 within {FLOAT_SUM_TOL}")


class _Table:
    _ndim = 0

    def __init__(self, entries, *, normalized=True):
        self._array, self.backend = _as_array(entries, self._ndim)
        self.n = self._array.shape[0]
        self.is_normalized = normalized
        if normalized:
            _check_total(self.total(), self.backend)

    @classmethod
    def unnormalized(cls, entries):
        """Build without the sum-to-one check (raw counts, projective points)."""
        return cls(entries, normalized=False)

    @property
    def array(self):
        """0-based read-only storage."""
        return self._array

    @property
    def is_rational(self):
        return self.backend == RATIONAL

    def total(self):
        if self.backend == RATIONAL:
            return sum(self._array.ravel(), Fraction(0))
        return float(np.sum(self._array))

    def normalize(self):
        total = self.total()
        if total == 0:
            raise InvalidTensor("cannot normalize an all-zero table")
        return type(self)(self._array / total)

    def to_float(self):
        return type(self)(self._array.astype(np.float64), normalized=self.is_normalized)

    def __getitem__(self, index):
        if len(index) != self._ndim:
            raise IndexError(f"expected {self._ndim} indices")
        for idx in index:
            if not 1 <= idx <= self.n:
                raise IndexError(f"index {index} out of range for n={self.n}")
        return self._array[tuple(i - 1 for i in index)]

    def __eq__(self, other):
        if not isinstance(other, type(self)):
            return NotImplemented
        return self.n == other.n and bool(np.all(self._array == other._array))

    def __hash__(self):
        return hash((self.n, tuple(self._array.ravel())))


class ProbabilityTensor(_Table):
    """An ``n x n x n`` table of non-negative entries summing to one."""

    _ndim = 3

    @classmethod
    def from_function(cls, n, func, *, normalized=True):
        """Tabulate ``func(i, j, k)`` over 1-based cells."""
        data = [[[func(i, j, k) for k in range(1, n + 1)] for j in range(1, n + 1)] for i in range(1, n + 1)]
        return cls(data, normalized=normalized)

    @classmethod
    def uniform(cls, n):
        return cls(np.full((n, n, n), Fraction(1, n**3), dtype=object))

    @classmethod
    def perfect_agreement(cls, n):
        """``1/n`` on the main diagonal, zero elsewhere."""
        return cls.from_function(n, lambda i, j, k: Fraction(1, n) if i == j == k else Fraction(0))

    def items(self):
        for cell in cells(self.n):
            yield cell, self[cell]

    def transpose(self, axes):
        """Permute rater axes; ``axes`` is a permutation of ``(1, 2, 3)``."""
        if sorted(axes) != [1, 2, 3]:
            raise ValueError("axes must be a permutation of (1, 2, 3)")
        return type(self)(np.transpose(self._array, [a - 1 for a in axes]), normalized=self.is_normalized)

    def __repr__(self):
        return f"ProbabilityTensor(n={self.n}, backend={self.backend!r})"


class TwoWayTable(_Table):
    """An ``n x n`` table, typically a two-rater marginal of a tensor."""

    _ndim = 2

    @property
    def row_sums(self):
        return self._array.sum(axis=1)

    @property
    def col_sums(self):
        return self._array.sum(axis=0)

    def __repr__(self):
        return f"TwoWayTable(n={self.n}, backend={self.backend!r})"


def marginalize(P, summed_axis):
    """Sum a tensor over one rater axis.

    ``summed_axis=3`` gives the rater-1/rater-2 table with entries
    ``sum_k P[i, j, k]``; axis 2 gives raters (1, 3); axis 1 gives (2, 3).
    """
    if summed_axis not in (1, 2, 3):
        raise ValueError(f"summed_axis must be 1, 2 or 3, got {summed_axis!r}")
    table = P.array.sum(axis=summed_axis - 1)
    return TwoWayTable(table, normalized=P.is_normalized)


# -- text format -----------------------------------------------------------


def format_tensor(P):
    lines = [f"n={P.n}"]
    lines.extend(f"{i} {j} {k} {format_number(v)}" for (i, j, k), v in P.items())
    return "\n".join(lines) + "\n"


def parse_cells(text, exact=True):
    """Parse the ``n=<int>`` / ``i j k value`` format into ``(n, array)``."""
    rows = [ln.split("#", 1)[0].strip() for ln in text.splitlines()]
    rows = [ln for ln in rows if ln]
    if not rows or not rows[0].replace(" ", "").startswith("n="):
        raise InvalidTensor("first line must be 'n=<int>'")
    try:
        n = int(rows[0].replace(" ", "")[2:])
    except ValueError as exc:
        raise InvalidTensor(f"bad header {rows[0]!r}") from exc
    if n < 2:
        raise InvalidTensor("n must be at least 2")
    data = np.empty((n, n, n), dtype=object)
    seen = set()
    for line in rows[1:]:
        parts = line.split()
        if len(parts) != 4:
            raise InvalidTensor(f"expected 'i j k value', got {line!r}")
        try:
            i, j, k = (int(p) for p in parts[:3])
        except ValueError as exc:
            raise InvalidTensor(f"bad indices in {line!r}") from exc
        if not all(1 <= x <= n for x in (i, j, k)):
            raise InvalidTensor(f"cell {(i, j, k)} out of range for n={n}")
        if (i, j, k) in seen:
            raise InvalidTensor(f"duplicate cell {(i, j, k)}")
        seen.add((i, j, k))
        try:
            data[i - 1, j - 1, k - 1] = parse_number(parts[3], exact=exact)
        except ValueError as exc:
            raise InvalidTensor(str(exc)) from exc
    if len(seen) != n**3:
        raise InvalidTensor(f"expected {n**3} cells, got {len(seen)}")
    if not exact:
        data = data.astype(np.float64)
    return n, data


def parse_tensor(text, *, exact=True, normalized=True):
    _, data = parse_cells(text, exact=exact)
    return ProbabilityTensor(data, normalized=normalized)


def load_tensor(path, *, exact=True, normalized=True):
    return parse_tensor(Path(path).read_text(), exact=exact, normalized=normalized)


def dump_tensor(P, path):
    Path(path).write_text(format_tensor(P))
