"""
Small dense real matrices in pure Python.

The estimation code never needs more than a handful of rows, so everything
here is plain row-major tuples and textbook Gaussian elimination.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import ConfigurationError, SingularityError

SINGULAR_PIVOT_RTOL = 1e-12
RANK_RTOL = 1e-10
SYMMETRY_RTOL = 1e-9


@dataclass(frozen=True)
class Matrix:
    rows: int
    cols: int
    entries: tuple[float, ...]

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ConfigurationError(f"matrix dimensions must be positive, got {self.rows}x{self.cols}")
        if len(self.entries) != self.rows * self.cols:
            raise ConfigurationError(
                f"expected {self.rows * self.cols} entries for a {self.rows}x{self.cols} matrix, "
                f"got {len(self.entries)}"
            )
        object.__setattr__(self, "entries", tuple(float(v) for v in self.entries))
        if not all(math.isfinite(v) for v in self.entries):
            raise ConfigurationError("matrix entries must be finite")

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[float]]) -> "Matrix":
        rows = [list(r) for r in rows]
        if not rows or not rows[0]:
            raise ConfigurationError("matrix must have at least one row and one column")
        ncols = len(rows[0])
        if any(len(r) != ncols for r in rows):
            raise ConfigurationError("ragged matrix rows")
        return cls(len(rows), ncols, tuple(v for r in rows for v in r))

    @classmethod
    def identity(cls, n: int) -> "Matrix":
        return cls(n, n, tuple(1.0 if i == j else 0.0 for i in range(n) for j in range(n)))

    @classmethod
    def zeros(cls, rows: int, cols: int | None = None) -> "Matrix":
        cols = rows if cols is None else cols
        return cls(rows, cols, (0.0,) * (rows * cols))

    @classmethod
    def diag(cls, values: Iterable[float]) -> "Matrix":
        values = list(values)
        n = len(values)
        return cls(n, n, tuple(values[i] if i == j else 0.0 for i in range(n) for j in range(n)))

    @classmethod
    def column(cls, values: Iterable[float]) -> "Matrix":
        values = tuple(values)
        return cls(len(values), 1, values)

    def __getitem__(self, ij: tuple[int, int]) -> float:
        i, j = ij
        return self.entries[i * self.cols + j]

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    @property
    def is_square(self) -> bool:
        return self.rows == self.cols

    @property
    def T(self) -> "Matrix":
        return Matrix(self.cols, self.rows,
                      tuple(self[i, j] for j in range(self.cols) for i in range(self.rows)))

    def to_rows(self) -> list[list[float]]:
        return [list(self.entries[i * self.cols:(i + 1) * self.cols]) for i in range(self.rows)]

    def max_abs(self) -> float:
        return max(abs(v) for v in self.entries)

    def scale(self, factor: float) -> "Matrix":
        return Matrix(self.rows, self.cols, tuple(factor * v for v in self.entries))

    def _check_same_shape(self, other: "Matrix") -> None:
        if self.shape != other.shape:
            raise ConfigurationError(f"shape mismatch: {self.shape} vs {other.shape}")

    def __add__(self, other: "Matrix") -> "Matrix":
        self._check_same_shape(other)
        return Matrix(self.rows, self.cols, tuple(a + b for a, b in zip(self.entries, other.entries)))

    def __sub__(self, other: "Matrix") -> "Matrix":
        self._check_same_shape(other)
        return Matrix(self.rows, self.cols, tuple(a - b for a, b in zip(self.entries, other.entries)))

    def __matmul__(self, other: "Matrix") -> "Matrix":
        return mat_mul(self, other)

    def symmetrized(self) -> "Matrix":
        return (self + self.T).scale(0.5)


def mat_mul(a: Matrix, b: Matrix) -> Matrix:
    if a.cols != b.rows:
        raise ConfigurationError(f"cannot multiply {a.rows}x{a.cols} by {b.rows}x{b.cols}")
    out = []
    for i in range(a.rows):
        arow = a.entries[i * a.cols:(i + 1) * a.cols]
        for j in range(b.cols):
            out.append(math.fsum(arow[k] * b.entries[k * b.cols + j] for k in range(a.cols)))
    return Matrix(a.rows, b.cols, tuple(out))


def mat_inv(a: Matrix) -> Matrix:
    """Invert ``a`` by Gauss-Jordan elimination with partial pivoting.

    Raises SingularityError when a pivot falls below 1e-12 times the largest
    row norm of ``a``.
    """
    if not a.is_square:
        raise ConfigurationError(f"cannot invert a non-square {a.rows}x{a.cols} matrix")
    n = a.rows
    work = [row + [1.0 if i == j else 0.0 for j in range(n)] for i, row in enumerate(a.to_rows())]
    scale = max(sum(abs(v) for v in row[:n]) for row in work)
    threshold = SINGULAR_PIVOT_RTOL * scale

    for col in range(n):
        pivot_row = max(range(col, n), key=lambda r: abs(work[r][col]))
        pivot = work[pivot_row][col]
        if abs(pivot) <= threshold or scale == 0.0:
            raise SingularityError(f"matrix is singular to working precision (pivot {pivot:.3e} in column {col})")
        work[col], work[pivot_row] = work[pivot_row], work[col]
        inv_p = 1.0 / pivot
        work[col] = [v * inv_p for v in work[col]]
        for r in range(n):
            if r != col and work[r][col] != 0.0:
                f = work[r][col]
                work[r] = [v - f * p for v, p in zip(work[r], work[col])]

    return Matrix.from_rows([row[n:] for row in work])


def trace(a: Matrix) -> float:
    if not a.is_square:
        raise ConfigurationError(f"trace needs a square matrix, got {a.rows}x{a.cols}")
    return math.fsum(a[i, i] for i in range(a.rows))


def is_psd(a: Matrix, tol: float = 1e-9, strict: bool = False) -> bool:
    """Test positive semi-definiteness with a diagonally pivoted Cholesky sweep.

    With ``strict=True`` every pivot must exceed ``tol`` (positive definite).
    Asymmetry above ``1e-9 * (1 + max|a|)`` is a configuration error rather
    than a ``False``.
    """
    if not a.is_square:
        raise ConfigurationError(f"is_psd needs a square matrix, got {a.rows}x{a.cols}")
    asym = (a - a.T).max_abs()
    if asym > SYMMETRY_RTOL * (1.0 + a.max_abs()):
        raise ConfigurationError(f"matrix is not symmetric (max asymmetry {asym:.3e})")

    n = a.rows
    w = a.symmetrized().to_rows()
    remaining = list(range(n))
    while remaining:
        p = max(remaining, key=lambda i: w[i][i])
        d = w[p][p]
        if strict and d <= tol:
            return False
        if d <= tol:
            # Rest is numerically zero on the diagonal; PSD only if every
            # remaining entry is small and no diagonal is clearly negative.
            for i in remaining:
                if w[i][i] < -tol:
                    return False
                for j in remaining:
                    if abs(w[i][j]) > tol + math.sqrt(max(w[i][i], 0.0) * max(w[j][j], 0.0)):
                        return False
            return True
        remaining.remove(p)
        for i in remaining:
            for j in remaining:
                w[i][j] -= w[i][p] * w[p][j] / d
    return True


def numerical_rank(a: Matrix, rtol: float = RANK_RTOL) -> int:
    """Rank by Gaussian elimination with complete pivoting."""
    w = a.to_rows()
    m, n = a.rows, a.cols
    largest = a.max_abs()
    if largest == 0.0:
        return 0
    rank = 0
    rows_left, cols_left = list(range(m)), list(range(n))
    while rows_left and cols_left:
        r, c = max(((i, j) for i in rows_left for j in cols_left), key=lambda ij: abs(w[ij[0]][ij[1]]))
        pivot = w[r][c]
        if abs(pivot) <= rtol * largest:
            break
        rank += 1
        rows_left.remove(r)
        cols_left.remove(c)
        for i in rows_left:
            f = w[i][c] / pivot
            for j in cols_left:
                w[i][j] -= f * w[r][j]
    return rank


def observability_matrix(a: Matrix, c: Matrix) -> Matrix:
    if not a.is_square:
        raise ConfigurationError(f"A must be square, got {a.rows}x{a.cols}")
    if c.cols != a.rows:
        raise ConfigurationError(f"C has {c.cols} columns but A is {a.rows}x{a.rows}")
    blocks = []
    block = c
    for _ in range(a.rows):
        blocks.extend(block.to_rows())
        block = block @ a
    return Matrix.from_rows(blocks)


def observability_rank(a: Matrix, c: Matrix) -> int:
    return numerical_rank(observability_matrix(a, c))
