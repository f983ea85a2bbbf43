"""Sparse parity check matrices over GF(2^m) and syndrome computation."""

from __future__ import annotations

import numpy as np

from ..errors import CodebookError
from ..fieldmath import FieldSpec


class ParityCheckMatrix:
    """Sparse check matrix stored as a flat edge list sorted by (check, col).

    The canonical edge order (ascending check index, then ascending column
    within a check) is what the serializer and the decoder both use, so a
    matrix rebuilt from its own text form carries identical arrays.
    """

    def __init__(self, field: FieldSpec, n: int, n_checks: int,
                 edge_check: np.ndarray, edge_col: np.ndarray,
                 edge_coeff: np.ndarray, design_rate: float | None = None,
                 seed_hex: str = "00"):
        if n <= 0 or n_checks <= 0:
            raise ValueError("matrix dimensions must be positive")
        edge_check = np.asarray(edge_check, dtype=np.int64)
        edge_col = np.asarray(edge_col, dtype=np.int64)
        edge_coeff = np.asarray(edge_coeff, dtype=np.uint8)
        if not (edge_check.shape == edge_col.shape == edge_coeff.shape):
            raise ValueError("edge arrays must have equal length")
        if edge_check.size == 0:
            raise ValueError("matrix has no edges")
        if edge_check.min() < 0 or edge_check.max() >= n_checks:
            raise ValueError("check index out of range")
        if edge_col.min() < 0 or edge_col.max() >= n:
            raise ValueError("column index out of range")
        if np.any(edge_coeff == 0) or edge_coeff.max() >= field.order:
            raise ValueError("coefficients must be nonzero field elements")
        order = np.lexsort((edge_col, edge_check))
        edge_check = edge_check[order]
        edge_col = edge_col[order]
        edge_coeff = edge_coeff[order]
        keys = edge_check * n + edge_col
        if np.any(np.diff(keys) == 0):
            raise ValueError("duplicate (check, column) entry")

        self.field = field
        self.n = int(n)
        self.n_checks = int(n_checks)
        self.edge_check = edge_check
        self.edge_col = edge_col
        self.edge_coeff = edge_coeff
        self.design_rate = float(design_rate) if design_rate is not None \
            else (n - n_checks) / n
        self.seed_hex = seed_hex
        self.check_ptr = np.zeros(n_checks + 1, dtype=np.int64)
        np.add.at(self.check_ptr, edge_check + 1, 1)
        np.cumsum(self.check_ptr, out=self.check_ptr)

    @property
    def n_edges(self) -> int:
        return self.edge_check.size

    @property
    def rate(self) -> float:
        return (self.n - self.n_checks) / self.n

    @classmethod
    def from_rows(cls, field: FieldSpec, n: int, rows, **kw) -> "ParityCheckMatrix":
        """Build from a list of per-check [(col, coeff), ...] entries."""
        checks, cols, coeffs = [], [], []
        for j, row in enumerate(rows):
            for col, coeff in row:
                checks.append(j)
                cols.append(col)
                coeffs.append(coeff)
        return cls(field, n, len(rows), np.array(checks), np.array(cols),
                   np.array(coeffs), **kw)

    def row(self, j: int):
        """Entries of check j as [(col, coeff), ...] in column order."""
        lo, hi = self.check_ptr[j], self.check_ptr[j + 1]
        return list(zip(self.edge_col[lo:hi].tolist(),
                        self.edge_coeff[lo:hi].tolist()))

    def check_degrees(self) -> np.ndarray:
        return np.diff(self.check_ptr)

    def column_weights(self) -> np.ndarray:
        weights = np.zeros(self.n, dtype=np.int64)
        np.add.at(weights, self.edge_col, 1)
        return weights

    def validate_ldpc(self):
        """Enforce the code-construction invariants.

        Column weight exactly 2 everywhere and check degrees as uniform as
        possible (spread at most 1).  Free-form matrices for syndrome tests
        skip this; anything that enters a codebook must pass.
        """
        weights = self.column_weights()
        if not np.all(weights == 2):
            raise CodebookError("column weight must be exactly 2")
        degs = self.check_degrees()
        if degs.max() - degs.min() > 1:
            raise CodebookError("check degrees spread by more than 1")

    def syndrome(self, symbols) -> np.ndarray:
        """s_j = sum over row j of coeff * symbol, in the field."""
        x = np.asarray(symbols)
        if x.shape != (self.n,):
            raise ValueError(f"word length {x.shape} does not match n={self.n}")
        if x.size and int(x.max()) >= self.field.order:
            raise ValueError("symbol out of field range")
        terms = self.field.mul_table[self.edge_coeff, x[self.edge_col].astype(np.uint8)]
        s = np.zeros(self.n_checks, dtype=np.uint8)
        np.bitwise_xor.at(s, self.edge_check, terms)
        return s
