"""Arithmetic in the binary extension fields GF(2^m), 1 <= m <= 8.

Elements are integers in [0, 2^m) interpreted as polynomials over GF(2)
in the standard basis.  Addition is XOR.  Multiplication runs through
exponential/logarithm tables built from a fixed primitive polynomial per
degree, using the doubled exp table so that exp[log a + log b] never
needs a modular reduction.

The per-degree polynomials are the lexicographically smallest primitive
ones, so a field is completely determined by m and two parties agree on
tables without negotiation.
"""

from __future__ import annotations

import numpy as np

# lexicographically smallest primitive polynomial per degree, as bit masks
PRIMITIVE_POLY = {
    1: 0b11,
    2: 0b111,
    3: 0b1011,
    4: 0b10011,
    5: 0b100101,
    6: 0b1000011,
    7: 0b10000011,
    8: 0b100011101,
}


def _poly_mul_reduce(a: int, b: int, poly: int, m: int) -> int:
    # schoolbook carry-less product, then reduce high terms with poly
    result = 0
    for i in range(m):
        if (b >> i) & 1:
            result ^= a << i
    for i in range(2 * m - 2, m - 1, -1):
        if (result >> i) & 1:
            result ^= poly << (i - m)
    return result


class FieldSpec:
    """Tables and scalar/vector operations for one GF(2^m).

    Parameters
    ----------
    m : extension degree, 1 through 8.
    poly : optional polynomial mask overriding the default.  Must be
        primitive of degree m; verified at construction.
    """

    def __init__(self, m: int, poly: int | None = None):
        if not isinstance(m, int) or not 1 <= m <= 8:
            raise ValueError(f"unsupported extension degree {m!r}")
        if poly is None:
            poly = PRIMITIVE_POLY[m]
        if poly.bit_length() - 1 != m:
            raise ValueError("polynomial degree does not match m")
        self.m = m
        self.order = 1 << m
        self.poly = poly

        q = self.order
        exp = np.zeros(2 * (q - 1) if q > 2 else 2, dtype=np.int64)
        log = np.full(q, -1, dtype=np.int64)
        e = 1
        for i in range(q - 1):
            exp[i] = e
            if log[e] != -1:
                raise ValueError(f"polynomial {poly:#x} is not primitive")
            log[e] = i
            e = _poly_mul_reduce(e, 2, poly, m) if m > 1 else (e & 1)
            if m == 1:
                e = 1
        if m > 1 and e != 1:
            raise ValueError(f"polynomial {poly:#x} is not primitive")
        # doubled table: exp[i + j] is valid for i, j < q - 1
        exp[q - 1:] = exp[:len(exp) - (q - 1)]
        self.exp_table = exp
        self.log_table = log
        self._mul_table = None
        self._inv_table = None

    def __repr__(self):
        return f"FieldSpec(m={self.m}, poly={self.poly:#x})"

    def _check(self, *elements):
        for a in elements:
            if not 0 <= a < self.order:
                raise ValueError(f"{a!r} is not an element of GF(2^{self.m})")

    def add(self, a: int, b: int) -> int:
        self._check(a, b)
        return a ^ b

    def mul(self, a: int, b: int) -> int:
        self._check(a, b)
        if a == 0 or b == 0:
            return 0
        return int(self.exp_table[self.log_table[a] + self.log_table[b]])

    def inv(self, a: int) -> int:
        self._check(a)
        if a == 0:
            raise ZeroDivisionError("zero has no multiplicative inverse")
        if self.order == 2:
            return 1
        return int(self.exp_table[(self.order - 1) - self.log_table[a]])

    @property
    def mul_table(self) -> np.ndarray:
        """Full q-by-q product table (uint8), built lazily for vector code."""
        if self._mul_table is None:
            q = self.order
            table = np.zeros((q, q), dtype=np.uint8)
            idx = self.log_table[1:, None] + self.log_table[None, 1:]
            table[1:, 1:] = self.exp_table[idx].astype(np.uint8)
            self._mul_table = table
        return self._mul_table

    @property
    def inv_table(self) -> np.ndarray:
        """Inverses of all nonzero elements; index 0 is unused (left 0)."""
        if self._inv_table is None:
            q = self.order
            table = np.zeros(q, dtype=np.uint8)
            for a in range(1, q):
                table[a] = self.inv(a)
            self._inv_table = table
        return self._inv_table

    def mul_array(self, a, b) -> np.ndarray:
        """Elementwise field product of two arrays of elements."""
        return self.mul_table[np.asarray(a, dtype=np.intp),
                              np.asarray(b, dtype=np.intp)]

    def pow(self, a: int, e: int) -> int:
        self._check(a)
        if e < 0:
            raise ValueError("negative exponents not supported")
        if a == 0:
            return 0 if e else 1
        return int(self.exp_table[(self.log_table[a] * e) % (self.order - 1)])


_FIELD_CACHE: dict[tuple[int, int], FieldSpec] = {}


def field_new(m: int, poly: int | None = None) -> FieldSpec:
    """Shared FieldSpec instance for GF(2^m) (tables are immutable)."""
    key = (m, poly if poly is not None else -1)
    if key not in _FIELD_CACHE:
        _FIELD_CACHE[key] = FieldSpec(m, poly)
    return _FIELD_CACHE[key]


def field_for_order(order: int) -> FieldSpec:
    m = order.bit_length() - 1
    if 1 << m != order:
        raise ValueError(f"field order {order} is not a power of two")
    return field_new(m)
