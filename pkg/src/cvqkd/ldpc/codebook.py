"""Plain-text code files and the directory-backed code library.

File layout, one code per file:

    NBLDPC v1
    <m> <n> <n_checks> <rate> <poly_hex> <seed_hex>
    <deg> <col>:<coeff_hex> ... <col>:<coeff_hex>     (one line per check)
    SHA256 <hex digest of every byte above>

The digest covers the exact bytes of all preceding lines, newlines
included, so any truncation or edit is caught at load time.  Rates are
written with four decimals; both parties must therefore agree on the
request grid, which the library keys as integer percent.
"""

from __future__ import annotations

import hashlib
import os
from pathlib import Path

import numpy as np

from ..errors import CodebookError, InfeasibleCodeError
from ..fieldmath import field_new
from .matrix import ParityCheckMatrix
from .peg import peg_construct

MAGIC = "NBLDPC v1"


def matrix_to_text(matrix: ParityCheckMatrix) -> str:
    lines = [MAGIC,
             f"{matrix.field.m} {matrix.n} {matrix.n_checks} "
             f"{matrix.design_rate:.4f} {matrix.field.poly:x} {matrix.seed_hex}"]
    for j in range(matrix.n_checks):
        lo, hi = matrix.check_ptr[j], matrix.check_ptr[j + 1]
        entries = " ".join(f"{c}:{k:x}" for c, k in
                           zip(matrix.edge_col[lo:hi], matrix.edge_coeff[lo:hi]))
        lines.append(f"{hi - lo} {entries}")
    body = "\n".join(lines) + "\n"
    digest = hashlib.sha256(body.encode()).hexdigest()
    return body + f"SHA256 {digest}\n"


def matrix_from_text(text: str) -> ParityCheckMatrix:
    try:
        body, tail = text.rsplit("SHA256 ", 1)
    except ValueError:
        raise CodebookError("missing checksum line") from None
    digest = tail.strip()
    if hashlib.sha256(body.encode()).hexdigest() != digest:
        raise CodebookError("checksum mismatch")
    lines = body.splitlines()
    if not lines or lines[0] != MAGIC:
        raise CodebookError("bad magic line")
    try:
        m_str, n_str, nc_str, rate_str, poly_hex, seed_hex = lines[1].split()
        m, n, n_checks = int(m_str), int(n_str), int(nc_str)
        rate = float(rate_str)
        poly = int(poly_hex, 16)
    except (IndexError, ValueError) as exc:
        raise CodebookError(f"bad header: {exc}") from None
    if len(lines) != 2 + n_checks:
        raise CodebookError(f"expected {n_checks} check lines, "
                            f"found {len(lines) - 2}")
    checks, cols, coeffs = [], [], []
    for j in range(n_checks):
        parts = lines[2 + j].split()
        try:
            deg = int(parts[0])
            if deg != len(parts) - 1:
                raise ValueError("degree does not match entry count")
            for item in parts[1:]:
                col_str, coeff_hex = item.split(":")
                checks.append(j)
                cols.append(int(col_str))
                coeffs.append(int(coeff_hex, 16))
        except (ValueError, IndexError) as exc:
            raise CodebookError(f"bad check line {j}: {exc}") from None
    try:
        field = field_new(m, poly)
        matrix = ParityCheckMatrix(field, n, n_checks, np.array(checks),
                                   np.array(cols), np.array(coeffs),
                                   design_rate=rate, seed_hex=seed_hex)
        matrix.validate_ldpc()
    except (ValueError, CodebookError) as exc:
        raise CodebookError(f"invalid code: {exc}") from None
    return matrix


def store_matrix(path, matrix: ParityCheckMatrix):
    Path(path).write_text(matrix_to_text(matrix))


def load_matrix(path) -> ParityCheckMatrix:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CodebookError(f"cannot read {path}: {exc}") from None
    return matrix_from_text(text)


def code_filename(order: int, rate: float, n: int) -> str:
    return f"gf{order:03d}_r{round(rate * 100):02d}_n{n}.nbldpc"


def _read_header(path: Path):
    with open(path) as fh:
        if fh.readline().rstrip("\n") != MAGIC:
            raise CodebookError(f"{path}: bad magic line")
        fields = fh.readline().split()
    try:
        m, n = int(fields[0]), int(fields[1])
        rate = float(fields[3])
    except (IndexError, ValueError):
        raise CodebookError(f"{path}: bad header") from None
    return 1 << m, rate, n


class Codebook:
    """Lazy (field order, rate) -> matrix lookup over a directory of files."""

    def __init__(self, directory, orders=None):
        self.directory = Path(directory)
        if not self.directory.is_dir():
            raise CodebookError(f"codebook directory {directory} not found")
        self._index = {}
        self._cache = {}
        allowed = None if orders is None else set(orders)
        for path in sorted(self.directory.glob("*.nbldpc")):
            order, rate, n = _read_header(path)
            if allowed is not None and order not in allowed:
                continue
            key = (order, round(rate * 100))
            if key in self._index:
                raise CodebookError(f"duplicate code for order {order} "
                                    f"rate {rate:.2f}")
            self._index[key] = path
        if not self._index:
            raise CodebookError(f"no usable code files in {directory}")

    def orders(self):
        return sorted({order for order, _ in self._index})

    def rates(self, order: int):
        return sorted(pct / 100 for o, pct in self._index if o == order)

    def block_length(self, order: int, rate: float) -> int:
        return _read_header(self._index[(order, round(rate * 100))])[2]

    def has(self, order: int, rate: float) -> bool:
        return (order, round(rate * 100)) in self._index

    def get(self, order: int, rate: float) -> ParityCheckMatrix:
        key = (order, round(rate * 100))
        if key not in self._index:
            raise CodebookError(f"no code for order {order} rate {rate:.2f}")
        if key not in self._cache:
            self._cache[key] = load_matrix(self._index[key])
        return self._cache[key]

    def fingerprint(self) -> bytes:
        """Digest of the library contents, for cross-party agreement."""
        h = hashlib.sha256()
        for key in sorted(self._index):
            h.update(f"{key[0]}/{key[1]}".encode())
            h.update(hashlib.sha256(self._index[key].read_bytes()).digest())
        return h.digest()


def build_codebook(directory, orders, rates, n: int, seed,
                   skip_existing: bool = True, progress=None):
    """Construct and store the (orders x rates) grid; returns (written,
    skipped-infeasible) lists."""
    directory = Path(directory)
    os.makedirs(directory, exist_ok=True)
    written, infeasible = [], []
    for order in orders:
        field = field_new(int(order).bit_length() - 1)
        if field.order != order:
            raise CodebookError(f"order {order} is not a power of two")
        for rate in rates:
            path = directory / code_filename(order, rate, n)
            if skip_existing and path.exists():
                continue
            try:
                matrix = peg_construct(n, rate, field, seed)
            except InfeasibleCodeError as exc:
                infeasible.append((order, rate, str(exc)))
                continue
            store_matrix(path, matrix)
            written.append(path)
            if progress is not None:
                progress(order, rate, path)
    return written, infeasible


def verify_codebook(directory):
    """Full load of every file; returns [(path, ok, message)]."""
    directory = Path(directory)
    report = []
    for path in sorted(directory.glob("*.nbldpc")):
        try:
            load_matrix(path)
            report.append((path, True, "ok"))
        except CodebookError as exc:
            report.append((path, False, str(exc)))
    return report
