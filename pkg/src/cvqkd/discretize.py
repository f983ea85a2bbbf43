"""Mapping measured quadrature values onto a finite symbol alphabet.

The measurement range [-alpha, alpha) is cut into 2^d equal bins of
width delta = 2*alpha / 2^d.  Values outside the range saturate into the
two edge bins.  Each symbol further splits into d2 most significant bits
(reconciled through syndrome decoding) and d1 = d - d2 least significant
bits (published directly).

The sign convention for the anti-correlated quadrature is applied here,
on Bob's side only: slots flagged in `negate` have their value negated
before binning, so that downstream code always sees positively
correlated symbol pairs.  Nothing else in the stack flips signs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class BinningSpec:
    """Discretisation parameters: range cutoff alpha, total bits d, LSB bits d1."""

    alpha: float
    d: int
    d1: int

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if not 1 <= self.d <= 16:
            raise ValueError("d must lie in [1, 16] for 16-bit symbol transport")
        if not 0 <= self.d1 < self.d:
            raise ValueError("d1 must lie in [0, d)")

    @property
    def d2(self) -> int:
        return self.d - self.d1

    @property
    def bins(self) -> int:
        return 1 << self.d

    @property
    def delta(self) -> float:
        return 2.0 * self.alpha / self.bins

    def with_split(self, d1: int) -> "BinningSpec":
        return BinningSpec(self.alpha, self.d, d1)


def bin_values(values, spec: BinningSpec, negate=False) -> np.ndarray:
    """Quantise values to symbols in [0, 2^d), saturating at the edges.

    negate may be a scalar or a per-slot boolean mask; flagged values are
    negated before binning (Bob's anti-correlated quadrature).
    """
    v = np.asarray(values, dtype=np.float64)
    if np.ndim(negate) == 0:
        if negate:
            v = -v
    else:
        mask = np.asarray(negate, dtype=bool)
        if mask.shape != v.shape:
            raise ValueError("negate mask must match the value array")
        v = np.where(mask, -v, v)
    raw = np.floor((v + spec.alpha) / spec.delta)
    clipped = np.clip(raw, 0, spec.bins - 1)
    return clipped.astype(np.uint16)


def split_symbols(symbols, spec: BinningSpec):
    """(msb, lsb) decomposition; msb = symbol >> d1, lsb = symbol mod 2^d1."""
    sym = np.asarray(symbols, dtype=np.uint16)
    msb = (sym >> spec.d1).astype(np.uint16)
    lsb = (sym & ((1 << spec.d1) - 1)).astype(np.uint16)
    return msb, lsb


def join_symbols(msb, lsb, spec: BinningSpec) -> np.ndarray:
    msb = np.asarray(msb, dtype=np.uint32)
    lsb = np.asarray(lsb, dtype=np.uint32)
    if msb.size and int(msb.max()) >> spec.d2:
        raise ValueError("msb value out of range for the split")
    if lsb.size and spec.d1 < 16 and int(lsb.max()) >> spec.d1:
        raise ValueError("lsb value out of range for the split")
    return ((msb << spec.d1) | lsb).astype(np.uint16)


def symbols_to_bytes(symbols) -> bytes:
    """16-bit little-endian wire encoding of a symbol array."""
    return np.asarray(symbols, dtype=np.uint16).astype("<u2").tobytes()


def symbols_from_bytes(data: bytes, count: int) -> np.ndarray:
    if len(data) != 2 * count:
        raise ValueError("symbol payload length mismatch")
    return np.frombuffer(data, dtype="<u2").astype(np.uint16)
