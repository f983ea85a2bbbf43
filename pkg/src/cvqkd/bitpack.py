"""Bit-level packing helpers shared by the wire format and the hashing code.

Canonical order everywhere: bit i of a stream lives in byte i // 8 at
position i % 8, counting from the least significant bit.  Fixed-width
symbol streams are laid out symbol after symbol, least significant bit
first, with no per-symbol padding.
"""

import numpy as np


def pack_bits(bits) -> bytes:
    """Pack an array of 0/1 values into bytes (LSB-first)."""
    arr = np.asarray(bits, dtype=np.uint8)
    if arr.ndim != 1:
        raise ValueError("expected a flat bit array")
    return np.packbits(arr, bitorder="little").tobytes()


def unpack_bits(data: bytes, count: int) -> np.ndarray:
    """Inverse of pack_bits; returns exactly `count` bits."""
    if count < 0 or len(data) < (count + 7) // 8:
        raise ValueError("bit count does not fit the supplied bytes")
    arr = np.frombuffer(data, dtype=np.uint8)
    bits = np.unpackbits(arr, bitorder="little")
    return bits[:count].copy()


def pack_uints(values, width: int) -> bytes:
    """Pack unsigned integers of a fixed bit width into a dense stream."""
    if not 0 < width <= 32:
        raise ValueError("width out of range")
    arr = np.asarray(values, dtype=np.uint64)
    if arr.size and int(arr.max()) >> width:
        raise ValueError("value exceeds the stated width")
    bits = ((arr[:, None] >> np.arange(width, dtype=np.uint64)) & 1).astype(np.uint8)
    return pack_bits(bits.ravel())


def unpack_uints(data: bytes, width: int, count: int) -> np.ndarray:
    """Inverse of pack_uints; returns `count` values as uint32."""
    if not 0 < width <= 32:
        raise ValueError("width out of range")
    bits = unpack_bits(data, width * count).reshape(count, width).astype(np.uint64)
    weights = np.uint64(1) << np.arange(width, dtype=np.uint64)
    return (bits * weights).sum(axis=1).astype(np.uint32)
