"""Typed payload codecs for the two-party protocol.

Frame layout on the wire (handled by the channel layer):

    4 bytes big-endian frame length | 1 byte type | payload | 16 byte tag

The length counts everything after itself.  All payload integers are
little-endian; symbol arrays travel as 16-bit values, index arrays as
32-bit values, bit streams in the canonical LSB-first packing.  Every
decoder validates the exact payload length and raises TransportError on
any mismatch, so a framing bug can never be misread as protocol data.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from ..bitpack import pack_bits, pack_uints, unpack_bits, unpack_uints
from ..errors import TransportError

PROTOCOL_VERSION = 1

MSG_NEGOTIATE = 0x01
MSG_BASES = 0x02
MSG_PE_INDICES = 0x03
MSG_PE_SYMBOLS = 0x04
MSG_RECON_PARAMS = 0x05
MSG_LSB_REVEAL = 0x06
MSG_SYNDROME = 0x07
MSG_CONFIRM_SEED = 0x08
MSG_CONFIRM_TAG = 0x09
MSG_PA_SEED = 0x0A
MSG_KEYLEN_REPORT = 0x0B
MSG_ABORT = 0x0F

_NAMES = {
    MSG_NEGOTIATE: "negotiate", MSG_BASES: "bases",
    MSG_PE_INDICES: "pe-indices", MSG_PE_SYMBOLS: "pe-symbols",
    MSG_RECON_PARAMS: "recon-params", MSG_LSB_REVEAL: "lsb-reveal",
    MSG_SYNDROME: "syndrome", MSG_CONFIRM_SEED: "confirm-seed",
    MSG_CONFIRM_TAG: "confirm-tag", MSG_PA_SEED: "pa-seed",
    MSG_KEYLEN_REPORT: "keylen-report", MSG_ABORT: "abort",
}


def message_name(msg_type: int) -> str:
    return _NAMES.get(msg_type, f"unknown-0x{msg_type:02x}")


def _need(condition: bool, what: str):
    if not condition:
        raise TransportError(f"malformed payload: {what}")


# -- negotiate ---------------------------------------------------------------

def encode_negotiate(role: str, config_digest: bytes,
                     codebook_fingerprint: bytes) -> bytes:
    _need(role in ("A", "B"), "role")
    _need(len(config_digest) == 32, "config digest length")
    _need(len(codebook_fingerprint) == 32, "codebook fingerprint length")
    return (bytes([PROTOCOL_VERSION]) + role.encode() + config_digest
            + codebook_fingerprint)


def decode_negotiate(payload: bytes):
    _need(len(payload) == 1 + 1 + 32 + 32, "negotiate length")
    version = payload[0]
    role = payload[1:2].decode(errors="replace")
    return version, role, payload[2:34], payload[34:66]


# -- basis announcement ------------------------------------------------------

def encode_bases(bases) -> bytes:
    """Exactly ceil(slots / 8) bytes; the slot count is fixed by config."""
    arr = np.asarray(bases, dtype=np.uint8)
    _need(arr.ndim == 1 and arr.size > 0, "basis array")
    return pack_bits(arr)


def decode_bases(payload: bytes, slots: int) -> np.ndarray:
    _need(len(payload) == (slots + 7) // 8, "bases length")
    return unpack_bits(payload, slots)


# -- index and symbol arrays -------------------------------------------------

def encode_indices(indices) -> bytes:
    arr = np.asarray(indices, dtype=np.uint32)
    return struct.pack("<I", arr.size) + arr.astype("<u4").tobytes()


def decode_indices(payload: bytes) -> np.ndarray:
    _need(len(payload) >= 4, "index header")
    (count,) = struct.unpack_from("<I", payload)
    _need(len(payload) == 4 + 4 * count, "index payload length")
    return np.frombuffer(payload, dtype="<u4", count=count, offset=4).astype(np.int64)


def encode_symbols(symbols) -> bytes:
    arr = np.asarray(symbols, dtype=np.uint16)
    return struct.pack("<I", arr.size) + arr.astype("<u2").tobytes()


def decode_symbols(payload: bytes) -> np.ndarray:
    _need(len(payload) >= 4, "symbol header")
    (count,) = struct.unpack_from("<I", payload)
    _need(len(payload) == 4 + 2 * count, "symbol payload length")
    return np.frombuffer(payload, dtype="<u2", count=count, offset=4).astype(np.uint16)


# -- structured dictionaries -------------------------------------------------

def encode_json(data: dict) -> bytes:
    return json.dumps(data, sort_keys=True, separators=(",", ":")).encode()


def decode_json(payload: bytes) -> dict:
    try:
        data = json.loads(payload.decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise TransportError(f"malformed payload: json ({exc})") from None
    _need(isinstance(data, dict), "json object expected")
    return data


# -- reconciliation streams --------------------------------------------------

def encode_lsb(lsb, width: int) -> bytes:
    arr = np.asarray(lsb, dtype=np.uint16)
    return struct.pack("<IB", arr.size, width) + pack_uints(arr, width)


def decode_lsb(payload: bytes) -> np.ndarray:
    _need(len(payload) >= 5, "lsb header")
    count, width = struct.unpack_from("<IB", payload)
    _need(1 <= width <= 16, "lsb width")
    _need(len(payload) == 5 + (count * width + 7) // 8, "lsb length")
    return unpack_uints(payload[5:], width, count).astype(np.uint16)


def encode_syndrome(block_index: int, symbols) -> bytes:
    arr = np.asarray(symbols, dtype=np.uint16)
    return struct.pack("<II", block_index, arr.size) + arr.astype("<u2").tobytes()


def decode_syndrome(payload: bytes):
    _need(len(payload) >= 8, "syndrome header")
    block_index, count = struct.unpack_from("<II", payload)
    _need(len(payload) == 8 + 2 * count, "syndrome length")
    values = np.frombuffer(payload, dtype="<u2", count=count, offset=8)
    return block_index, values.astype(np.uint16)


# -- confirmation and amplification ------------------------------------------

def encode_confirm_seed(tag_bits: int, point: int) -> bytes:
    nbytes = (tag_bits + 7) // 8
    _need(0 <= point < (1 << tag_bits), "confirm point range")
    return struct.pack("<I", tag_bits) + point.to_bytes(nbytes, "little")


def decode_confirm_seed(payload: bytes):
    _need(len(payload) >= 4, "confirm seed header")
    (tag_bits,) = struct.unpack_from("<I", payload)
    _need(1 <= tag_bits <= 512, "confirm tag width")
    _need(len(payload) == 4 + (tag_bits + 7) // 8, "confirm seed length")
    point = int.from_bytes(payload[4:], "little")
    _need(point < (1 << tag_bits), "confirm point range")
    return tag_bits, point


def encode_confirm_tag(tag_bits: int, tag: int) -> bytes:
    nbytes = (tag_bits + 7) // 8
    _need(0 <= tag < (1 << tag_bits), "confirm tag range")
    return struct.pack("<I", tag_bits) + tag.to_bytes(nbytes, "little")


decode_confirm_tag = decode_confirm_seed


def encode_pa_seed(seed_bits) -> bytes:
    arr = np.asarray(seed_bits, dtype=np.uint8)
    return struct.pack("<Q", arr.size) + pack_bits(arr)


def decode_pa_seed(payload: bytes) -> np.ndarray:
    _need(len(payload) >= 8, "pa seed header")
    (count,) = struct.unpack_from("<Q", payload)
    _need(len(payload) == 8 + (count + 7) // 8, "pa seed length")
    return unpack_bits(payload[8:], count)


def encode_abort(reason: str) -> bytes:
    return reason.encode()


def decode_abort(payload: bytes) -> str:
    return payload.decode(errors="replace")
