"""Seeded randomness, authentication, confirmation and privacy amplification.

Hardware entropy is replaced by a named deterministic generator so that
whole protocol runs can be reproduced from recorded seeds:

* ``RandomnessService`` expands a seed with SHAKE-256 in counter mode.
  Sub-streams are domain separated by a label, so independent protocol
  steps (basis choice, estimation set, code coefficients, ...) never
  share output even when they draw interleaved.
* ``mac_tag`` is a one-time Wegman-Carter tag: a polynomial-evaluation
  hash over the 2^128-element binary field, masked with a one-time pad.
  Every message consumes a fresh 32-byte key; keys are never reused.
* ``confirm`` detects residual disagreement after reconciliation with a
  short polynomial hash whose length is derived from the tolerated
  false-accept probability.
* ``privacy_amplify`` applies a seeded binary Toeplitz matrix.
"""

from __future__ import annotations

import hashlib
import hmac
import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

from .errors import AuthenticationError
from .bitpack import unpack_bits

_BLOCK_BYTES = 1 << 20


def _seed_bytes(seed) -> bytes:
    if isinstance(seed, bytes):
        return seed
    if isinstance(seed, int):
        if seed < 0:
            raise ValueError("seed must be non-negative")
        return seed.to_bytes(max(1, (seed.bit_length() + 7) // 8), "big")
    raise TypeError("seed must be int or bytes")


class RandomStream:
    """Deterministic byte stream for one (seed, label) pair.

    Output block j is SHAKE-256 over the length-prefixed seed, label and
    an 8-byte block counter, squeezed to 1 MiB.  The stream keeps a read
    position, so successive calls continue where the previous one ended.
    """

    def __init__(self, seed: bytes, label: str):
        self._seed = seed
        self._label = label.encode()
        self._block_index = 0
        self._buffer = b""
        self._offset = 0

    def _refill(self):
        h = hashlib.shake_256()
        h.update(len(self._seed).to_bytes(4, "big"))
        h.update(self._seed)
        h.update(len(self._label).to_bytes(4, "big"))
        h.update(self._label)
        h.update(self._block_index.to_bytes(8, "big"))
        self._buffer = h.digest(_BLOCK_BYTES)
        self._offset = 0
        self._block_index += 1

    def take(self, nbytes: int) -> bytes:
        if nbytes < 0:
            raise ValueError("negative byte count")
        parts = []
        remaining = nbytes
        while remaining:
            if self._offset >= len(self._buffer):
                self._refill()
            chunk = self._buffer[self._offset:self._offset + remaining]
            parts.append(chunk)
            self._offset += len(chunk)
            remaining -= len(chunk)
        return b"".join(parts)

    def u64(self, n: int) -> np.ndarray:
        return np.frombuffer(self.take(8 * n), dtype="<u8")

    def bits(self, n: int) -> np.ndarray:
        """n bits as a 0/1 uint8 array."""
        return unpack_bits(self.take((n + 7) // 8), n)

    def uniform(self, n: int) -> np.ndarray:
        """n doubles in [0, 1) with 53-bit resolution."""
        return (self.u64(n) >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)

    def normal(self, n: int) -> np.ndarray:
        """n standard normal variates via the Box-Muller transform."""
        pairs = (n + 1) // 2
        # u1 in (0, 1] keeps the log finite
        u1 = (self.u64(pairs).astype(np.float64) + 1.0) * (2.0 ** -64)
        u2 = self.uniform(pairs)
        radius = np.sqrt(-2.0 * np.log(u1))
        angle = 2.0 * np.pi * u2
        out = np.empty(2 * pairs)
        out[0::2] = radius * np.cos(angle)
        out[1::2] = radius * np.sin(angle)
        return out[:n]

    def integers(self, bound: int, n: int) -> np.ndarray:
        """n independent uniforms over {0, ..., bound-1} (rejection sampled)."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        limit = (1 << 64) - ((1 << 64) % bound)
        out = np.empty(n, dtype=np.uint64)
        filled = 0
        while filled < n:
            draw = self.u64(n - filled + 16)
            keep = draw[draw < np.uint64(limit)][: n - filled]
            out[filled:filled + keep.size] = keep
            filled += keep.size
        return (out % np.uint64(bound)).astype(np.int64)


class RandomnessService:
    """Labelled deterministic randomness for one protocol party.

    stream(label) hands out one stream per label and caches it, so the
    same label always refers to the same advancing position.
    """

    algorithm = "shake256-ctr"

    def __init__(self, seed):
        self._seed = _seed_bytes(seed)
        self._streams: dict[str, RandomStream] = {}

    def stream(self, label: str) -> RandomStream:
        if label not in self._streams:
            self._streams[label] = RandomStream(self._seed, label)
        return self._streams[label]


# ---------------------------------------------------------------------------
# carry-less polynomial arithmetic over GF(2)[x], packed into ints

def clmul(a: int, b: int) -> int:
    """Carry-less product of two GF(2) polynomials."""
    result = 0
    while b:
        low = b & -b
        result ^= a << (low.bit_length() - 1)
        b ^= low
    return result


def pmod(a: int, f: int) -> int:
    """Remainder of polynomial a modulo f."""
    df = f.bit_length() - 1
    while a.bit_length() - 1 >= df:
        a ^= f << (a.bit_length() - 1 - df)
    return a


def _pgcd(a: int, b: int) -> int:
    while b:
        a, b = b, pmod(a, b)
    return a


def _x_pow_pow2(k: int, f: int) -> int:
    # x^(2^k) mod f by repeated squaring
    r = pmod(1 << 1, f)
    for _ in range(k):
        r = pmod(clmul(r, r), f)
    return r


def is_irreducible(f: int) -> bool:
    """Rabin irreducibility test for a GF(2) polynomial given as a bit mask."""
    t = f.bit_length() - 1
    if t <= 0:
        return False
    if t == 1:
        return True
    if _x_pow_pow2(t, f) != pmod(1 << 1, f):
        return False
    primes = set()
    m = t
    p = 2
    while p * p <= m:
        while m % p == 0:
            primes.add(p)
            m //= p
        p += 1
    if m > 1:
        primes.add(m)
    for p in primes:
        g = _pgcd(_x_pow_pow2(t // p, f) ^ (1 << 1), f)
        if g != 1:
            return False
    return True


_IRREDUCIBLE_CACHE: dict[int, int] = {}


def smallest_irreducible(degree: int) -> int:
    """Lexicographically smallest irreducible GF(2) polynomial of a degree."""
    if degree < 1:
        raise ValueError("degree must be at least 1")
    if degree == 1:
        return 0b10  # x itself
    if degree not in _IRREDUCIBLE_CACHE:
        head = 1 << degree
        low = 1  # constant term required for degree >= 2, otherwise x divides f
        while not is_irreducible(head | low):
            low += 2
            if low >= head:
                raise RuntimeError("no irreducible polynomial found")
        _IRREDUCIBLE_CACHE[degree] = head | low
    return _IRREDUCIBLE_CACHE[degree]


def gf2n_mul(a: int, b: int, f: int) -> int:
    """Product in GF(2^n) defined by the irreducible polynomial f."""
    return pmod(clmul(a, b), f)


# ---------------------------------------------------------------------------
# Wegman-Carter message authentication

# x^128 + x^7 + x^2 + x + 1
GF128_POLY = (1 << 128) | (1 << 7) | (1 << 2) | (1 << 1) | 1
MAC_KEY_BYTES = 32
MAC_TAG_BYTES = 16

_MASK128 = (1 << 128) - 1


def _gf128_mul(a: int, b: int) -> int:
    r = clmul(a, b)
    # fold the high half down twice; low part of the modulus is x^7+x^2+x+1
    while r >> 128:
        high = r >> 128
        r = (r & _MASK128) ^ high ^ (high << 1) ^ (high << 2) ^ (high << 7)
    return r


def _poly_hash_128(message: bytes, point: int) -> int:
    acc = 0
    view = memoryview(message)
    for start in range(0, len(message), 16):
        chunk = int.from_bytes(view[start:start + 16], "big")
        acc = _gf128_mul(acc ^ chunk, point)
    # length block makes the padding injective
    acc = _gf128_mul(acc ^ (len(message) * 8), point)
    return acc


def mac_tag(key: bytes, message: bytes) -> bytes:
    """128-bit one-time authentication tag.

    key supplies 16 bytes for the hash evaluation point and 16 bytes of
    one-time pad.  A key must authenticate exactly one message.
    """
    if len(key) != MAC_KEY_BYTES:
        raise ValueError("mac key must be 32 bytes")
    point = int.from_bytes(key[:16], "big")
    pad = int.from_bytes(key[16:], "big")
    return (_poly_hash_128(message, point) ^ pad).to_bytes(16, "big")


def mac_verify(key: bytes, message: bytes, tag: bytes) -> bool:
    """Constant-time comparison of the expected and received tag."""
    return hmac.compare_digest(mac_tag(key, message), tag)


class MacKeySchedule:
    """One-time MAC keys for a single direction of a session.

    Keys are drawn from a labelled stream of the shared secret.  The
    budget caps how many messages the pre-shared material covers; going
    past it raises instead of silently reusing a key.
    """

    def __init__(self, shared_secret: bytes, direction: str, budget: int = 4096):
        service = RandomnessService(shared_secret)
        self._stream = service.stream(f"mac/{direction}")
        self._budget = budget
        self._used = 0

    @property
    def used(self) -> int:
        return self._used

    @property
    def remaining(self) -> int:
        return self._budget - self._used

    def next_key(self) -> bytes:
        if self._used >= self._budget:
            raise AuthenticationError("authentication key material exhausted")
        self._used += 1
        return self._stream.take(MAC_KEY_BYTES)


# ---------------------------------------------------------------------------
# confirmation hashing

@dataclass(frozen=True)
class ConfirmOutcome:
    match: bool
    tag_bits: int
    published_bits: int


def confirm_tag_bits(epsilon_c: float, chunks: int) -> int:
    """Tag length needed for false-accept probability epsilon_c.

    The hash is a degree-`chunks` polynomial evaluated at a random field
    point, so the collision probability for unequal inputs is at most
    chunks / 2^t.
    """
    if not 0 < epsilon_c < 1:
        raise ValueError("epsilon_c must lie in (0, 1)")
    return math.ceil(math.log2(1.0 / epsilon_c) + math.log2(max(chunks, 1)))


def _hash_chunks(data: bytes, tag_bits: int) -> list[int]:
    step = (tag_bits + 7) // 8
    return [int.from_bytes(data[i:i + step], "little") & ((1 << tag_bits) - 1)
            for i in range(0, len(data), step)]


def confirm_hash(data: bytes, point: int, tag_bits: int) -> int:
    """Polynomial-evaluation hash of `data` to a tag_bits-bit value.

    Inputs of equal length collide with probability at most
    (number of chunks) / 2^tag_bits over a uniform point.
    """
    f = smallest_irreducible(tag_bits)
    acc = 0
    for chunk in _hash_chunks(data, tag_bits):
        acc = gf2n_mul(acc ^ chunk, point, f)
    return acc


def chunk_count(nbytes: int, tag_bits: int) -> int:
    step = (tag_bits + 7) // 8
    return max(1, (nbytes + step - 1) // step)


def confirm_width(nbytes: int, epsilon_c: float) -> int:
    """Tag width for hashing an nbytes input at false-accept epsilon_c.

    The tag width feeds back into the chunk count; growing t only helps,
    so iterate to the least fixed point from below.
    """
    t = confirm_tag_bits(epsilon_c, 1)
    for _ in range(8):
        t_next = confirm_tag_bits(epsilon_c, chunk_count(nbytes, t))
        if t_next <= t:
            break
        t = t_next
    return t


def confirm_point(stream: RandomStream, tag_bits: int) -> int:
    return int.from_bytes(stream.take((tag_bits + 7) // 8),
                          "little") & ((1 << tag_bits) - 1)


def confirm(block_a: bytes, block_b: bytes, epsilon_c: float,
            stream: RandomStream) -> ConfirmOutcome:
    """Compare two equal-length blocks through a short random hash.

    Equal blocks always match; unequal blocks pass with probability at
    most epsilon_c.  The published bit count covers one transmitted tag;
    the hash point is public randomness and is not charged.
    """
    if len(block_a) != len(block_b):
        raise ValueError("confirmation blocks must have equal length")
    t = confirm_width(len(block_a), epsilon_c)
    point = confirm_point(stream, t)
    match = confirm_hash(block_a, point, t) == confirm_hash(block_b, point, t)
    return ConfirmOutcome(match=match, tag_bits=t, published_bits=t)


# ---------------------------------------------------------------------------
# privacy amplification

def toeplitz_seed_bits(input_len: int, output_len: int) -> int:
    return input_len + output_len - 1


def _toeplitz_window(seed: np.ndarray, x: np.ndarray, ell: int,
                     step: int = 1 << 22) -> np.ndarray:
    """Entries n-1 .. n-1+ell-1 of convolve(seed, x) without the full product.

    The input is split into segments so peak memory scales with the output
    window instead of the whole convolution.  Partial sums stay exact in
    doubles because every entry is a 0/1 dot product bounded by len(x).
    """
    n = x.size
    out = np.zeros(ell, dtype=np.float64)
    for start in range(0, n, step):
        seg = x[start:start + step]
        m = seg.size
        base = n - start - m
        part = fftconvolve(seg, seed[base:base + m + ell - 1])
        out += part[m - 1:m - 1 + ell]
    return out


def privacy_amplify(key_bits: np.ndarray, ell: int, seed_bits: np.ndarray) -> np.ndarray:
    """Compress key_bits to ell bits with a seeded binary Toeplitz matrix.

    Row i of the matrix is seed[n-1+i-j] for column j, n = len(key_bits).
    The product is evaluated as one real convolution (exact in doubles
    for any practical key size) and reduced mod 2.
    """
    x = np.asarray(key_bits, dtype=np.float64).ravel()
    n = x.size
    if ell <= 0:
        raise ValueError("output length must be positive")
    if ell > n:
        raise ValueError("output longer than the input key")
    seed = np.asarray(seed_bits, dtype=np.float64).ravel()
    if seed.size != toeplitz_seed_bits(n, ell):
        raise ValueError("seed must supply input + output - 1 bits")
    if n * ell <= 1 << 18:
        # small cases: straight cross-correlation
        window = np.convolve(seed, x)[n - 1:n - 1 + ell]
    elif 2 * n + ell <= 1 << 25:
        window = fftconvolve(seed, x)[n - 1:n - 1 + ell]
    else:
        window = _toeplitz_window(seed, x, ell)
    rounded = np.rint(window)
    if np.max(np.abs(window - rounded)) > 0.25:
        raise ArithmeticError("convolution lost integer precision")
    return (rounded.astype(np.int64) & 1).astype(np.uint8)
