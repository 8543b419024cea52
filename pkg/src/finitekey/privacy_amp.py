"""Modified Toeplitz hashing over GF(2).

A hash from ``n_in`` to ``m_out`` bits is the matrix ``M' = (I | T)``: the
first ``m_out`` input bits pass through the identity and the remaining
``w = n_in - m_out`` bits are multiplied by an ``m_out x w`` Toeplitz block.
``T`` has ``n_in - 1`` free bits, stored as ``seed`` with

    T[i, j] = seed[w - 1 - j + i].

So ``seed[:w]`` read backwards is the first row and ``seed[w-1:]`` is the
first column. With that layout ``T x`` is a slice of the linear convolution
``seed * x``, which the FFT path exploits.

Bit strings are ``uint8`` arrays of zeros and ones. Packed byte forms use
LSB-first order (bit ``i`` is bit ``i % 8`` of byte ``i // 8``).
"""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass

import numpy as np

from .mathcore import DomainError

__all__ = [
    "HashSpec",
    "build_hash",
    "apply_hash",
    "apply_hash_fft",
    "apply_hash_naive",
    "apply_hash_batch",
    "verification_tag",
    "pack_bits",
    "unpack_bits",
    "random_bits",
    "philox_generator",
    "PRNG_ALGORITHM",
]

PRNG_ALGORITHM = "philox4x64-10"
_MAGIC = b"MTPZ"
_VERSION = 1
_HASH_STREAM = 0x48415348  # "HASH"


def philox_generator(seed, stream=0):
    """Counter-based generator keyed by ``(seed, stream)``.

    Distinct ``stream`` values give independent sequences, so trial ``i`` of
    a simulation can be reproduced without replaying trials ``0..i-1``.
    """
    seed = int(seed) & 0xFFFFFFFFFFFFFFFF
    stream = int(stream) & 0xFFFFFFFFFFFFFFFF
    return np.random.Generator(np.random.Philox(key=np.array([seed, stream], dtype=np.uint64)))


def random_bits(gen, count):
    """``count`` bits taken LSB-first from successive 64-bit generator words."""
    words = gen.bit_generator.random_raw(-(-count // 64)).astype("<u8")
    return np.unpackbits(words.view(np.uint8), bitorder="little")[:count].copy()


def pack_bits(bits):
    """Pack a 0/1 array into bytes, LSB-first."""
    return np.packbits(np.asarray(bits, dtype=np.uint8), bitorder="little").tobytes()


def unpack_bits(data, count):
    """Inverse of :func:`pack_bits` for the first ``count`` bits."""
    arr = np.frombuffer(bytes(data), dtype=np.uint8)
    if arr.size * 8 < count:
        raise DomainError("not enough bytes for %d bits" % count)
    return np.unpackbits(arr, bitorder="little")[:count].copy()


def _as_bits(x, name="key"):
    arr = np.asarray(x)
    if arr.ndim != 1:
        raise DomainError("%s must be one-dimensional" % name)
    if arr.size and (arr.min() < 0 or arr.max() > 1):
        raise DomainError("%s must contain only 0 and 1" % name)
    return arr.astype(np.uint8, copy=False)


@dataclass(frozen=True)
class HashSpec:
    """One member of the modified Toeplitz family.

    Attributes
    ----------
    n_in, m_out : int
        Input and output lengths, ``1 <= m_out <= n_in``.
    seed : bytes
        The ``n_in - 1`` Toeplitz bits, packed LSB-first.
    provenance : tuple
        ``(algorithm, seed, stream)`` when drawn from the PRNG, else ``()``.
    """

    n_in: int
    m_out: int
    seed: bytes
    provenance: tuple = ()

    def __post_init__(self):
        if not 1 <= self.m_out <= self.n_in:
            raise DomainError("need 1 <= m_out <= n_in")
        if len(self.seed) != -(-(self.n_in - 1) // 8):
            raise DomainError("seed must hold exactly n_in - 1 bits")

    @classmethod
    def from_bits(cls, n_in, m_out, bits):
        """Build a spec from an explicit array of ``n_in - 1`` seed bits."""
        bits = _as_bits(bits, "seed")
        if bits.size != n_in - 1:
            raise DomainError("seed must have n_in - 1 bits")
        return cls(int(n_in), int(m_out), pack_bits(bits))

    @property
    def seed_bits(self):
        return unpack_bits(self.seed, self.n_in - 1)

    def toeplitz_block(self):
        """Dense ``m_out x (n_in - m_out)`` block ``T`` (small sizes only)."""
        w = self.n_in - self.m_out
        t = self.seed_bits
        i = np.arange(self.m_out)[:, None]
        j = np.arange(w)[None, :]
        return t[w - 1 - j + i]

    def matrix(self):
        """Dense ``(I | T)``; intended for tests on tiny instances."""
        return np.hstack([np.eye(self.m_out, dtype=np.uint8), self.toeplitz_block()])

    def to_bytes(self):
        """Serialize as ``MTPZ``, version byte, ``n_in`` and ``m_out`` (u64 LE), seed."""
        return _MAGIC + bytes([_VERSION]) + struct.pack("<QQ", self.n_in, self.m_out) + self.seed

    @classmethod
    def from_bytes(cls, data):
        data = bytes(data)
        if data[:4] != _MAGIC:
            raise DomainError("bad magic")
        if data[4] != _VERSION:
            raise DomainError("unsupported version %d" % data[4])
        n_in, m_out = struct.unpack("<QQ", data[5:21])
        return cls(n_in, m_out, data[21:])

    def digest(self):
        """Short SHA-256 fingerprint of the serialized spec, for logs."""
        return hashlib.sha256(self.to_bytes()).hexdigest()[:16]


def build_hash(n_in, m_out, seed, stream=0):
    """Draw a hash from the family using the counter-based PRNG.

    The ``i``-th seed bit is bit ``i % 64`` of the ``i // 64``-th 64-bit word
    produced by Philox keyed with ``(seed, HASH_STREAM ^ stream)``.
    """
    if not 1 <= m_out <= n_in:
        raise DomainError("need 1 <= m_out <= n_in")
    gen = philox_generator(seed, _HASH_STREAM ^ int(stream))
    bits = random_bits(gen, n_in - 1)
    return HashSpec(int(n_in), int(m_out), pack_bits(bits),
                    provenance=(PRNG_ALGORITHM, int(seed), int(stream)))


def apply_hash_naive(spec, key):
    """Reference ``O(n m)`` evaluation, XOR-ing one shifted seed slice per set bit."""
    key = _as_bits(key)
    if key.size != spec.n_in:
        raise DomainError("key length must equal n_in")
    m, w = spec.m_out, spec.n_in - spec.m_out
    t = spec.seed_bits
    out = key[:m].copy()
    for j in np.flatnonzero(key[m:]):
        # column j of T is seed[w-1-j : w-1-j+m]
        out ^= t[w - 1 - j:w - 1 - j + m]
    return out


def _next_pow2(x):
    return 1 << max(0, math.ceil(math.log2(max(x, 1))))


def apply_hash_fft(spec, key):
    """``O(n log n)`` evaluation via an exact integer convolution.

    The seed and the ``w`` tail bits of the key are convolved circularly
    with a real FFT of length the next power of two at least ``n_in - 1``.
    Wrap-around only lands on indices below ``w - 1``, outside the window
    that is read. Every convolution entry is an integer no larger than
    ``n_in``; the rounding error is checked to stay below 1/4 before taking
    parities.
    """
    key = _as_bits(key)
    if key.size != spec.n_in:
        raise DomainError("key length must equal n_in")
    m, w = spec.m_out, spec.n_in - spec.m_out
    out = key[:m].copy()
    if w == 0:
        return out
    t = spec.seed_bits.astype(np.float64)
    x = key[m:].astype(np.float64)
    size = _next_pow2(spec.n_in - 1)
    conv = np.fft.irfft(np.fft.rfft(t, size) * np.fft.rfft(x, size), size)
    window = conv[w - 1:w - 1 + m]
    rounded = np.rint(window)
    if window.size and np.max(np.abs(window - rounded)) >= 0.25:
        raise ArithmeticError("FFT rounding error too large for exact parity")
    out ^= (rounded.astype(np.int64) & 1).astype(np.uint8)
    return out


def apply_hash(spec, key):
    """Hash ``key`` with ``spec``; picks the naive path when it is cheaper."""
    w = spec.n_in - spec.m_out
    if spec.m_out * w <= 1 << 16:
        return apply_hash_naive(spec, key)
    return apply_hash_fft(spec, key)


def apply_hash_batch(seed_bits, keys, m_out):
    """Hash many keys, each with its own seed, in one vectorized pass.

    Parameters
    ----------
    seed_bits : ndarray, shape (B, n_in - 1)
    keys : ndarray, shape (B, n_in)
    m_out : int

    Intended for small ``m_out`` (tags, Monte Carlo collision studies).
    """
    seed_bits = np.asarray(seed_bits, dtype=np.uint8)
    keys = np.asarray(keys, dtype=np.uint8)
    B, n_in = keys.shape
    if seed_bits.shape != (B, n_in - 1):
        raise DomainError("seed_bits must have shape (B, n_in - 1)")
    if not 1 <= m_out <= n_in:
        raise DomainError("need 1 <= m_out <= n_in")
    w = n_in - m_out
    out = keys[:, :m_out].copy()
    tail = keys[:, m_out:][:, ::-1]
    for i in range(m_out):
        # row i of T reversed is seed[i : i + w]
        row = seed_bits[:, i:i + w]
        out[:, i] ^= (np.count_nonzero(row & tail, axis=1) & 1).astype(np.uint8)
    return out


def verification_tag(key, spec):
    """Universal-hash tag of ``key``; ``spec.m_out`` is the tag length ``r``.

    For two different keys the tags collide with probability at most
    ``2^{-r}`` over the random choice of ``spec``.
    """
    key = _as_bits(key)
    if key.size != spec.n_in:
        raise DomainError("key length must equal n_in")
    return apply_hash(spec, key)
