"""Keyed pseudorandom values driving derandomized sampling and detection.

The construction is fixed for reproducibility and documented here in full.
Key bytes are stretched into 64-bit subkeys with BLAKE2b.  The value for a
(seed window, counter) pair is produced by a splitmix64-finalizer chain:

    digest(seed) = fin(fin(fin(seed_lo + GOLDEN) ^ seed_hi) ^ seed_len*GOLDEN)
    base(key)    = fin(digest ^ kA) + kB
    u64(i)       = fin(base + i*GOLDEN)
    u            = (u64 >> 11) * 2**-53          in [0, 1)

where fin is the splitmix64 finalizer and (kA, kB) are the first two
subkeys.  The seed digest is key-independent on purpose: detection scans
evaluate every substring of a text against many keys, and sharing the
digest across keys removes most of the per-candidate mixing work.  All key
separation happens in the two keyed stages.  The same chain has a scalar
path (token-by-token generation) and a vectorized path (detection scans),
which agree bit-for-bit.

This is a statistical mixing construction, not a vetted cryptographic PRF;
it is what makes desk-scale detection scans tractable, and the soundness
tests calibrate the detector's false-positive behaviour against it directly.
"""

from __future__ import annotations

import hashlib

import numpy as np

MASK64 = 0xFFFFFFFFFFFFFFFF
GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB

_U64 = np.uint64
_NP_GOLDEN = _U64(GOLDEN)
_NP_M1 = _U64(_M1)
_NP_M2 = _U64(_M2)

# 2**-53; (x >> 11) * U53_SCALE maps a uint64 into [0, 1).
U53_SCALE = 1.0 / (1 << 53)


def subkeys(key_bytes: bytes) -> tuple[int, int, int, int]:
    """Derive the 64-bit subkeys used by the mixing chain."""
    d = hashlib.blake2b(key_bytes, digest_size=32, person=b"markbench-prf").digest()
    return tuple(int.from_bytes(d[8 * i : 8 * i + 8], "little") for i in range(4))


def _fin(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def pack_bits(bits) -> tuple[int, int]:
    """Pack up to 128 bits (little-endian bit order) into two 64-bit words."""
    lo = 0
    hi = 0
    for j, b in enumerate(bits):
        if b:
            if j < 64:
                lo |= 1 << j
            elif j < 128:
                hi |= 1 << (j - 64)
            else:
                raise ValueError("seed windows longer than 128 tokens are unsupported")
    return lo, hi


def seed_digest(seed_lo: int, seed_hi: int, seed_len: int) -> int:
    """Key-independent compression of a seed window."""
    z = _fin((seed_lo + GOLDEN) & MASK64)
    z = _fin(z ^ seed_hi)
    return _fin(z ^ ((seed_len * GOLDEN) & MASK64))


def key_base(ks: tuple[int, ...], digest: int) -> int:
    return (_fin(digest ^ ks[0]) + ks[1]) & MASK64


def u_scalar(base: int, counter: int) -> float:
    """u value in [0,1) for one counter position (1-indexed)."""
    z = _fin((base + counter * GOLDEN) & MASK64)
    return (z >> 11) * U53_SCALE


def _fin_vec(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> _U64(30))) * _NP_M1
    z = (z ^ (z >> _U64(27))) * _NP_M2
    return z ^ (z >> _U64(31))


def fin_inplace(z: np.ndarray, tmp: np.ndarray) -> None:
    """Splitmix64 finalizer over z, reusing tmp as scratch (same shape)."""
    np.right_shift(z, _U64(30), out=tmp)
    np.bitwise_xor(z, tmp, out=z)
    np.multiply(z, _NP_M1, out=z)
    np.right_shift(z, _U64(27), out=tmp)
    np.bitwise_xor(z, tmp, out=z)
    np.multiply(z, _NP_M2, out=z)
    np.right_shift(z, _U64(31), out=tmp)
    np.bitwise_xor(z, tmp, out=z)


def seed_digest_vec(seed_lo: np.ndarray, seed_hi: np.ndarray, seed_len: int) -> np.ndarray:
    """Vectorized seed_digest over arrays of packed seed windows."""
    z = _fin_vec(seed_lo + _NP_GOLDEN)
    z = _fin_vec(z ^ seed_hi)
    return _fin_vec(z ^ _U64((seed_len * GOLDEN) & MASK64))


def key_base_vec(ks: tuple[int, ...], digests: np.ndarray) -> np.ndarray:
    return _fin_vec(digests ^ _U64(ks[0])) + _U64(ks[1])


def counter_terms(n: int, start: int = 1) -> np.ndarray:
    """counter * GOLDEN for counters start..start+n-1, as uint64."""
    idx = np.arange(start, start + n, dtype=np.uint64)
    return idx * _NP_GOLDEN


def u64_grid(base: np.ndarray, counters: np.ndarray) -> np.ndarray:
    """Raw 64-bit outputs, shape (len(base), len(counters))."""
    return _fin_vec(base[:, None] + counters[None, :])


def sliding_pack(bits: np.ndarray, width: int) -> tuple[np.ndarray, np.ndarray]:
    """Pack every length-`width` window of a 0/1 array into (lo, hi) words.

    Returns arrays of length len(bits) - width + 1.  Exact for width <= 128.
    """
    if width > 128:
        raise ValueError("seed windows longer than 128 tokens are unsupported")
    n = len(bits) - width + 1
    if n <= 0:
        return np.zeros(0, dtype=np.uint64), np.zeros(0, dtype=np.uint64)
    b = bits.astype(np.uint64)
    lo = np.zeros(n, dtype=np.uint64)
    hi = np.zeros(n, dtype=np.uint64)
    for j in range(min(width, 64)):
        lo += b[j : j + n] << _U64(j)
    for j in range(64, width):
        hi += b[j : j + n] << _U64(j - 64)
    return lo, hi
