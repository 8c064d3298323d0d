"""Keyed prefix-preserving permutation of the IPv4 index space.

Output bit ``31 - k`` is input bit ``31 - k`` XOR ``F(key, top k input bits)``
where ``F`` is a keyed pseudorandom bit per prefix-tree node.  Two addresses
that share a k-bit prefix therefore share a k-bit prefix after mapping, and
the map is a bijection because each bit flip depends only on bits above it.

``F`` is a splitmix64-style mixer keyed with four 64-bit words derived from
the 32-byte key by BLAKE2b.  It is fast and deterministic but is not a
cryptographic PRF; ``scheme_id`` names it so files record which scheme made
them.
"""

from __future__ import annotations

import hashlib
import os
import secrets
from dataclasses import dataclass

import numpy as np

from .errors import UsageError

__all__ = ["AnonymizationKey", "anonymize", "deanonymize", "SCHEME_ID", "KEY_ENV_VAR"]

SCHEME_ID = "prefix-mix64-v1"
KEY_ENV_VAR = "TELECORR_KEY_FILE"
KEY_BYTES = 32

_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


@dataclass(frozen=True)
class AnonymizationKey:
    key_bytes: bytes
    scheme_id: str = SCHEME_ID

    def __post_init__(self):
        if len(self.key_bytes) != KEY_BYTES:
            raise UsageError(f"anonymization key must be {KEY_BYTES} bytes, got {len(self.key_bytes)}")
        if not any(self.key_bytes):
            raise UsageError("anonymization key must not be all zero")
        if self.scheme_id != SCHEME_ID:
            raise UsageError(f"unsupported anonymization scheme {self.scheme_id!r}")

    @classmethod
    def generate(cls) -> "AnonymizationKey":
        return cls(secrets.token_bytes(KEY_BYTES))

    @classmethod
    def from_file(cls, path: str | os.PathLike) -> "AnonymizationKey":
        """Read a key file holding either 32 raw bytes or 64 hex characters."""
        with open(path, "rb") as fh:
            data = fh.read()
        text = data.strip()
        if len(text) == 2 * KEY_BYTES:
            try:
                return cls(bytes.fromhex(text.decode("ascii")))
            except (UnicodeDecodeError, ValueError):
                pass
        return cls(data)

    def to_hex(self) -> str:
        return self.key_bytes.hex()

    def _words(self) -> tuple[np.uint64, ...]:
        digest = hashlib.blake2b(self.key_bytes, digest_size=32, person=b"telecorr-anon").digest()
        return tuple(np.uint64(int.from_bytes(digest[i:i + 8], "little")) for i in range(0, 32, 8))


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def _flip_bits(prefixes: np.ndarray, level: int, words) -> np.ndarray:
    k0, k1, k2, k3 = words
    node = (prefixes << np.uint64(6)) | np.uint64(level)
    h = _mix(node + k0)
    h = _mix(h ^ k1)
    h = _mix(h + k2) ^ k3
    return h >> np.uint64(63)


def _as_index_array(index) -> tuple[np.ndarray, bool]:
    arr = np.asarray(index)
    scalar = arr.ndim == 0
    arr = np.atleast_1d(arr)
    if arr.size and (arr.min() < 0 or arr.max() >= 1 << 32):
        raise UsageError("index outside the 32-bit address space")
    return arr.astype(np.uint64), scalar


def anonymize(index, key: AnonymizationKey):
    """Map one index or an array of indices through the keyed permutation."""
    x, scalar = _as_index_array(index)
    words = key._words()
    out = x.copy()
    with np.errstate(over="ignore"):
        for level in range(32):
            prefixes = x >> np.uint64(32 - level)
            out ^= _flip_bits(prefixes, level, words) << np.uint64(31 - level)
    out = out.astype(np.uint32)
    return int(out[0]) if scalar else out


def deanonymize(index, key: AnonymizationKey):
    """Inverse of :func:`anonymize` under the same key."""
    y, scalar = _as_index_array(index)
    words = key._words()
    x = np.zeros_like(y)
    with np.errstate(over="ignore"):
        for level in range(32):
            prefixes = x >> np.uint64(32 - level)
            bit = np.uint64(31 - level)
            x |= (((y >> bit) & np.uint64(1)) ^ _flip_bits(prefixes, level, words)) << bit
    x = x.astype(np.uint32)
    return int(x[0]) if scalar else x
