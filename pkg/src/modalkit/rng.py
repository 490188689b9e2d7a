"""Pinned hash and PRNG primitives.

Placeholder media and the embedding stub must produce identical bytes on
every platform, so the hash (FNV-1a 64) and the generator (splitmix64)
are written out here instead of leaning on hash() or random.
"""

from __future__ import annotations

_MASK = (1 << 64) - 1
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_SM_GAMMA = 0x9E3779B97F4A7C15


def fnv1a64(data: bytes) -> int:
    """FNV-1a over raw bytes, 64-bit variant."""
    h = _FNV_OFFSET
    for b in data:
        h ^= b
        h = (h * _FNV_PRIME) & _MASK
    return h


def content_hash(kind: str, prompt: str) -> int:
    """Hash of a generation request: UTF-8 of kind, a NUL, UTF-8 of prompt."""
    return fnv1a64(kind.encode("utf-8") + b"\x00" + prompt.encode("utf-8"))


def _scramble(z: int) -> int:
    # splitmix64 output function, doubles as a general 64-bit finalizer
    z &= _MASK
    z ^= z >> 30
    z = (z * 0xBF58476D1CE4E5B9) & _MASK
    z ^= z >> 27
    z = (z * 0x94D049BB133111EB) & _MASK
    z ^= z >> 31
    return z


def mix64(*parts: int) -> int:
    """Fold any number of 64-bit values into one seed."""
    acc = _SM_GAMMA
    for p in parts:
        acc = _scramble((acc + (p & _MASK)) & _MASK)
    return acc


class SplitMix64:
    """Tiny deterministic stream; state advances by the golden gamma."""

    def __init__(self, seed: int) -> None:
        self._state = seed & _MASK

    def next_u64(self) -> int:
        self._state = (self._state + _SM_GAMMA) & _MASK
        return _scramble(self._state)

    def bytes(self, n: int) -> bytes:
        out = bytearray()
        while len(out) < n:
            out += self.next_u64().to_bytes(8, "little")
        return bytes(out[:n])

    def unit_floats(self, n: int) -> list[float]:
        """n floats in [-1, 1), 2^-63 resolution."""
        return [(self.next_u64() / (1 << 63)) - 1.0 for _ in range(n)]
