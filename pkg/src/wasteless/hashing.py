"""Bit-exact hash primitives shared by every layer of the protocol.

Digests are raw 32-byte SHA-256 outputs. Bit positions index the digest
MSB-first over its big-endian bytes: bit 0 is the most significant bit of
byte 0, bit 255 the least significant bit of byte 31. Difficulty compares
treat the digest as a 256-bit big-endian unsigned integer. Every consumer
(problem checks, commitments, the compiled kernel) goes through these
conventions; changing them is a wire-format break.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

DIGEST_SIZE = 32
DIGEST_BITS = 256

#: Largest representable difficulty threshold (every digest qualifies).
MAX_THRESHOLD = (1 << DIGEST_BITS) - 1


def sha256(data: bytes) -> bytes:
    """One SHA-256 application, raw 32-byte digest."""
    return hashlib.sha256(data).digest()


def iterate_hash(data: bytes, reps: int) -> bytes:
    """Apply SHA-256 ``reps`` times in composition: sha256(...sha256(data)).

    ``reps`` must be >= 1; iterating zero times would leak the stage input
    downstream unhashed.
    """
    if reps < 1:
        raise ValueError(f"reps must be >= 1, got {reps}")
    digest = hashlib.sha256(data).digest()
    for _ in range(reps - 1):
        digest = hashlib.sha256(digest).digest()
    return digest


@dataclass(frozen=True, slots=True)
class BitWindow:
    """Half-open bit range [from_bit, to_bit) into a digest, MSB-first."""

    from_bit: int
    to_bit: int

    def __post_init__(self) -> None:
        if not (0 <= self.from_bit <= self.to_bit <= DIGEST_BITS):
            raise ValueError(
                f"window [{self.from_bit}, {self.to_bit}) out of range"
            )

    @property
    def width(self) -> int:
        return self.to_bit - self.from_bit

    def encode(self) -> bytes:
        """Canonical wire form: two 2-byte big-endian offsets."""
        return self.from_bit.to_bytes(2, "big") + self.to_bit.to_bytes(2, "big")


def trim_bits(digest: bytes, window: BitWindow) -> str:
    """Extract the window's bits as a '0'/'1' string, MSB-first."""
    if len(digest) != DIGEST_SIZE:
        raise ValueError(f"expected {DIGEST_SIZE}-byte digest, got {len(digest)}")
    if window.width == 0:
        return ""
    value = int.from_bytes(digest, "big")
    chunk = (value >> (DIGEST_BITS - window.to_bit)) & ((1 << window.width) - 1)
    return format(chunk, f"0{window.width}b")


def pack_bits(bits: str) -> bytes:
    """Pack a '0'/'1' string MSB-first, zero-padding the final byte."""
    if not bits:
        return b""
    if any(c not in "01" for c in bits):
        raise ValueError("bit string must contain only '0' and '1'")
    padded = bits + "0" * (-len(bits) % 8)
    return int(padded, 2).to_bytes(len(padded) // 8, "big")


def unpack_bits(data: bytes, width: int) -> str:
    """Inverse of pack_bits for a known bit width."""
    if width > len(data) * 8:
        raise ValueError("width exceeds available bits")
    if width == 0:
        return ""
    return format(int.from_bytes(data, "big"), f"0{len(data) * 8}b")[:width]


def digest_int(digest: bytes) -> int:
    """Digest as a 256-bit big-endian unsigned integer."""
    return int.from_bytes(digest, "big")


def meets_difficulty(digest: bytes, threshold: int) -> bool:
    """True iff digest <= threshold under the big-endian integer order."""
    return int.from_bytes(digest, "big") <= threshold
