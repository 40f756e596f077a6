"""Domain-separated Merkle commitments.

Leaves and interior nodes hash under distinct prefixes (0x00 / 0x01) so a
leaf can never be reinterpreted as an interior node. Odd levels duplicate
their last node. Used for both the transaction root and the problem-subset
root of a block header.
"""

from __future__ import annotations

from typing import Sequence

from .hashing import sha256

_LEAF = b"\x00"
_NODE = b"\x01"


class EmptyLeaves(ValueError):
    """Merkle root of zero leaves is undefined; callers use a sentinel."""


def merkle_root(leaves: Sequence[bytes]) -> bytes:
    if not leaves:
        raise EmptyLeaves("cannot build a Merkle tree over zero leaves")
    level = [sha256(_LEAF + leaf) for leaf in leaves]
    while len(level) > 1:
        if len(level) % 2:
            level.append(level[-1])
        level = [
            sha256(_NODE + level[i] + level[i + 1])
            for i in range(0, len(level), 2)
        ]
    return level[0]
