"""Binary Merkle trees over sorted transaction leaves.

Leaves hash as ``H(0x00 || sort_key || record_hash)`` and internal nodes as
``H(0x01 || left || right)``. Levels are paired left to right; an unpaired
last node is promoted unchanged. The empty tree has a fixed sentinel root.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from . import crypto

LEAF_PREFIX = b"\x00"
NODE_PREFIX = b"\x01"
AGGREGATE_PREFIX = b"\x02"

EMPTY_ROOT = crypto.hash(LEAF_PREFIX + bytes(32) + bytes(32))


class Side(str, enum.Enum):
    """Which side of the running hash a sibling sits on."""

    LEFT = "L"
    RIGHT = "R"


@dataclass(frozen=True)
class Sibling:
    digest: bytes
    side: Side


@dataclass(frozen=True)
class MerklePath:
    leaf_index: int
    siblings: tuple[Sibling, ...]


def leaf_hash(sort_key: bytes, record_hash: bytes) -> bytes:
    return crypto.hash(LEAF_PREFIX + sort_key + record_hash)


def node_hash(left: bytes, right: bytes) -> bytes:
    return crypto.hash(NODE_PREFIX + left + right)


def build_levels(leaves: list[bytes]) -> list[list[bytes]]:
    """All tree levels, leaf hashes first and the root level last."""
    levels = [list(leaves)]
    while len(levels[-1]) > 1:
        cur = levels[-1]
        nxt = [node_hash(cur[i], cur[i + 1]) for i in range(0, len(cur) - 1, 2)]
        if len(cur) % 2:
            nxt.append(cur[-1])
        levels.append(nxt)
    return levels


def merkle_root(leaves: list[bytes]) -> bytes:
    if not leaves:
        return EMPTY_ROOT
    return build_levels(leaves)[-1][0]


def expected_sides(index: int, count: int) -> list[Side]:
    """Sibling sides a path for leaf ``index`` of a ``count``-leaf tree must have."""
    sides = []
    pos, width = index, count
    while width > 1:
        if pos % 2:
            sides.append(Side.LEFT)
        elif pos + 1 < width:
            sides.append(Side.RIGHT)
        pos //= 2
        width = (width + 1) // 2
    return sides


def make_path(levels: list[list[bytes]], index: int) -> MerklePath:
    siblings = []
    pos = index
    for level in levels[:-1]:
        if pos % 2:
            siblings.append(Sibling(level[pos - 1], Side.LEFT))
        elif pos + 1 < len(level):
            siblings.append(Sibling(level[pos + 1], Side.RIGHT))
        pos //= 2
    return MerklePath(leaf_index=index, siblings=tuple(siblings))


def fold(leaf: bytes, path: MerklePath) -> bytes:
    acc = leaf
    for sib in path.siblings:
        if sib.side is Side.LEFT:
            acc = node_hash(sib.digest, acc)
        else:
            acc = node_hash(acc, sib.digest)
    return acc


def verify_path(leaf: bytes, path: MerklePath, root: bytes, count: int) -> bool:
    """Check ``path`` places ``leaf`` at ``path.leaf_index`` of a ``count``-leaf tree."""
    if not 0 <= path.leaf_index < count:
        return False
    if [s.side for s in path.siblings] != expected_sides(path.leaf_index, count):
        return False
    if any(len(s.digest) != crypto.DIGEST_SIZE for s in path.siblings):
        return False
    return fold(leaf, path) == root
