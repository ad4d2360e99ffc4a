"""Independent reference computations, written against hashlib only."""

from __future__ import annotations

import hashlib

from diploma.crypto import keygen
from diploma.model import make_submission


def sha(b: bytes) -> bytes:
    return hashlib.sha256(b).digest()


EMPTY = sha(b"\x00" + bytes(64))


def oracle_root(pairs: list[tuple[bytes, bytes]]) -> bytes:
    """Root over (sort_key, record_hash) pairs, sorted by sort_key."""
    level = [sha(b"\x00" + k + h) for k, h in sorted(pairs)]
    if not level:
        return EMPTY
    while len(level) > 1:
        nxt = []
        for i in range(0, len(level) - 1, 2):
            nxt.append(sha(b"\x01" + level[i] + level[i + 1]))
        if len(level) % 2:
            nxt.append(level[-1])
        level = nxt
    return level[0]


def scan_present(sort_keys, key: bytes) -> bool:
    return any(k == key for k in sort_keys)


def submissions(n: int, tag: str):
    """``n`` valid submissions with deterministic one-time keys."""
    out = []
    for i in range(n):
        k = keygen(sha(f"{tag}/{i}".encode()))
        out.append(make_submission(f"record {tag}/{i}".encode(), k))
    return out
