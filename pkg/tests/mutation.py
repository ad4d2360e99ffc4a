"""Single-bit, type-preserving mutations of protocol values.

``leaves(value)`` lists every mutable scalar inside a dataclass tree as a
path; ``mutate(value, path, rng)`` returns a copy with one bit changed at
that path (enums move to another member, booleans flip).
"""

from __future__ import annotations

import dataclasses
import enum
import random
from typing import Any

Path = tuple


def leaves(value: Any, prefix: Path = ()) -> list[Path]:
    if dataclasses.is_dataclass(value) and not isinstance(value, type):
        out = []
        for f in dataclasses.fields(value):
            out.extend(leaves(getattr(value, f.name), prefix + (f.name,)))
        return out
    if isinstance(value, (list, tuple)):
        out = []
        for i, v in enumerate(value):
            out.extend(leaves(v, prefix + (i,)))
        return out
    if value is None or (isinstance(value, (str, bytes)) and not value):
        return []
    return [prefix]


def _flip(value: Any, rng: random.Random) -> Any:
    if isinstance(value, bool):
        return not value
    if isinstance(value, enum.Enum):
        return rng.choice([m for m in type(value) if m is not value])
    if isinstance(value, int):
        return value ^ (1 << rng.randrange(16))
    if isinstance(value, bytes):
        i = rng.randrange(len(value) * 8)
        b = bytearray(value)
        b[i // 8] ^= 1 << (i % 8)
        return bytes(b)
    if isinstance(value, str):
        i = rng.randrange(len(value))
        c = chr(ord(value[i]) ^ 1)
        return value[:i] + c + value[i + 1:]
    raise TypeError(f"cannot mutate {type(value).__name__}")


def mutate(value: Any, path: Path, rng: random.Random) -> Any:
    if not path:
        return _flip(value, rng)
    head, rest = path[0], path[1:]
    if isinstance(head, int):
        items = list(value)
        items[head] = mutate(items[head], rest, rng)
        return tuple(items) if isinstance(value, tuple) else items
    return dataclasses.replace(value, **{head: mutate(getattr(value, head), rest, rng)})


def flip_bit(data: bytes, rng: random.Random) -> bytes:
    i = rng.randrange(len(data) * 8)
    b = bytearray(data)
    b[i // 8] ^= 1 << (i % 8)
    return bytes(b)
