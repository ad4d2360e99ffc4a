"""Canonical byte encoding used for every hash preimage, signature and file.

Grammar: a JSON text with object keys sorted by code point, no insignificant
whitespace, binary values as lowercase hexadecimal strings, integers in
decimal, enumerations by value, and absent (``None``) optional fields omitted.
Floats are rejected. Decoding is strict: the input must be exactly the
canonical encoding of the value it decodes to.
"""

from __future__ import annotations

import dataclasses
import enum
import json
import types
import typing
from functools import lru_cache
from typing import Any, TypeVar, Union

from .errors import EncodingError

T = TypeVar("T")

_HEX = frozenset("0123456789abcdef")


def to_plain(value: Any) -> Any:
    """Lower a protocol value to JSON-compatible builtins."""
    if value is None:
        raise EncodingError("None is only allowed as an absent optional field")
    if isinstance(value, bool):
        return value
    if isinstance(value, enum.Enum):
        return to_plain(value.value)
    if isinstance(value, int):
        return value
    if isinstance(value, str):
        return value
    if isinstance(value, (bytes, bytearray)):
        return bytes(value).hex()
    if dataclasses.is_dataclass(value) and not isinstance(value, type):
        if getattr(value, "__canonical__", True) is False:
            raise EncodingError(f"{type(value).__name__} is not encodable")
        out = {}
        for f in dataclasses.fields(value):
            v = getattr(value, f.name)
            if v is not None:
                out[f.name] = to_plain(v)
        return out
    if isinstance(value, (list, tuple)):
        return [to_plain(v) for v in value]
    if isinstance(value, dict):
        out = {}
        for k, v in value.items():
            if isinstance(k, (bytes, bytearray)):
                k = bytes(k).hex()
            if not isinstance(k, str):
                raise EncodingError(f"mapping key {k!r} is not text")
            if v is not None:
                out[k] = to_plain(v)
        return out
    raise EncodingError(f"cannot encode {type(value).__name__}")


def dumps_plain(plain: Any) -> bytes:
    try:
        text = json.dumps(
            plain, sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False
        )
        return text.encode("utf-8")
    except (TypeError, ValueError, UnicodeEncodeError) as exc:
        raise EncodingError(str(exc)) from exc


def canonical_encode(value: Any) -> bytes:
    return dumps_plain(to_plain(value))


@lru_cache(maxsize=None)
def _hints(cls: type) -> dict[str, Any]:
    return typing.get_type_hints(cls)


def _is_optional(tp: Any) -> tuple[bool, Any]:
    origin = typing.get_origin(tp)
    if origin in (Union, types.UnionType):
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        if len(args) != len(typing.get_args(tp)):
            inner = args[0] if len(args) == 1 else Union[tuple(args)]
            return True, inner
    return False, tp


def _has_default(f: dataclasses.Field) -> bool:
    return f.default is not dataclasses.MISSING or f.default_factory is not dataclasses.MISSING


def from_plain(tp: Any, obj: Any) -> Any:
    """Rebuild a value of type ``tp`` from JSON builtins."""
    optional, tp = _is_optional(tp)
    if obj is None:
        raise EncodingError("unexpected null")
    if tp is Any:
        return obj
    if tp is bytes:
        if not isinstance(obj, str) or len(obj) % 2 or not set(obj) <= _HEX:
            raise EncodingError(f"expected lowercase hex, got {obj!r:.40}")
        return bytes.fromhex(obj)
    if tp is bool:
        if not isinstance(obj, bool):
            raise EncodingError("expected boolean")
        return obj
    if tp is int:
        if isinstance(obj, bool) or not isinstance(obj, int):
            raise EncodingError("expected integer")
        return obj
    if tp is str:
        if not isinstance(obj, str):
            raise EncodingError("expected text")
        return obj
    if isinstance(tp, type) and issubclass(tp, enum.Enum):
        try:
            return tp(obj)
        except ValueError as exc:
            raise EncodingError(str(exc)) from exc
    if isinstance(tp, type) and dataclasses.is_dataclass(tp):
        if not isinstance(obj, dict):
            raise EncodingError(f"expected object for {tp.__name__}")
        hints = _hints(tp)
        known = {f.name for f in dataclasses.fields(tp) if f.init}
        extra = set(obj) - known
        if extra:
            raise EncodingError(f"unknown fields for {tp.__name__}: {sorted(extra)}")
        kwargs = {}
        for f in dataclasses.fields(tp):
            if not f.init:
                continue
            if f.name in obj:
                kwargs[f.name] = from_plain(hints[f.name], obj[f.name])
            elif not _is_optional(hints[f.name])[0] and not _has_default(f):
                raise EncodingError(f"{tp.__name__}.{f.name} is missing")
        try:
            return tp(**kwargs)
        except (TypeError, ValueError) as exc:
            raise EncodingError(f"invalid {tp.__name__}: {exc}") from exc
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin in (list, tuple):
        if not isinstance(obj, list):
            raise EncodingError("expected array")
        if origin is tuple and not (len(args) == 2 and args[1] is Ellipsis):
            if len(obj) != len(args):
                raise EncodingError("tuple arity mismatch")
            return tuple(from_plain(a, o) for a, o in zip(args, obj))
        items = [from_plain(args[0] if args else Any, o) for o in obj]
        return tuple(items) if origin is tuple else items
    if origin is dict:
        if not isinstance(obj, dict):
            raise EncodingError("expected object")
        kt, vt = args
        return {from_plain(kt, k): from_plain(vt, v) for k, v in obj.items()}
    raise EncodingError(f"unsupported type {tp!r}")


def canonical_decode(data: bytes, tp: type[T], *, strict: bool = True) -> T:
    """Decode canonical bytes into ``tp``.

    With ``strict`` (the default) the bytes must re-encode identically, which
    makes decoding the exact inverse of :func:`canonical_encode`.
    """
    try:
        obj = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, ValueError) as exc:
        raise EncodingError(f"not canonical JSON: {exc}") from exc
    value = from_plain(tp, obj)
    if strict and canonical_encode(value) != data:
        raise EncodingError("input is not in canonical form")
    return value
