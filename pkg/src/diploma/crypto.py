"""Hashing, Ed25519 signatures and key references.

SHA-256 and Ed25519 are the concrete primitives. Nothing outside this module
names them, so swapping either one is a local change.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import serialization
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)

from .encoding import canonical_encode
from .errors import InvalidSeed

DIGEST_SIZE = 32
SEED_SIZE = 32
ZERO_DIGEST = bytes(DIGEST_SIZE)

HASH_NAME = "sha256"
SIGNATURE_SCHEME = "ed25519"


def hash(message: bytes) -> bytes:  # noqa: A001 - protocol vocabulary
    return hashlib.sha256(message).digest()


@dataclass(frozen=True)
class KeyPair:
    """A signing key pair. Never encodable, so it cannot leak into messages."""

    public: bytes
    secret: bytes = field(repr=False)

    __canonical__ = False

    @property
    def ref(self) -> bytes:
        return key_ref(self.public)


def keygen(seed: bytes) -> KeyPair:
    """Derive a key pair deterministically from 32 bytes of entropy."""
    if not isinstance(seed, (bytes, bytearray)) or len(seed) != SEED_SIZE:
        raise InvalidSeed(f"seed must be {SEED_SIZE} bytes")
    sk = Ed25519PrivateKey.from_private_bytes(bytes(seed))
    pk = sk.public_key().public_bytes(
        encoding=serialization.Encoding.Raw,
        format=serialization.PublicFormat.Raw,
    )
    return KeyPair(public=pk, secret=bytes(seed))


def sign(secret: bytes, message: bytes) -> bytes:
    return Ed25519PrivateKey.from_private_bytes(secret).sign(message)


def verify(public: bytes, message: bytes, sig: bytes) -> bool:
    try:
        Ed25519PublicKey.from_public_bytes(public).verify(sig, message)
    except (InvalidSignature, ValueError, TypeError):
        return False
    return True


def key_ref(public: bytes) -> bytes:
    """Reference a public key by the hash of its canonical encoding."""
    return hash(canonical_encode(public))
