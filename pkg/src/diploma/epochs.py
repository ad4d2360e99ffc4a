"""Sealed epochs: the signed, hash-chained comprehensions of transactions.

These are the values a provider publishes and every other node replicates,
plus the pure checks over them (header chaining, membership, absence).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

from . import crypto, merkle
from .encoding import canonical_encode
from .merkle import MerklePath


@dataclass(frozen=True)
class TransactionRecord:
    """One registry leaf: key reference plus the opaque record hash.

    Aggregate leaves carry neither public key nor signature.
    """

    sort_key: bytes
    record_hash: bytes
    public_key: Optional[bytes] = None
    signature: Optional[bytes] = None

    @property
    def is_aggregate(self) -> bool:
        return self.public_key is None

    def leaf(self) -> bytes:
        return merkle.leaf_hash(self.sort_key, self.record_hash)

    def well_formed(self) -> bool:
        if len(self.sort_key) != 32 or len(self.record_hash) != 32:
            return False
        if self.public_key is None:
            return self.signature is None
        if self.signature is None or crypto.key_ref(self.public_key) != self.sort_key:
            return False
        return crypto.verify(self.public_key, registration_message(self.record_hash), self.signature)


def registration_message(record_hash: bytes) -> bytes:
    """Bytes a one-time key signs to register a certificate or update."""
    return canonical_encode({"kind": "registration", "record_hash": record_hash})


@dataclass(frozen=True)
class TetheringPoint:
    provider_id: str
    epoch_index: int
    chain_hash: bytes


@dataclass(frozen=True)
class EpochHeader:
    provider_id: str
    index: int
    prev_chain_hash: bytes
    merkle_root: bytes
    leaf_count: int
    chain_hash: bytes
    provider_signature: bytes

    def body(self) -> dict:
        return {
            "provider_id": self.provider_id,
            "index": self.index,
            "prev_chain_hash": self.prev_chain_hash,
            "merkle_root": self.merkle_root,
            "leaf_count": self.leaf_count,
            "chain_hash": self.chain_hash,
        }

    def signing_bytes(self) -> bytes:
        return canonical_encode(self.body())

    def recomputed_chain_hash(self) -> bytes:
        return chain_hash(
            self.provider_id, self.index, self.prev_chain_hash, self.merkle_root, self.leaf_count
        )

    def tethering_point(self) -> TetheringPoint:
        return TetheringPoint(self.provider_id, self.index, self.chain_hash)


def chain_hash(
    provider_id: str, index: int, prev_chain_hash: bytes, merkle_root: bytes, leaf_count: int
) -> bytes:
    return crypto.hash(
        canonical_encode(
            {
                "provider_id": provider_id,
                "index": index,
                "prev_chain_hash": prev_chain_hash,
                "merkle_root": merkle_root,
                "leaf_count": leaf_count,
            }
        )
    )


def header_problems(
    header: EpochHeader, prev: Optional[EpochHeader], public_key: Optional[bytes]
) -> list[str]:
    """Reasons ``header`` fails to extend ``prev`` (None means genesis or unknown)."""
    problems = []
    if header.recomputed_chain_hash() != header.chain_hash:
        problems.append("chain hash does not recompute")
    if prev is None and header.index == 0 and header.prev_chain_hash != crypto.ZERO_DIGEST:
        problems.append("genesis epoch must link to the zero digest")
    if prev is not None:
        if header.index != prev.index + 1 or header.provider_id != prev.provider_id:
            problems.append("epoch index is not contiguous")
        if header.prev_chain_hash != prev.chain_hash:
            problems.append("prev_chain_hash does not link")
    if header.leaf_count == 0 and header.merkle_root != merkle.EMPTY_ROOT:
        problems.append("empty epoch without sentinel root")
    if public_key is None:
        problems.append("no provider key for epoch")
    elif not crypto.verify(public_key, header.signing_bytes(), header.provider_signature):
        problems.append("provider signature does not verify")
    return problems


@dataclass(frozen=True)
class Epoch:
    header: EpochHeader
    leaves: tuple[TransactionRecord, ...]

    @property
    def provider_id(self) -> str:
        return self.header.provider_id

    @property
    def index(self) -> int:
        return self.header.index

    @property
    def merkle_root(self) -> bytes:
        return self.header.merkle_root

    @property
    def chain_hash(self) -> bytes:
        return self.header.chain_hash

    @property
    def prev_chain_hash(self) -> bytes:
        return self.header.prev_chain_hash

    def leaf_problems(self) -> list[str]:
        problems = []
        keys = [r.sort_key for r in self.leaves]
        if any(a >= b for a, b in zip(keys, keys[1:])):
            problems.append("leaves not strictly sorted")
        if len(self.leaves) != self.header.leaf_count:
            problems.append("leaf count mismatch")
        if merkle.merkle_root([r.leaf() for r in self.leaves]) != self.header.merkle_root:
            problems.append("merkle root does not recompute")
        if not all(r.well_formed() for r in self.leaves):
            problems.append("malformed transaction record")
        return problems


class AbsenceCase(str, enum.Enum):
    EMPTY_EPOCH = "EmptyEpoch"
    BELOW_FIRST = "BelowFirst"
    ABOVE_LAST = "AboveLast"
    BETWEEN_ADJACENT = "BetweenAdjacent"


@dataclass(frozen=True)
class Neighbor:
    record: TransactionRecord
    path: MerklePath


@dataclass(frozen=True)
class AbsenceProof:
    case: AbsenceCase
    left: Optional[Neighbor] = None
    right: Optional[Neighbor] = None


def verify_membership(record: TransactionRecord, path: MerklePath, header: EpochHeader) -> bool:
    return record.well_formed() and merkle.verify_path(
        record.leaf(), path, header.merkle_root, header.leaf_count
    )


def verify_absence(proof: AbsenceProof, sort_key: bytes, header: EpochHeader) -> bool:
    """True when ``proof`` shows ``sort_key`` is not a leaf of the epoch."""
    left, right, n = proof.left, proof.right, header.leaf_count
    if proof.case is AbsenceCase.EMPTY_EPOCH:
        return left is None and right is None and n == 0 and header.merkle_root == merkle.EMPTY_ROOT
    if proof.case is AbsenceCase.BELOW_FIRST:
        return (
            left is None
            and right is not None
            and right.path.leaf_index == 0
            and sort_key < right.record.sort_key
            and verify_membership(right.record, right.path, header)
        )
    if proof.case is AbsenceCase.ABOVE_LAST:
        return (
            right is None
            and left is not None
            and left.path.leaf_index == n - 1
            and left.record.sort_key < sort_key
            and verify_membership(left.record, left.path, header)
        )
    return (
        left is not None
        and right is not None
        and right.path.leaf_index == left.path.leaf_index + 1
        and left.record.sort_key < sort_key < right.record.sort_key
        and verify_membership(left.record, left.path, header)
        and verify_membership(right.record, right.path, header)
    )
