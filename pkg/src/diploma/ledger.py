"""Simulated public ledger with threshold-signed blocks.

Blocks carry provider commitments (epoch index and chain hash) and provider
key announcements. A block is valid when at least ``threshold`` distinct
members of the validator set signed its body and it links to its parent.
Conflicting commitments are kept, never dropped, so that readers can detect
equivocation.
"""

from __future__ import annotations

import dataclasses
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

from . import crypto
from .crypto import KeyPair
from .encoding import canonical_decode, canonical_encode
from .errors import InsufficientQuorum, Rejected


@dataclass(frozen=True)
class ProviderKeyRecord:
    """Binds a provider's signing key from ``since_epoch`` on.

    The first record for a provider is admitted by the ledger operators;
    later ones must be signed by the key they replace.
    """

    provider_id: str
    public_key: bytes
    since_epoch: int
    signature: Optional[bytes] = None

    def body(self) -> dict:
        return {
            "kind": "provider-key",
            "provider_id": self.provider_id,
            "public_key": self.public_key,
            "since_epoch": self.since_epoch,
        }

    def signed_by(self, keypair: KeyPair) -> ProviderKeyRecord:
        sig = crypto.sign(keypair.secret, canonical_encode(self.body()))
        return dataclasses.replace(self, signature=sig)


@dataclass(frozen=True)
class Commitment:
    provider_id: str
    epoch_index: int
    chain_hash: bytes
    provider_signature: bytes


def commitment_message(provider_id: str, epoch_index: int, chain_hash: bytes) -> bytes:
    return canonical_encode(
        {"provider_id": provider_id, "epoch_index": epoch_index, "chain_hash": chain_hash}
    )


@dataclass(frozen=True)
class QuorumSignature:
    validator_id: str
    signature: bytes


@dataclass(frozen=True)
class LedgerBlock:
    height: int
    prev_block_hash: bytes
    commitments: tuple[Commitment, ...]
    provider_keys: tuple[ProviderKeyRecord, ...]
    quorum_signatures: tuple[QuorumSignature, ...]

    def body(self) -> dict:
        return {
            "height": self.height,
            "prev_block_hash": self.prev_block_hash,
            "commitments": self.commitments,
            "provider_keys": self.provider_keys,
        }

    def signing_bytes(self) -> bytes:
        return canonical_encode(self.body())

    def block_hash(self) -> bytes:
        return crypto.hash(self.signing_bytes())


@dataclass(frozen=True)
class ValidatorMember:
    validator_id: str
    public_key: bytes


@dataclass(frozen=True)
class ValidatorSet:
    members: tuple[ValidatorMember, ...]
    threshold: int

    def __post_init__(self):
        ids = [m.validator_id for m in self.members]
        if len(set(ids)) != len(ids):
            raise ValueError("validator ids must be distinct")
        if not 1 <= self.threshold <= len(self.members):
            raise ValueError("threshold must be between 1 and the member count")

    def key_of(self, validator_id: str) -> bytes | None:
        for m in self.members:
            if m.validator_id == validator_id:
                return m.public_key
        return None


@dataclass(frozen=True)
class LedgerSnapshot:
    validator_set: ValidatorSet
    blocks: tuple[LedgerBlock, ...]


def verify_block(b: LedgerBlock, vs: ValidatorSet, prev: LedgerBlock | None = None) -> bool:
    """Linkage, signer distinctness, threshold and every quorum signature."""
    if prev is None:
        if b.height != 0 or b.prev_block_hash != crypto.ZERO_DIGEST:
            return False
    elif b.height != prev.height + 1 or b.prev_block_hash != prev.block_hash():
        return False
    ids = [q.validator_id for q in b.quorum_signatures]
    if len(set(ids)) != len(ids) or len(ids) < vs.threshold:
        return False
    msg = b.signing_bytes()
    for q in b.quorum_signatures:
        pk = vs.key_of(q.validator_id)
        if pk is None or not crypto.verify(pk, msg, q.signature):
            return False
    return True


def verify_blocks(blocks: Sequence[LedgerBlock], vs: ValidatorSet) -> int:
    """Length of the longest valid prefix of ``blocks``."""
    prev = None
    for i, b in enumerate(blocks):
        if not verify_block(b, vs, prev):
            return i
        prev = b
    return len(blocks)


class ProviderKeys:
    """Provider signing keys by epoch, as announced on the ledger."""

    def __init__(self):
        self._records: dict[str, list[ProviderKeyRecord]] = {}

    def admissible(self, rec: ProviderKeyRecord) -> bool:
        history = self._records.get(rec.provider_id)
        if not history:
            return rec.since_epoch == 0
        last = history[-1]
        return rec.since_epoch > last.since_epoch and rec.signature is not None and crypto.verify(
            last.public_key, canonical_encode(rec.body()), rec.signature
        )

    def add(self, rec: ProviderKeyRecord) -> bool:
        if not self.admissible(rec):
            return False
        self._records.setdefault(rec.provider_id, []).append(rec)
        return True

    def copy(self) -> ProviderKeys:
        out = ProviderKeys()
        out._records = {pid: list(recs) for pid, recs in self._records.items()}
        return out

    def key_for(self, provider_id: str, epoch_index: int) -> bytes | None:
        found = None
        for rec in self._records.get(provider_id, ()):
            if rec.since_epoch <= epoch_index:
                found = rec.public_key
        return found

    def all_keys(self, provider_id: str) -> list[bytes]:
        return [r.public_key for r in self._records.get(provider_id, ())]


class LedgerView:
    """Read-only index over a block list, built only from its valid prefix."""

    def __init__(self, blocks: Sequence[LedgerBlock], vs: ValidatorSet):
        self.blocks: tuple[LedgerBlock, ...] = ()
        self.validator_set = vs
        self.valid_length = 0
        self.keys = ProviderKeys()
        self._commitments: dict[tuple[str, int], list[tuple[int, Commitment]]] = {}
        self._absorb(tuple(blocks))

    def _absorb(self, more: tuple[LedgerBlock, ...]) -> None:
        was_valid = self.all_valid
        self.blocks += more
        if not was_valid:
            return
        prev = self.blocks[self.valid_length - 1] if self.valid_length else None
        for b in more:
            if not verify_block(b, self.validator_set, prev):
                return
            self._index(b)
            self.valid_length += 1
            prev = b

    def _index(self, b: LedgerBlock) -> None:
        for rec in b.provider_keys:
            self.keys.add(rec)
        for c in b.commitments:
            pk = self.keys.key_for(c.provider_id, c.epoch_index)
            msg = commitment_message(c.provider_id, c.epoch_index, c.chain_hash)
            if pk is not None and crypto.verify(pk, msg, c.provider_signature):
                self._commitments.setdefault((c.provider_id, c.epoch_index), []).append((b.height, c))

    def extended(self, more: Sequence[LedgerBlock]) -> LedgerView:
        """A new view over these blocks followed by ``more``; only ``more`` is verified."""
        out = LedgerView((), self.validator_set)
        out.blocks = self.blocks
        out.valid_length = self.valid_length
        out.keys = self.keys.copy()
        out._commitments = {k: list(v) for k, v in self._commitments.items()}
        out._absorb(tuple(more))
        return out

    @property
    def all_valid(self) -> bool:
        return self.valid_length == len(self.blocks)

    @property
    def head_height(self) -> int:
        return self.valid_length - 1

    def lookup(self, provider_id: str, epoch_index: int) -> list[tuple[int, Commitment]]:
        return list(self._commitments.get((provider_id, epoch_index), ()))

    def committed_epochs(self, provider_id: str) -> list[int]:
        return sorted(i for (p, i) in self._commitments if p == provider_id)

    def block(self, height: int) -> LedgerBlock | None:
        if 0 <= height < self.valid_length:
            return self.blocks[height]
        return None


class Ledger:
    """The single logical ledger service.

    ``submit_commitment`` and ``announce_provider_key`` may be called from any
    thread; ``produce_block`` is serialized.
    """

    def __init__(self, validator_set: ValidatorSet):
        self.validator_set = validator_set
        self._blocks: list[LedgerBlock] = []
        self._queue: list[Commitment] = []
        self._key_queue: list[ProviderKeyRecord] = []
        self._keys = ProviderKeys()
        self._pending_keys = ProviderKeys()
        self._seen: set[bytes] = set()
        self._lock = threading.RLock()
        self._view: LedgerView | None = None

    @property
    def blocks(self) -> tuple[LedgerBlock, ...]:
        with self._lock:
            return tuple(self._blocks)

    def head(self) -> LedgerBlock | None:
        with self._lock:
            return self._blocks[-1] if self._blocks else None

    @property
    def height(self) -> int:
        return len(self._blocks) - 1

    def view(self) -> LedgerView:
        # blocks are append-only, so a view is current while the height is unchanged
        with self._lock:
            if self._view is None:
                self._view = LedgerView(self._blocks, self.validator_set)
            elif len(self._view.blocks) != len(self._blocks):
                self._view = self._view.extended(self._blocks[len(self._view.blocks):])
            return self._view

    def provider_key(self, provider_id: str, epoch_index: int) -> bytes | None:
        """Key for a provider epoch, counting announcements still in the queue."""
        with self._lock:
            return self._pending_keys.key_for(provider_id, epoch_index)

    def announce_provider_key(self, rec: ProviderKeyRecord) -> None:
        with self._lock:
            if not self._pending_keys.add(rec):
                raise Rejected("provider key announcement is not authorized")
            self._key_queue.append(rec)

    def submit_commitment(self, c: Commitment) -> bool:
        """Queue a commitment. Returns False for an exact duplicate (idempotent)."""
        with self._lock:
            pk = self._pending_keys.key_for(c.provider_id, c.epoch_index)
            msg = commitment_message(c.provider_id, c.epoch_index, c.chain_hash)
            if pk is None or not crypto.verify(pk, msg, c.provider_signature):
                raise Rejected("commitment signature does not verify")
            fp = crypto.hash(canonical_encode(c))
            if fp in self._seen:
                return False
            self._seen.add(fp)
            self._queue.append(c)
            return True

    def produce_block(self, signers: Iterable[KeyPair]) -> LedgerBlock:
        with self._lock:
            by_key = {m.public_key: m.validator_id for m in self.validator_set.members}
            chosen: dict[str, KeyPair] = {}
            for kp in signers:
                if kp.public not in by_key:
                    raise Rejected("signer is not a member of the validator set")
                chosen[by_key[kp.public]] = kp
            if len(chosen) < self.validator_set.threshold:
                raise InsufficientQuorum(
                    f"{len(chosen)} distinct signers, threshold {self.validator_set.threshold}"
                )
            prev = self._blocks[-1] if self._blocks else None
            unsigned = LedgerBlock(
                height=len(self._blocks),
                prev_block_hash=prev.block_hash() if prev else crypto.ZERO_DIGEST,
                commitments=tuple(self._queue),
                provider_keys=tuple(self._key_queue),
                quorum_signatures=(),
            )
            msg = unsigned.signing_bytes()
            sigs = tuple(
                QuorumSignature(vid, crypto.sign(chosen[vid].secret, msg)) for vid in sorted(chosen)
            )
            block = dataclasses.replace(unsigned, quorum_signatures=sigs)
            self._blocks.append(block)
            for rec in self._key_queue:
                self._keys.add(rec)
            self._queue.clear()
            self._key_queue.clear()
            return block

    def lookup_commitment(self, provider_id: str, epoch_index: int) -> list[tuple[int, Commitment]]:
        with self._lock:
            return [
                (b.height, c)
                for b in self._blocks
                for c in b.commitments
                if c.provider_id == provider_id and c.epoch_index == epoch_index
            ]

    # -- files ------------------------------------------------------------

    def snapshot(self) -> LedgerSnapshot:
        return LedgerSnapshot(self.validator_set, self.blocks)

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(canonical_encode(self.snapshot()))

    @classmethod
    def from_snapshot(cls, snap: LedgerSnapshot) -> Ledger:
        led = cls(snap.validator_set)
        for b in snap.blocks:
            led._blocks.append(b)
            for rec in b.provider_keys:
                led._keys.add(rec)
                led._pending_keys.add(rec)
            for c in b.commitments:
                led._seen.add(crypto.hash(canonical_encode(c)))
        return led

    @classmethod
    def load(cls, path: str | Path) -> Ledger:
        return cls.from_snapshot(canonical_decode(Path(path).read_bytes(), LedgerSnapshot))
