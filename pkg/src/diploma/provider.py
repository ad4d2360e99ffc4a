"""A validator node's registry of opaque transactions.

The provider accepts registration triples, seals them into Merkle-rooted
epochs linked by signed chain hashes, and answers membership and absence
queries for its own epochs and for epochs imported from peers.
"""

from __future__ import annotations

import threading
from bisect import bisect_left
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

from . import crypto, merkle
from .crypto import KeyPair
from .encoding import canonical_decode, canonical_encode
from .epochs import (
    AbsenceCase,
    AbsenceProof,
    Epoch,
    EpochHeader,
    Neighbor,
    TetheringPoint,
    TransactionRecord,
    chain_hash,
    header_problems,
    registration_message,
)
from .errors import (
    CorruptBatch,
    DuplicateKey,
    EmptyAggregate,
    InvalidSubmission,
    KeyPresent,
    NotFound,
    NotSealed,
)
from .ledger import Commitment, ProviderKeyRecord, commitment_message
from .merkle import MerklePath
from .model import TransactionSubmission

KeyLookup = Callable[[str, int], Optional[bytes]]


@dataclass(frozen=True)
class RegistrationReceipt:
    provider_id: str
    epoch_index: int
    sort_key: bytes


@dataclass(frozen=True)
class MetadataBatch:
    provider_id: str
    epochs: tuple[Epoch, ...]


@dataclass(frozen=True)
class ImportReport:
    provider_id: str
    imported: int
    already_held: int


@dataclass(frozen=True)
class ProviderState:
    """Everything a provider persists; used for files and obliviousness scans."""

    provider_id: str
    chains: tuple[MetadataBatch, ...]
    pending: tuple[TransactionRecord, ...]
    key_history: tuple[ProviderKeyRecord, ...]


def aggregate_private(hashes: list[bytes]) -> TransactionRecord:
    """Fold private transaction hashes into a single anonymous leaf."""
    if not hashes:
        raise EmptyAggregate("aggregate needs at least one hash")
    joined = b"".join(hashes)
    return TransactionRecord(
        sort_key=crypto.hash(merkle.AGGREGATE_PREFIX + joined),
        record_hash=crypto.hash(joined),
    )


class IntegrityProvider:
    """Registry, epoch sealer and proof server for one provider id.

    ``key_lookup(provider_id, epoch_index)`` resolves peer signing keys when
    importing their metadata; it is normally backed by the ledger.
    """

    def __init__(self, provider_id: str, keypair: KeyPair, key_lookup: KeyLookup | None = None):
        self.provider_id = provider_id
        self._keypair = keypair
        self._key_lookup = key_lookup
        self._lock = threading.RLock()
        self._chains: dict[str, list[Epoch]] = {provider_id: []}
        self._where: dict[str, dict[bytes, int]] = {provider_id: {}}
        self._pending: dict[bytes, TransactionRecord] = {}
        self._key_history: list[ProviderKeyRecord] = [
            ProviderKeyRecord(provider_id, keypair.public, 0)
        ]
        self.seal_epoch()

    # -- registration -----------------------------------------------------

    def register(self, submission: TransactionSubmission) -> RegistrationReceipt:
        msg = registration_message(submission.record_hash)
        if len(submission.record_hash) != crypto.DIGEST_SIZE or not crypto.verify(
            submission.public_key, msg, submission.signature
        ):
            raise InvalidSubmission("signature does not verify against the submitted key")
        record = TransactionRecord(
            sort_key=crypto.key_ref(submission.public_key),
            record_hash=submission.record_hash,
            public_key=submission.public_key,
            signature=submission.signature,
        )
        return self._enqueue(record)

    def add_aggregate(self, hashes: list[bytes]) -> RegistrationReceipt:
        return self._enqueue(aggregate_private(hashes))

    def _enqueue(self, record: TransactionRecord) -> RegistrationReceipt:
        with self._lock:
            key = record.sort_key
            if key in self._pending or key in self._where[self.provider_id]:
                raise DuplicateKey("key already registered")
            self._pending[key] = record
            return RegistrationReceipt(self.provider_id, len(self._own), key)

    @property
    def _own(self) -> list[Epoch]:
        return self._chains[self.provider_id]

    @property
    def pending(self) -> tuple[TransactionRecord, ...]:
        with self._lock:
            return tuple(self._pending.values())

    # -- sealing ----------------------------------------------------------

    def seal_epoch(self) -> Epoch:
        with self._lock:
            leaves = tuple(sorted(self._pending.values(), key=lambda r: r.sort_key))
            index = len(self._own)
            prev = self._own[-1].chain_hash if self._own else crypto.ZERO_DIGEST
            root = merkle.merkle_root([r.leaf() for r in leaves])
            ch = chain_hash(self.provider_id, index, prev, root, len(leaves))
            unsigned = EpochHeader(self.provider_id, index, prev, root, len(leaves), ch, b"")
            sig = crypto.sign(self._keypair.secret, unsigned.signing_bytes())
            header = EpochHeader(self.provider_id, index, prev, root, len(leaves), ch, sig)
            epoch = Epoch(header, leaves)
            self._append(epoch)
            self._pending.clear()
            return epoch

    def _append(self, epoch: Epoch) -> None:
        chain = self._chains.setdefault(epoch.provider_id, [])
        where = self._where.setdefault(epoch.provider_id, {})
        chain.append(epoch)
        for rec in epoch.leaves:
            where.setdefault(rec.sort_key, epoch.index)

    def tethering_point(self) -> TetheringPoint:
        with self._lock:
            return self._own[-1].header.tethering_point()

    def commitment(self, epoch_index: int | None = None) -> Commitment:
        """Sign a ledger commitment for one of our sealed epochs (default: latest)."""
        with self._lock:
            epoch = self._own[-1 if epoch_index is None else epoch_index]
        return self.sign_commitment(epoch.index, epoch.chain_hash)

    def sign_commitment(self, epoch_index: int, chain_hash: bytes) -> Commitment:
        sig = crypto.sign(
            self._keypair.secret, commitment_message(self.provider_id, epoch_index, chain_hash)
        )
        return Commitment(self.provider_id, epoch_index, chain_hash, sig)

    def rotate_key(self, new_keypair: KeyPair) -> ProviderKeyRecord:
        """Hand signing over to ``new_keypair`` from the next epoch on."""
        with self._lock:
            rec = ProviderKeyRecord(self.provider_id, new_keypair.public, len(self._own))
            rec = rec.signed_by(self._keypair)
            self._keypair = new_keypair
            self._key_history.append(rec)
            return rec

    @property
    def public_key(self) -> bytes:
        return self._keypair.public

    @property
    def signing_keypair(self) -> KeyPair:
        """Current key, for announcements made in this provider's name."""
        return self._keypair

    @property
    def key_history(self) -> tuple[ProviderKeyRecord, ...]:
        return tuple(self._key_history)

    # -- queries ----------------------------------------------------------

    def providers(self) -> list[str]:
        with self._lock:
            return sorted(self._chains)

    def epochs(self, provider_id: str | None = None) -> tuple[Epoch, ...]:
        with self._lock:
            return tuple(self._chains.get(provider_id or self.provider_id, ()))

    def epoch(self, epoch_index: int, provider_id: str | None = None) -> Epoch:
        chain = self.epochs(provider_id)
        if not 0 <= epoch_index < len(chain):
            raise NotSealed(f"epoch {epoch_index} of {provider_id or self.provider_id} not held")
        return chain[epoch_index]

    def find(self, sort_key: bytes, provider_id: str | None = None) -> int | None:
        """Epoch index holding ``sort_key`` in the given provider's chain."""
        with self._lock:
            return self._where.get(provider_id or self.provider_id, {}).get(sort_key)

    def find_record_hash(self, digest: bytes) -> list[tuple[str, int]]:
        """Locate a record by hash; confirms a leaked preimage was registered."""
        hits = []
        with self._lock:
            for pid in sorted(self._chains):
                for ep in self._chains[pid]:
                    hits.extend((pid, ep.index) for r in ep.leaves if r.record_hash == digest)
        return hits

    def prove_membership(
        self, epoch_index: int, sort_key: bytes, provider_id: str | None = None
    ) -> tuple[TransactionRecord, MerklePath]:
        epoch = self.epoch(epoch_index, provider_id)
        keys = [r.sort_key for r in epoch.leaves]
        i = bisect_left(keys, sort_key)
        if i == len(keys) or keys[i] != sort_key:
            raise NotFound("key not in epoch")
        levels = merkle.build_levels([r.leaf() for r in epoch.leaves])
        return epoch.leaves[i], merkle.make_path(levels, i)

    def prove_absence(
        self, epoch_index: int, sort_key: bytes, provider_id: str | None = None
    ) -> AbsenceProof:
        epoch = self.epoch(epoch_index, provider_id)
        if not epoch.leaves:
            return AbsenceProof(AbsenceCase.EMPTY_EPOCH)
        keys = [r.sort_key for r in epoch.leaves]
        i = bisect_left(keys, sort_key)
        if i < len(keys) and keys[i] == sort_key:
            raise KeyPresent("key is present in epoch")
        levels = merkle.build_levels([r.leaf() for r in epoch.leaves])

        def nb(j: int) -> Neighbor:
            return Neighbor(epoch.leaves[j], merkle.make_path(levels, j))

        if i == 0:
            return AbsenceProof(AbsenceCase.BELOW_FIRST, right=nb(0))
        if i == len(keys):
            return AbsenceProof(AbsenceCase.ABOVE_LAST, left=nb(i - 1))
        return AbsenceProof(AbsenceCase.BETWEEN_ADJACENT, left=nb(i - 1), right=nb(i))

    # -- replication ------------------------------------------------------

    def export_metadata(self, start: int = 0, stop: int | None = None) -> MetadataBatch:
        with self._lock:
            own = self._own
            stop = len(own) if stop is None else stop
            return MetadataBatch(self.provider_id, tuple(own[start:stop]))

    def import_metadata(self, batch: MetadataBatch) -> ImportReport:
        """Verify and append a peer's epochs; all-or-nothing."""
        pid = batch.provider_id
        if pid == self.provider_id:
            raise CorruptBatch("refusing to import our own provider id")
        with self._lock:
            held = list(self._chains.get(pid, []))
            prev = held[-1].header if held else None
            new, dup = [], 0
            for ep in batch.epochs:
                if ep.provider_id != pid:
                    raise CorruptBatch("epoch from a different provider")
                if ep.index < len(held):
                    if canonical_encode(ep) != canonical_encode(held[ep.index]):
                        raise CorruptBatch(f"epoch {ep.index} conflicts with the held copy")
                    dup += 1
                    continue
                expected = len(held) + len(new)
                if ep.index != expected:
                    raise CorruptBatch(f"chain gap: expected epoch {expected}, got {ep.index}")
                key = self._key_lookup(pid, ep.index) if self._key_lookup else None
                problems = header_problems(ep.header, prev, key) + ep.leaf_problems()
                if problems:
                    raise CorruptBatch(f"epoch {ep.index}: {'; '.join(problems)}")
                new.append(ep)
                prev = ep.header
            for ep in new:
                self._append(ep)
            return ImportReport(pid, len(new), dup)

    # -- persistence ------------------------------------------------------

    def state(self) -> ProviderState:
        with self._lock:
            chains = tuple(
                MetadataBatch(pid, tuple(self._chains[pid])) for pid in sorted(self._chains)
            )
            pending = tuple(sorted(self._pending.values(), key=lambda r: r.sort_key))
            return ProviderState(self.provider_id, chains, pending, tuple(self._key_history))

    def state_bytes(self) -> bytes:
        return canonical_encode(self.state())

    def save(self, directory: str | Path) -> None:
        """Write the append-only epoch log and the pending-set file."""
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        st = self.state()
        log = d / "epochs.log"
        lines = []
        for batch in st.chains:
            lines.extend(canonical_encode(ep) for ep in batch.epochs)
        existing = log.read_bytes().splitlines() if log.exists() else []
        if existing != lines[: len(existing)]:
            log.write_bytes(b"".join(line + b"\n" for line in lines))
        else:
            with log.open("ab") as fh:
                for line in lines[len(existing):]:
                    fh.write(line + b"\n")
        (d / "pending.set").write_bytes(canonical_encode(list(st.pending)))
        (d / "keys.log").write_bytes(canonical_encode(list(st.key_history)))

    @classmethod
    def load(
        cls, directory: str | Path, provider_id: str, keypair: KeyPair,
        key_lookup: KeyLookup | None = None,
    ) -> IntegrityProvider:
        d = Path(directory)
        obj = cls.__new__(cls)
        obj.provider_id = provider_id
        obj._keypair = keypair
        obj._key_lookup = key_lookup
        obj._lock = threading.RLock()
        obj._chains, obj._where = {provider_id: []}, {provider_id: {}}
        for line in (d / "epochs.log").read_bytes().splitlines():
            obj._append(canonical_decode(line, Epoch))
        obj._pending = {
            r.sort_key: r
            for r in canonical_decode((d / "pending.set").read_bytes(), list[TransactionRecord])
        }
        obj._key_history = canonical_decode((d / "keys.log").read_bytes(), list[ProviderKeyRecord])
        return obj
