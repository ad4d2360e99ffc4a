"""Proofs of provenance: building them on a node, verifying them offline.

A proof is split into one segment per provider the diploma has used. Each
segment holds the contiguous epoch headers from the diploma's tethering point
at that provider up to a ledger-anchored epoch, plus membership evidence for
the records registered there. The final segment also carries absence
evidence for the key the next update would have to be signed with.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

from . import crypto
from .epochs import (
    AbsenceProof,
    EpochHeader,
    TetheringPoint,
    TransactionRecord,
    header_problems,
    verify_absence,
    verify_membership,
)
from .errors import InsufficientMetadata, StaleLedger, UnknownKey
from .ledger import Ledger, LedgerBlock, LedgerView, ValidatorSet
from .merkle import MerklePath
from .model import DiplomaBundle, record_hash, segments, signer_refs
from .provider import IntegrityProvider


@dataclass(frozen=True)
class UpdateKey:
    key_ref: bytes
    new_provider: Optional[TetheringPoint] = None


@dataclass(frozen=True)
class ProvenanceRequest:
    """What a prover sends a node: key references and tethering points, never records."""

    tethering_point: TetheringPoint
    creation_key: bytes
    update_keys: tuple[UpdateKey, ...]
    watch_key: bytes
    freshness: int

    def __post_init__(self):
        if self.freshness < 0:
            raise ValueError("freshness must be non-negative")

    @classmethod
    def from_bundle(cls, bundle: DiplomaBundle, freshness: int) -> ProvenanceRequest:
        return cls(
            tethering_point=bundle.certificate.datagram.tethering_point,
            creation_key=bundle.certificate.datagram.creation_key,
            update_keys=tuple(
                UpdateKey(crypto.key_ref(u.signer_public_key), u.new_provider) for u in bundle.updates
            ),
            watch_key=bundle.watch_key,
            freshness=freshness,
        )

    def plan(self) -> list[tuple[TetheringPoint, list[bytes]]]:
        out = []
        tether, keys = self.tethering_point, [self.creation_key]
        for u in self.update_keys:
            keys.append(u.key_ref)
            if u.new_provider is not None:
                out.append((tether, keys))
                tether, keys = u.new_provider, []
        out.append((tether, keys))
        return out


@dataclass(frozen=True)
class RecordEvidence:
    epoch_index: int
    record: TransactionRecord
    path: MerklePath


@dataclass(frozen=True)
class AbsenceEvidence:
    epoch_index: int
    proof: AbsenceProof


@dataclass(frozen=True)
class Checkpoint:
    epoch_index: int
    block_height: int


@dataclass(frozen=True)
class ProviderSegment:
    provider_id: str
    headers: tuple[EpochHeader, ...]
    records: tuple[RecordEvidence, ...]
    anchor: Checkpoint


@dataclass(frozen=True)
class ProofOfProvenance:
    segments: tuple[ProviderSegment, ...]
    absence_evidence: tuple[AbsenceEvidence, ...]

    @property
    def provider_trail(self) -> list[str]:
        return [s.provider_id for s in self.segments]

    @property
    def record_evidence(self) -> list[RecordEvidence]:
        return [r for s in self.segments for r in s.records]

    @property
    def epoch_headers(self) -> list[EpochHeader]:
        return [h for s in self.segments for h in s.headers]

    @property
    def checkpoint(self) -> Checkpoint:
        return self.segments[-1].anchor


@dataclass(frozen=True)
class AssociationNotice:
    """Raised to the association when a node cannot serve a proof."""

    reporter: str
    provider_id: str
    epoch_index: int
    reason: str


@dataclass(frozen=True)
class ProofVerdict:
    integrity_ok: bool
    uniqueness_ok: bool
    fresh: bool
    failure_reasons: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return self.integrity_ok and self.uniqueness_ok and self.fresh

    def reasons(self, criterion: str) -> list[str]:
        prefix = criterion + "/"
        return [r[len(prefix):] for r in self.failure_reasons if r.startswith(prefix)]


def _as_view(ledger: Ledger | LedgerView) -> LedgerView:
    return ledger.view() if isinstance(ledger, Ledger) else ledger


def build_proof(
    request: ProvenanceRequest, registry: IntegrityProvider, ledger: Ledger | LedgerView
) -> ProofOfProvenance:
    view = _as_view(ledger)
    plan = request.plan()
    out = []
    for k, (tether, keys) in enumerate(plan):
        final = k == len(plan) - 1
        pid = tether.provider_id
        chain = registry.epochs(pid)
        committed = view.committed_epochs(pid)
        beyond = [e for e in committed if e >= len(chain)]

        def missing(epoch: int, why: str):
            notice = AssociationNotice(registry.provider_id, pid, epoch, why)
            return InsufficientMetadata(f"{registry.provider_id} lacks {pid} epochs: {why}", notice)

        if len(chain) <= tether.epoch_index:
            raise missing(tether.epoch_index, "tethering epoch not held")
        if chain[tether.epoch_index].chain_hash != tether.chain_hash:
            raise UnknownKey(f"tethering point is not in {pid}'s history")

        pos = tether.epoch_index
        recs = []
        for key in keys:
            e = registry.find(key, pid)
            if e is None or e < pos:
                if beyond:
                    raise missing(len(chain), "record not found in held epochs")
                raise UnknownKey(f"key {key.hex()[:16]} not registered with {pid}")
            rec, path = registry.prove_membership(e, key, pid)
            recs.append(RecordEvidence(e, rec, path))
            pos = e

        anchored = [
            (e, h)
            for e in committed
            if pos <= e < len(chain)
            for h, c in view.lookup(pid, e)
            if c.chain_hash == chain[e].chain_hash
        ]
        if final:
            fresh = [(e, h) for e, h in anchored if view.head_height - h <= request.freshness]
            if not fresh:
                fresher_unheld = any(
                    view.head_height - h <= request.freshness for e in beyond for h, _ in view.lookup(pid, e)
                )
                if fresher_unheld:
                    raise missing(len(chain), "only unheld epochs are freshly committed")
                raise StaleLedger(f"no commitment by {pid} within {request.freshness} blocks")
            anchor_e, anchor_h = max(fresh)
        else:
            if not anchored:
                if beyond:
                    raise missing(len(chain), "no held epoch is committed")
                raise StaleLedger(f"no commitment by {pid} covers epoch {pos}")
            anchor_e, anchor_h = min(anchored)
        headers = tuple(ep.header for ep in chain[tether.epoch_index : anchor_e + 1])
        out.append(ProviderSegment(pid, headers, tuple(recs), Checkpoint(anchor_e, anchor_h)))

    last = out[-1]
    start = last.records[-1].epoch_index if last.records else last.headers[0].index
    absence = tuple(
        AbsenceEvidence(e, registry.prove_absence(e, request.watch_key, last.provider_id))
        for e in range(start, last.anchor.epoch_index + 1)
    )
    return ProofOfProvenance(tuple(out), absence)


@dataclass
class _Checks:
    integrity: list[str] = field(default_factory=list)
    uniqueness: list[str] = field(default_factory=list)


def verify_proof(
    proof: ProofOfProvenance,
    bundle: DiplomaBundle,
    validator_set: ValidatorSet,
    blocks: Sequence[LedgerBlock],
    freshness: int,
    view: LedgerView | None = None,
) -> ProofVerdict:
    """Check a proof against a bundle and public ledger blocks only."""
    view = view or LedgerView(blocks, validator_set)
    ck = _Checks()
    if not view.all_valid:
        ck.uniqueness.append(f"LedgerInvalid:{view.valid_length}")

    expected = segments(bundle)
    refs = signer_refs(bundle)
    hashes = [record_hash(r) for r in bundle.records()]
    if len(proof.segments) != len(expected):
        ck.integrity.append("TrailMismatch")

    final_index = {}
    final_start = None
    for n, (exp, seg) in enumerate(zip(expected, proof.segments)):
        pid = exp.provider_id
        if seg.provider_id != pid:
            ck.integrity.append(f"TrailMismatch:{n}")
            continue
        if not seg.headers:
            ck.integrity.append(f"NoHeaders:{n}")
            continue
        first = seg.headers[0]
        if first.index != exp.tether.epoch_index or first.chain_hash != exp.tether.chain_hash:
            ck.integrity.append(f"TetherMismatch:{n}")
        by_index: dict[int, EpochHeader] = {}
        prev = None
        for h in seg.headers:
            problems = header_problems(h, prev, view.keys.key_for(pid, h.index))
            if h.provider_id != pid or problems:
                ck.integrity.append(f"HeaderInvalid:{n}:{h.index}")
            by_index[h.index] = h
            prev = h

        if len(seg.records) < len(exp.record_indices):
            ck.integrity.append(f"MissingRecords:{n}")
        elif len(seg.records) > len(exp.record_indices):
            ck.integrity.append(f"ExtraRecords:{n}")
        pos = exp.tether.epoch_index
        for ev, ri in zip(seg.records, exp.record_indices):
            hdr = by_index.get(ev.epoch_index)
            rec = ev.record
            if hdr is None or ev.epoch_index < pos:
                ck.integrity.append(f"EpochOrder:{ri}")
            elif not verify_membership(rec, ev.path, hdr):
                ck.integrity.append(f"BadPath:{ri}")
            if rec.public_key is None or rec.sort_key != refs[ri] or rec.record_hash != hashes[ri]:
                ck.integrity.append(f"RecordMismatch:{ri}")
            pos = max(pos, ev.epoch_index)

        anchor = seg.anchor
        top = seg.headers[-1]
        if anchor.epoch_index != top.index:
            ck.integrity.append(f"AnchorMismatch:{n}")
        entries = view.lookup(pid, anchor.epoch_index)
        if not any(h == anchor.block_height and c.chain_hash == top.chain_hash for h, c in entries):
            ck.uniqueness.append(f"CommitmentMissing:{n}")
        elif len(entries) != 1:
            ck.uniqueness.append(f"Equivocation:{pid}:{anchor.epoch_index}")
        for h in seg.headers:
            if any(c.chain_hash != h.chain_hash for _, c in view.lookup(pid, h.index)):
                ck.uniqueness.append(f"Equivocation:{pid}:{h.index}")
                break
        if n == len(expected) - 1:
            final_index, final_start = by_index, pos

    if len(proof.segments) == len(expected) and final_start is not None:
        anchor = proof.segments[-1].anchor
        wanted = list(range(final_start, anchor.epoch_index + 1))
        got = [a.epoch_index for a in proof.absence_evidence]
        if got != wanted:
            ck.integrity.append("AbsenceGap")
        for a in proof.absence_evidence:
            hdr = final_index.get(a.epoch_index)
            if hdr is None or not verify_absence(a.proof, bundle.watch_key, hdr):
                ck.integrity.append(f"BadAbsence:{a.epoch_index}")

    fresh = False
    if proof.segments and view.valid_length:
        h = proof.segments[-1].anchor.block_height
        fresh = 0 <= h <= view.head_height and view.head_height - h <= freshness
    reasons = tuple(
        [f"integrity/{r}" for r in dict.fromkeys(ck.integrity)]
        + [f"uniqueness/{r}" for r in dict.fromkeys(ck.uniqueness)]
    )
    return ProofVerdict(
        integrity_ok=not ck.integrity,
        uniqueness_ok=not ck.uniqueness,
        fresh=fresh,
        failure_reasons=reasons,
    )
