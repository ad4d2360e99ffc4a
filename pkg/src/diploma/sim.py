"""Deterministic multi-node simulation of the diploma programme.

Every node is an integrity provider, a proof server, a metadata recipient
and a ledger validator. The simulation advances in explicit steps (seal,
commit, block, sync, ...) driven from Python or from a scenario script; all
randomness comes from one seeded generator, so a seed and a script fully
determine the outcome.
"""

from __future__ import annotations

import enum
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

from . import crypto
from .crypto import KeyPair, keygen
from .encoding import canonical_encode
from .errors import ConfigError, DiplomaError, InsufficientMetadata, TransportError
from .ledger import Ledger, LedgerSnapshot, LedgerView, ValidatorMember, ValidatorSet
from .model import (
    Action,
    DiplomaBundle,
    append_update,
    issue_certificate,
    submission_for,
)
from .provenance import AssociationNotice, ProofOfProvenance, ProvenanceRequest, build_proof
from .provider import IntegrityProvider, ProviderState
from .validation import (
    CompromiseNotice,
    NoticeBoard,
    NoticeSubject,
    TrustStore,
    ValidationReport,
    make_notice,
    validate,
)

GENESIS_TIME = 1_700_000_000


class FailureKind(str, enum.Enum):
    CRASH = "Crash"
    WITHHOLD = "WithholdMetadata"
    EQUIVOCATE = "Equivocate"


@dataclass(frozen=True)
class FailureMode:
    kind: FailureKind
    target: str
    at_round: int = 0


@dataclass
class FeeCounters:
    registrations: int = 0
    proofs_served: int = 0
    metadata_bytes_shared: int = 0


@dataclass
class Node:
    node_id: str
    provider: IntegrityProvider
    validator_key: KeyPair
    alive: bool = True
    withholding: bool = False
    equivocate_next: bool = False
    last_committed: int = -1
    fees: FeeCounters = field(default_factory=FeeCounters)
    sent: dict[str, int] = field(default_factory=dict)

    def check_alive(self) -> None:
        if not self.alive:
            raise TransportError(f"node {self.node_id} is not reachable")


@dataclass
class Diploma:
    name: str
    issuer: str
    provider: str
    bundle: DiplomaBundle
    holder_bundle: DiplomaBundle
    keys: dict[bytes, KeyPair]
    proof: Optional[ProofOfProvenance] = None
    proof_error: Optional[str] = None
    report: Optional[ValidationReport] = None


@dataclass(frozen=True)
class NodeSnapshot:
    node_id: str
    alive: bool
    withholding: bool
    registrations: int
    proofs_served: int
    metadata_bytes_shared: int
    provider: ProviderState


@dataclass(frozen=True)
class NetworkState:
    seed: int
    round: int
    now: int
    nodes: tuple[NodeSnapshot, ...]
    ledger: LedgerSnapshot
    notices: tuple[CompromiseNotice, ...]
    association: tuple[AssociationNotice, ...]


def _derive(seed: int, *labels) -> KeyPair:
    return keygen(crypto.hash(canonical_encode(["diploma-sim", seed, *labels])))


class NetworkSim:
    def __init__(self, n_nodes: int, threshold: int, seed: int, concurrent: bool = False):
        if n_nodes < 1 or not 1 <= threshold <= n_nodes:
            raise ConfigError(f"need 1 <= threshold <= nodes, got {threshold} of {n_nodes}")
        self.seed = seed
        self.rng = random.Random(seed)
        self.round = 0
        self.now = GENESIS_TIME
        self.concurrent = concurrent
        self.freshness = 4
        ids = [f"n{i}" for i in range(n_nodes)]
        vkeys = {i: _derive(seed, "validator", i) for i in ids}
        vs = ValidatorSet(tuple(ValidatorMember(i, vkeys[i].public) for i in ids), threshold)
        self.ledger = Ledger(vs)
        self.nodes: dict[str, Node] = {}
        for i in ids:
            prov = IntegrityProvider(i, _derive(seed, "provider", i), key_lookup=self.ledger.provider_key)
            self.nodes[i] = Node(i, prov, vkeys[i])
            self.ledger.announce_provider_key(prov.key_history[0])
        self.notice_board = NoticeBoard()
        self.association_log: list[AssociationNotice] = []
        self.issuers: dict[str, KeyPair] = {}
        self.trust = TrustStore()
        self.diplomas: dict[str, Diploma] = {}
        self.pending_failures: list[FailureMode] = []
        self._view: LedgerView | None = None
        self.commit()
        self.block()

    # -- plumbing ---------------------------------------------------------

    def node(self, node_id: str) -> Node:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise ConfigError(f"unknown node {node_id}") from None

    def live_nodes(self) -> list[Node]:
        return [n for n in self.nodes.values() if n.alive]

    def view(self) -> LedgerView:
        if self._view is None or len(self._view.blocks) != len(self.ledger.blocks):
            self._view = self.ledger.view()
        return self._view

    def _fresh_key(self) -> KeyPair:
        return keygen(self.rng.getrandbits(256).to_bytes(32, "big"))

    def _targets(self, node_ids) -> list[Node]:
        if not node_ids:
            return self.live_nodes()
        return [n for n in (self.node(i) for i in node_ids) if n.alive]

    # -- issuer and holder actions -----------------------------------------

    def add_issuer(self, name: str) -> KeyPair:
        kp = _derive(self.seed, "issuer", name)
        self.issuers[name] = kp
        self.trust = self.trust.with_issuer(name, kp.public)
        return kp

    def issue(self, name: str, issuer: str, provider: str, expires_in: int | None = None,
              **fields) -> Diploma:
        if name in self.diplomas:
            raise ConfigError(f"diploma {name} already exists")
        node = self.node(provider)
        node.check_alive()
        creation, first_update = self._fresh_key(), self._fresh_key()
        fields.setdefault("holder_id", f"holder-of-{name}")
        fields.setdefault("qualification", f"MSc marker-{name}")
        fields.update(issuer_id=issuer, issued_at=self.now)
        if expires_in is not None:
            fields["expires_at"] = self.now + expires_in
        cert = issue_certificate(
            fields, creation.ref, first_update.ref, node.provider.tethering_point(), self.issuers[issuer]
        )
        node.provider.register(submission_for(cert, creation))
        node.fees.registrations += 1
        bundle = DiplomaBundle(cert)
        d = Diploma(name, issuer, provider, bundle, bundle, {creation.ref: creation, first_update.ref: first_update})
        self.diplomas[name] = d
        return d

    def update(self, name: str, action: Action = Action.ROUTINE, note: str = "",
               provider: str | None = None, hide: bool = False):
        d = self.diplomas[name]
        node = self.node(d.provider)
        node.check_alive()
        signer = d.keys[d.bundle.watch_key]
        nxt = self._fresh_key()
        new_tether = None
        if provider is not None and provider != d.provider:
            target = self.node(provider)
            target.check_alive()
            new_tether = target.provider.tethering_point()
        rec = append_update(d.bundle, Action(action), note or Action(action).value.lower(),
                            nxt.ref, new_tether, signer)
        node.provider.register(submission_for(rec, signer))
        node.fees.registrations += 1
        d.keys[nxt.ref] = nxt
        d.bundle = d.bundle.with_update(rec)
        if not hide:
            d.holder_bundle = d.bundle
        if new_tether is not None:
            d.provider = provider
        return rec

    def reissue(self, name: str, new_name: str, provider: str | None = None) -> Diploma:
        """Mint a fresh certificate with the same content under new one-time keys."""
        d = self.diplomas[name]
        dg = d.bundle.certificate.datagram
        fields = {k: getattr(dg, k) for k in ("holder_id", "qualification", "awarder_id", "controller_id")
                  if getattr(dg, k) is not None}
        return self.issue(new_name, d.issuer, provider or d.provider, **fields)

    # -- node duties -------------------------------------------------------

    def seal(self, node_ids=None) -> None:
        for n in self._targets(node_ids):
            n.provider.seal_epoch()

    def commit(self, node_ids=None) -> None:
        for n in self._targets(node_ids):
            latest = n.provider.tethering_point()
            if latest.epoch_index <= n.last_committed:
                continue
            self.ledger.submit_commitment(n.provider.commitment(latest.epoch_index))
            if n.equivocate_next:
                forged = crypto.hash(b"equivocation" + latest.chain_hash)
                self.ledger.submit_commitment(n.provider.sign_commitment(latest.epoch_index, forged))
                n.equivocate_next = False
            n.last_committed = latest.epoch_index

    def block(self):
        live = sorted(self.live_nodes(), key=lambda n: n.node_id)
        k = self.ledger.validator_set.threshold
        signers = self.rng.sample(live, min(k, len(live)))
        return self.ledger.produce_block([n.validator_key for n in signers])

    def cycle(self) -> None:
        self.seal()
        self.commit()
        self.block()

    def aggregate(self, node_id: str, count: int) -> None:
        node = self.node(node_id)
        node.check_alive()
        node.provider.add_aggregate([self.rng.getrandbits(256).to_bytes(32, "big") for _ in range(count)])

    def sync(self) -> None:
        sync_round(self)

    def fail(self, kind: FailureKind, target: str, at_round: int | None = None) -> None:
        inject_failure(self, FailureMode(FailureKind(kind), target, self.round if at_round is None else at_round))

    def tick(self, seconds: int) -> None:
        self.now += seconds

    # -- notices -----------------------------------------------------------

    def notice_issuer(self, issuer: str, effective_from: int | None = None, note: str = "key compromised"):
        kp = self.issuers[issuer]
        n = make_notice(NoticeSubject.ISSUER_KEY, issuer,
                        self.now if effective_from is None else effective_from, note, kp, key_ref=kp.ref)
        self.notice_board.publish(n)
        return n

    def notice_provider(self, node_id: str, effective_from: int | None = None, note: str = "key compromised"):
        kp = self.node(node_id).provider.signing_keypair
        n = make_notice(NoticeSubject.PROVIDER_KEY, node_id,
                        self.now if effective_from is None else effective_from, note, kp)
        self.notice_board.publish(n)
        return n

    # -- relying-party actions ---------------------------------------------

    def prove(self, name: str, node_id: str, freshness: int | None = None) -> ProofOfProvenance:
        d = self.diplomas[name]
        node = self.node(node_id)
        d.proof, d.proof_error, d.report = None, None, None
        try:
            node.check_alive()
            req = ProvenanceRequest.from_bundle(d.holder_bundle, self.freshness if freshness is None else freshness)
            d.proof = build_proof(req, node.provider, self.view())
        except InsufficientMetadata as exc:
            if exc.notice is not None:
                self.association_log.append(exc.notice)
            d.proof_error = type(exc).__name__
            raise
        except DiplomaError as exc:
            d.proof_error = type(exc).__name__
            raise
        node.fees.proofs_served += 1
        return d.proof

    def validate(self, name: str, freshness: int | None = None) -> ValidationReport:
        d = self.diplomas[name]
        if d.proof is None:
            raise ConfigError(f"no proof held for {name}")
        view = self.view()
        d.report = validate(
            d.holder_bundle, d.proof, self.trust, self.notice_board.list_notices(),
            self.ledger.validator_set, view.blocks, self.now,
            self.freshness if freshness is None else freshness, view=view,
        )
        return d.report

    # -- state -------------------------------------------------------------

    def state(self) -> NetworkState:
        nodes = tuple(
            NodeSnapshot(n.node_id, n.alive, n.withholding, n.fees.registrations,
                         n.fees.proofs_served, n.fees.metadata_bytes_shared, n.provider.state())
            for n in sorted(self.nodes.values(), key=lambda n: n.node_id)
        )
        return NetworkState(self.seed, self.round, self.now, nodes, self.ledger.snapshot(),
                            tuple(self.notice_board.list_notices()), tuple(self.association_log))

    def state_bytes(self) -> bytes:
        return canonical_encode(self.state())

    def preimage_registered(self, preimage: bytes) -> dict[str, list[tuple[str, int]]]:
        """Which nodes can confirm a leaked record preimage by hash match."""
        digest = crypto.hash(preimage)
        return {n.node_id: n.provider.find_record_hash(digest) for n in self.nodes.values()}


def spawn(n_nodes: int, threshold: int, seed: int, concurrent: bool = False) -> NetworkSim:
    return NetworkSim(n_nodes, threshold, seed, concurrent=concurrent)


def sync_round(sim: NetworkSim) -> NetworkSim:
    """Ship every live, non-withholding node's new epochs to every live peer."""
    live = sorted(sim.live_nodes(), key=lambda n: n.node_id)
    deliveries: dict[str, list] = {n.node_id: [] for n in live}
    for origin in live:
        if origin.withholding:
            continue
        for peer in live:
            if peer is origin:
                continue
            start = origin.sent.get(peer.node_id, 0)
            batch = origin.provider.export_metadata(start)
            if not batch.epochs:
                continue
            origin.sent[peer.node_id] = start + len(batch.epochs)
            origin.fees.metadata_bytes_shared += len(canonical_encode(batch))
            deliveries[peer.node_id].append(batch)

    def deliver(node_id: str) -> None:
        prov = sim.nodes[node_id].provider
        for batch in deliveries[node_id]:
            prov.import_metadata(batch)

    if sim.concurrent:
        with ThreadPoolExecutor(max_workers=max(1, len(live))) as pool:
            list(pool.map(deliver, sorted(deliveries)))
    else:
        for node_id in sorted(deliveries):
            deliver(node_id)
    sim.round += 1
    due = [f for f in sim.pending_failures if f.at_round <= sim.round]
    sim.pending_failures = [f for f in sim.pending_failures if f.at_round > sim.round]
    for f in due:
        _apply_failure(sim, f)
    return sim


def inject_failure(sim: NetworkSim, f: FailureMode) -> NetworkSim:
    sim.node(f.target)
    if f.at_round <= sim.round:
        _apply_failure(sim, f)
    else:
        sim.pending_failures.append(f)
    return sim


def _apply_failure(sim: NetworkSim, f: FailureMode) -> None:
    node = sim.node(f.target)
    if f.kind is FailureKind.CRASH:
        node.alive = False
    elif f.kind is FailureKind.WITHHOLD:
        node.withholding = True
    else:
        node.equivocate_next = True
