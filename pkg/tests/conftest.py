from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import pytest

from diploma.crypto import KeyPair, keygen
from diploma.ledger import Ledger, ValidatorMember, ValidatorSet
from diploma.model import (
    Action,
    DiplomaBundle,
    append_update,
    issue_certificate,
    submission_for,
)
from diploma.provenance import ProvenanceRequest, build_proof
from diploma.provider import IntegrityProvider
from diploma.validation import TrustStore, validate

NOW = 1_700_000_000


def seed(*labels) -> bytes:
    return hashlib.sha256(repr(labels).encode()).digest()


def kp(*labels) -> KeyPair:
    return keygen(seed(*labels))


@dataclass
class Held:
    """A diploma as the issuer keeps it: bundle plus its one-time keys."""

    bundle: DiplomaBundle
    provider: str
    keys: dict[bytes, KeyPair] = field(default_factory=dict)
    counter: int = 0


class World:
    """Providers, a threshold ledger and one trusted issuer, driven by hand."""

    def __init__(self, provider_ids=("p0",), n_validators=3, threshold=2, name="w"):
        self.name = name
        self.validator_keys = [kp(name, "validator", i) for i in range(n_validators)]
        self.vs = ValidatorSet(
            tuple(ValidatorMember(f"v{i}", k.public) for i, k in enumerate(self.validator_keys)),
            threshold,
        )
        self.ledger = Ledger(self.vs)
        self.providers = {}
        for pid in provider_ids:
            p = IntegrityProvider(pid, kp(name, "provider", pid), key_lookup=self.ledger.provider_key)
            self.ledger.announce_provider_key(p.key_history[0])
            self.providers[pid] = p
        self.issuer = kp(name, "issuer")
        self.trust = TrustStore({"uni": (self.issuer.public,)})
        self.now = NOW
        self.serial = 0
        self.commit_all()
        self.block()

    def fresh(self) -> KeyPair:
        self.serial += 1
        return kp(self.name, "one-time", self.serial)

    def block(self):
        return self.ledger.produce_block(self.validator_keys[: self.vs.threshold])

    def commit_all(self):
        for p in self.providers.values():
            tp = p.tethering_point()
            if not self.ledger.view().lookup(tp.provider_id, tp.epoch_index):
                self.ledger.submit_commitment(p.commitment())

    def cycle(self, pids=None):
        for pid in pids or self.providers:
            self.providers[pid].seal_epoch()
        self.commit_all()
        return self.block()

    def sync(self):
        for a in self.providers.values():
            for b in self.providers.values():
                if a is not b:
                    start = len(b.epochs(a.provider_id))
                    b.import_metadata(a.export_metadata(start))

    def issue(self, provider="p0", **fields) -> Held:
        fields.setdefault("holder_id", "holder")
        fields.setdefault("qualification", "MSc")
        fields.setdefault("issuer_id", "uni")
        fields.setdefault("issued_at", self.now)
        creation, upd = self.fresh(), self.fresh()
        p = self.providers[provider]
        cert = issue_certificate(fields, creation.ref, upd.ref, p.tethering_point(), self.issuer)
        p.register(submission_for(cert, creation))
        return Held(DiplomaBundle(cert), provider, {creation.ref: creation, upd.ref: upd})

    def update(self, h: Held, action=Action.ROUTINE, new_provider=None, note="") -> Held:
        signer = h.keys[h.bundle.watch_key]
        nxt = self.fresh()
        tether = self.providers[new_provider].tethering_point() if new_provider else None
        rec = append_update(h.bundle, action, note, nxt.ref, tether, signer)
        self.providers[h.provider].register(submission_for(rec, signer))
        keys = dict(h.keys)
        keys[nxt.ref] = nxt
        return Held(h.bundle.with_update(rec), new_provider or h.provider, keys)

    def prove(self, bundle: DiplomaBundle, server=None, freshness=4):
        p = self.providers[server or bundle.certificate.datagram.tethering_point.provider_id]
        return build_proof(ProvenanceRequest.from_bundle(bundle, freshness), p, self.ledger)

    def validate(self, bundle, proof, notices=(), freshness=4, trust=None):
        return validate(
            bundle, proof, trust or self.trust, notices, self.vs, self.ledger.blocks,
            self.now, freshness,
        )


@pytest.fixture
def world():
    return World()


@pytest.fixture
def world3():
    return World(("p0", "p1", "p2"), n_validators=5, threshold=3, name="w3")


# -- acceptance reporting ---------------------------------------------------

_CRITERIA: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number and title")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    n, title = mark.args
    if rep.failed or (rep.when == "call" and n not in _CRITERIA):
        _CRITERIA[n] = ("FAIL" if rep.failed else "PASS", title)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        status, title = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:>2}: {status}  {title}")
