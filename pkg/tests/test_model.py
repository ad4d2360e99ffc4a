from __future__ import annotations

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import NOW, kp
from mutation import leaves, mutate
from diploma import crypto
from diploma.encoding import canonical_decode, canonical_encode
from diploma.epochs import TetheringPoint, registration_message
from diploma.errors import InvalidLifetime, MissingField, NotAuthorizedKey
from diploma.model import (
    Action,
    DiplomaBundle,
    DiplomaStatus,
    append_update,
    derive_status,
    issue_certificate,
    make_submission,
    record_hash,
    segments,
    verify_chain,
)
from diploma.validation import TrustStore

TP = TetheringPoint("p0", 0, bytes(32))
ISSUER = kp("model", "issuer")
TRUST = TrustStore({"uni": (ISSUER.public,)})


def chain(actions, fields=None):
    """A bundle with one update per action, plus the key that signs next."""
    keys = [kp("model", "k", i) for i in range(len(actions) + 2)]
    cert = issue_certificate(fields or {"issuer_id": "uni"}, keys[0].ref, keys[1].ref, TP, ISSUER)
    bundle = DiplomaBundle(cert)
    for i, a in enumerate(actions):
        rec = append_update(bundle, a, f"note {i}", keys[i + 2].ref, None, keys[i + 1])
        bundle = bundle.with_update(rec)
    return bundle, keys


def test_minimal_certificate_verifies():
    cert = issue_certificate({}, b"\x01" * 32, b"\x02" * 32, TP, ISSUER)
    assert crypto.verify(ISSUER.public, canonical_encode(cert.datagram), cert.issuer_signature)
    assert cert.datagram.issued_at is None
    check = verify_chain(DiplomaBundle(cert), TrustStore({"x": (ISSUER.public,)}))
    assert check.ok


def test_missing_mandatory_field():
    with pytest.raises(MissingField):
        issue_certificate({}, None, b"\x02" * 32, TP, ISSUER)
    with pytest.raises(MissingField):
        issue_certificate({"colour": "blue"}, b"\x01" * 32, b"\x02" * 32, TP, ISSUER)


@pytest.mark.parametrize("expires", [NOW - 1, NOW])
def test_invalid_lifetime(expires):
    with pytest.raises(InvalidLifetime):
        issue_certificate({"issued_at": NOW, "expires_at": expires}, b"\x01" * 32, b"\x02" * 32, TP, ISSUER)


def test_full_datagram_round_trips():
    fields = dict(
        issued_at=NOW, holder_id="Zoë Ng", issuer_id="uni", issuer_cert_chain=b"\x00chain",
        awarder_id="faculty", awarder_cert_chain=b"\xff", qualification="BSc (Hons) 数学",
        controller_id="registrar", expires_at=NOW + 10,
    )
    cert = issue_certificate(fields, b"\x01" * 32, b"\x02" * 32, TP, ISSUER)
    data = canonical_encode(DiplomaBundle(cert))
    assert canonical_decode(data, DiplomaBundle) == DiplomaBundle(cert)


def test_submission_binds_record_bytes():
    k = kp("model", "sub")
    sub = make_submission(b"record", k)
    assert sub.record_hash == crypto.hash(b"record")
    assert sub.public_key == k.public
    assert crypto.verify(k.public, registration_message(sub.record_hash), sub.signature)
    other = make_submission(b"recorD", k)
    assert not crypto.verify(k.public, registration_message(other.record_hash), sub.signature)


def test_first_update_chain_verifies():
    bundle, _ = chain([Action.ROUTINE])
    assert verify_chain(bundle, TRUST).ok
    assert bundle.updates[0].prev_record_hash == record_hash(bundle.certificate)


def test_update_with_random_key_is_refused():
    bundle, _ = chain([])
    with pytest.raises(NotAuthorizedKey):
        append_update(bundle, Action.ROUTINE, "", b"\x00" * 32, None, kp("random"))


def test_revoke_then_reinstate_is_active():
    bundle, _ = chain([Action.REVOKE, Action.REINSTATE])
    assert derive_status(bundle, NOW) is DiplomaStatus.ACTIVE


@pytest.mark.parametrize(
    "actions, expected",
    [
        ([], DiplomaStatus.ACTIVE),
        ([Action.ROUTINE, Action.REVOKE], DiplomaStatus.REVOKED),
        ([Action.REVOKE, Action.ROUTINE], DiplomaStatus.REVOKED),
        ([Action.REVOKE, Action.REINSTATE, Action.ROUTINE], DiplomaStatus.ACTIVE),
    ],
)
def test_status_from_actions(actions, expected):
    bundle, _ = chain(actions)
    assert derive_status(bundle, NOW) is expected


def test_expiry_dominates():
    bundle, _ = chain([Action.REVOKE, Action.REINSTATE], {"issued_at": NOW, "expires_at": NOW + 5})
    assert derive_status(bundle, NOW + 5) is DiplomaStatus.ACTIVE
    assert derive_status(bundle, NOW + 6) is DiplomaStatus.EXPIRED


def test_untrusted_issuer_fails_authenticity_only():
    bundle, _ = chain([Action.ROUTINE])
    check = verify_chain(bundle, TrustStore({"uni": (kp("other").public,)}))
    assert not check.issuer_ok and check.issuer_reason == "UntrustedIssuer"
    assert check.links_ok


def test_reordered_updates_break_linkage():
    bundle, _ = chain([Action.ROUTINE, Action.REVOKE, Action.REINSTATE])
    u = bundle.updates
    swapped = DiplomaBundle(bundle.certificate, (u[1], u[0], u[2]))
    reasons = verify_chain(swapped, TRUST).link_reasons
    assert any(r.startswith("PrevHashMismatch") for r in reasons)
    assert any(r.startswith("WrongSigner") for r in reasons)


def test_reused_key_is_rejected():
    keys = [kp("reuse", i) for i in range(3)]
    cert = issue_certificate({"issuer_id": "uni"}, keys[0].ref, keys[1].ref, TP, ISSUER)
    b = DiplomaBundle(cert)
    # the update names its own signer as the next key
    b = b.with_update(append_update(b, Action.ROUTINE, "", keys[1].ref, None, keys[1]))
    b = b.with_update(append_update(b, Action.ROUTINE, "", keys[2].ref, None, keys[1]))
    assert "KeyReused" in verify_chain(b, TRUST).link_reasons


def test_segments_follow_provider_switches():
    keys = [kp("seg", i) for i in range(5)]
    cert = issue_certificate({}, keys[0].ref, keys[1].ref, TP, ISSUER)
    b = DiplomaBundle(cert)
    tp1 = TetheringPoint("p1", 4, b"\x01" * 32)
    b = b.with_update(append_update(b, Action.ROUTINE, "", keys[2].ref, None, keys[1]))
    b = b.with_update(append_update(b, Action.ROUTINE, "", keys[3].ref, tp1, keys[2]))
    b = b.with_update(append_update(b, Action.ROUTINE, "", keys[4].ref, None, keys[3]))
    segs = segments(b)
    assert [(s.provider_id, s.record_indices) for s in segs] == [("p0", (0, 1, 2)), ("p1", (3,))]
    assert segs[1].tether == tp1


def test_record_hash_definition():
    bundle, _ = chain([Action.ROUTINE])
    for r in bundle.records():
        assert record_hash(r) == crypto.hash(canonical_encode(r))
        assert record_hash(r) == record_hash(canonical_decode(canonical_encode(r), type(r)))


def test_single_bit_flips_always_break_the_chain():
    bundle, _ = chain([Action.ROUTINE, Action.REVOKE, Action.REINSTATE],
                      {"issuer_id": "uni", "holder_id": "h", "issued_at": NOW})
    rng = random.Random(1)
    paths = leaves(bundle)
    for _ in range(1000):
        path = rng.choice(paths)
        assert not verify_chain(mutate(bundle, path, rng), TRUST).ok, path


@settings(max_examples=50, deadline=None)
@given(st.lists(st.sampled_from(list(Action)), max_size=6), st.integers(0, 2**32))
def test_status_is_last_decisive_action(actions, now):
    bundle, _ = chain(actions)
    decisive = [a for a in actions if a is not Action.ROUTINE]
    expected = DiplomaStatus.REVOKED if decisive and decisive[-1] is Action.REVOKE else DiplomaStatus.ACTIVE
    assert derive_status(bundle, now) is expected
    assert verify_chain(bundle, TRUST).ok
