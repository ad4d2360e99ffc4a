"""The holder-side credential: certificate, update chain and chain checks."""

from __future__ import annotations

import dataclasses
import enum
from dataclasses import dataclass, field
from typing import Optional

from . import crypto
from .crypto import KeyPair
from .encoding import canonical_encode
from .epochs import TetheringPoint, registration_message
from .errors import InvalidLifetime, MissingField, NotAuthorizedKey


class Action(str, enum.Enum):
    ROUTINE = "Routine"
    REVOKE = "Revoke"
    REINSTATE = "Reinstate"


class DiplomaStatus(str, enum.Enum):
    ACTIVE = "Active"
    REVOKED = "Revoked"
    EXPIRED = "Expired"


@dataclass(frozen=True)
class CertificateDatagram:
    creation_key: bytes
    update_key: bytes
    tethering_point: TetheringPoint
    issued_at: Optional[int] = None
    holder_id: Optional[str] = None
    issuer_id: Optional[str] = None
    issuer_cert_chain: Optional[bytes] = None
    awarder_id: Optional[str] = None
    awarder_cert_chain: Optional[bytes] = None
    qualification: Optional[str] = None
    controller_id: Optional[str] = None
    expires_at: Optional[int] = None


OPTIONAL_FIELDS = (
    "issued_at",
    "holder_id",
    "issuer_id",
    "issuer_cert_chain",
    "awarder_id",
    "awarder_cert_chain",
    "qualification",
    "controller_id",
    "expires_at",
)


@dataclass(frozen=True)
class InitialCertificate:
    datagram: CertificateDatagram
    issuer_public_key: bytes
    issuer_signature: bytes


@dataclass(frozen=True)
class UpdateRecord:
    prev_record_hash: bytes
    action: Action
    note: str
    next_update_key: bytes
    signer_public_key: bytes
    signature: bytes
    new_provider: Optional[TetheringPoint] = None

    def body(self) -> dict:
        return {
            "prev_record_hash": self.prev_record_hash,
            "action": self.action,
            "note": self.note,
            "next_update_key": self.next_update_key,
            "new_provider": self.new_provider,
            "signer_public_key": self.signer_public_key,
        }


@dataclass(frozen=True)
class DiplomaBundle:
    certificate: InitialCertificate
    updates: tuple[UpdateRecord, ...] = ()

    @property
    def head(self) -> InitialCertificate | UpdateRecord:
        return self.updates[-1] if self.updates else self.certificate

    @property
    def watch_key(self) -> bytes:
        """KeyRef the next legitimate update would be signed with."""
        if self.updates:
            return self.updates[-1].next_update_key
        return self.certificate.datagram.update_key

    def records(self) -> list[InitialCertificate | UpdateRecord]:
        return [self.certificate, *self.updates]

    def with_update(self, record: UpdateRecord) -> DiplomaBundle:
        return DiplomaBundle(self.certificate, (*self.updates, record))


@dataclass(frozen=True)
class TransactionSubmission:
    public_key: bytes
    record_hash: bytes
    signature: bytes


@dataclass(frozen=True)
class Segment:
    """Records of one bundle that are registered with one provider."""

    tether: TetheringPoint
    record_indices: tuple[int, ...]

    @property
    def provider_id(self) -> str:
        return self.tether.provider_id


@dataclass
class ChainCheck:
    issuer_ok: bool
    issuer_reason: str = ""
    link_reasons: list[str] = field(default_factory=list)

    @property
    def links_ok(self) -> bool:
        return not self.link_reasons

    @property
    def ok(self) -> bool:
        return self.issuer_ok and self.links_ok


def record_hash(record: InitialCertificate | UpdateRecord) -> bytes:
    return crypto.hash(canonical_encode(record))


def issue_certificate(
    fields: dict,
    creation_key: bytes,
    update_key: bytes,
    tethering_point: TetheringPoint,
    issuer_keypair: KeyPair,
) -> InitialCertificate:
    for name, value in (
        ("creation_key", creation_key),
        ("update_key", update_key),
        ("tethering_point", tethering_point),
    ):
        if value is None:
            raise MissingField(name)
    unknown = set(fields) - set(OPTIONAL_FIELDS)
    if unknown:
        raise MissingField(f"unknown datagram fields: {sorted(unknown)}")
    issued, expires = fields.get("issued_at"), fields.get("expires_at")
    if issued is not None and expires is not None and expires <= issued:
        raise InvalidLifetime("expires_at must be after issued_at")
    datagram = CertificateDatagram(
        creation_key=creation_key,
        update_key=update_key,
        tethering_point=tethering_point,
        **fields,
    )
    sig = crypto.sign(issuer_keypair.secret, canonical_encode(datagram))
    return InitialCertificate(datagram, issuer_keypair.public, sig)


def make_submission(record_bytes: bytes, one_time_keypair: KeyPair) -> TransactionSubmission:
    digest = crypto.hash(record_bytes)
    sig = crypto.sign(one_time_keypair.secret, registration_message(digest))
    return TransactionSubmission(one_time_keypair.public, digest, sig)


def submission_for(record: InitialCertificate | UpdateRecord, keypair: KeyPair) -> TransactionSubmission:
    return make_submission(canonical_encode(record), keypair)


def append_update(
    bundle: DiplomaBundle,
    action: Action,
    note: str,
    next_update_key: bytes,
    new_provider: Optional[TetheringPoint],
    signer_keypair: KeyPair,
) -> UpdateRecord:
    if crypto.key_ref(signer_keypair.public) != bundle.watch_key:
        raise NotAuthorizedKey("signer is not the key named by the chain head")
    unsigned = UpdateRecord(
        prev_record_hash=record_hash(bundle.head),
        action=Action(action),
        note=note,
        next_update_key=next_update_key,
        signer_public_key=signer_keypair.public,
        signature=b"",
        new_provider=new_provider,
    )
    sig = crypto.sign(signer_keypair.secret, canonical_encode(unsigned.body()))
    return dataclasses.replace(unsigned, signature=sig)


def verify_chain(bundle: DiplomaBundle, trust_store) -> ChainCheck:
    """Check the issuer signature and every update link; never raises."""
    cert = bundle.certificate
    dg = cert.datagram
    check = ChainCheck(issuer_ok=True)
    if not crypto.verify(cert.issuer_public_key, canonical_encode(dg), cert.issuer_signature):
        check.issuer_ok, check.issuer_reason = False, "BadIssuerSignature"
    elif trust_store is None or not trust_store.is_trusted(dg.issuer_id, cert.issuer_public_key):
        check.issuer_ok, check.issuer_reason = False, "UntrustedIssuer"

    named = [dg.creation_key, dg.update_key]
    prev = cert
    for i, upd in enumerate(bundle.updates):
        if crypto.key_ref(upd.signer_public_key) != named[-1]:
            check.link_reasons.append(f"WrongSigner:{i}")
        if upd.prev_record_hash != record_hash(prev):
            check.link_reasons.append(f"PrevHashMismatch:{i}")
        if not crypto.verify(upd.signer_public_key, canonical_encode(upd.body()), upd.signature):
            check.link_reasons.append(f"BadUpdateSignature:{i}")
        named.append(upd.next_update_key)
        prev = upd
    if len(set(named)) != len(named):
        check.link_reasons.append("KeyReused")
    return check


def derive_status(bundle: DiplomaBundle, now: int) -> DiplomaStatus:
    expires = bundle.certificate.datagram.expires_at
    if expires is not None and now > expires:
        return DiplomaStatus.EXPIRED
    for upd in reversed(bundle.updates):
        if upd.action is Action.REVOKE:
            return DiplomaStatus.REVOKED
        if upd.action is Action.REINSTATE:
            return DiplomaStatus.ACTIVE
    return DiplomaStatus.ACTIVE


def segments(bundle: DiplomaBundle) -> list[Segment]:
    """Split the bundle's records by the provider each was registered with.

    An update that names a new provider is still registered with the current
    one; records after it go to the new provider, starting from the tethering
    point the update names.
    """
    out = []
    tether = bundle.certificate.datagram.tethering_point
    current = [0]
    for i, upd in enumerate(bundle.updates, start=1):
        current.append(i)
        if upd.new_provider is not None:
            out.append(Segment(tether, tuple(current)))
            tether, current = upd.new_provider, []
    out.append(Segment(tether, tuple(current)))
    return out


def signer_refs(bundle: DiplomaBundle) -> list[bytes]:
    """KeyRef that registered each record, in bundle order."""
    return [bundle.certificate.datagram.creation_key] + [
        crypto.key_ref(u.signer_public_key) for u in bundle.updates
    ]
