"""Full validity verdicts, issuer trust, and the process-failure notice board."""

from __future__ import annotations

import dataclasses
import enum
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

from . import crypto
from .crypto import KeyPair
from .encoding import canonical_decode, canonical_encode
from .errors import Rejected
from .ledger import LedgerBlock, LedgerView, ValidatorSet
from .model import DiplomaBundle, DiplomaStatus, derive_status, verify_chain
from .provenance import ProofOfProvenance, verify_proof


@dataclass(frozen=True)
class TrustStore:
    trusted_issuers: dict[str, tuple[bytes, ...]] = field(default_factory=dict)

    def __post_init__(self):
        if any(not keys for keys in self.trusted_issuers.values()):
            raise ValueError("every trusted issuer needs at least one key")

    def is_trusted(self, issuer_id: str | None, public_key: bytes) -> bool:
        if issuer_id is not None:
            return public_key in self.trusted_issuers.get(issuer_id, ())
        return any(public_key in keys for keys in self.trusted_issuers.values())

    def issuers_of(self, public_key: bytes) -> list[str]:
        return sorted(i for i, keys in self.trusted_issuers.items() if public_key in keys)

    def with_issuer(self, issuer_id: str, public_key: bytes) -> TrustStore:
        keys = dict(self.trusted_issuers)
        if public_key not in keys.get(issuer_id, ()):
            keys[issuer_id] = (*keys.get(issuer_id, ()), public_key)
        return TrustStore(keys)

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(canonical_encode(self))

    @classmethod
    def load(cls, path: str | Path) -> TrustStore:
        return canonical_decode(Path(path).read_bytes(), cls)


class NoticeSubject(str, enum.Enum):
    ISSUER_KEY = "IssuerKey"
    PROVIDER_KEY = "ProviderKey"
    PROCESS = "Process"


@dataclass(frozen=True)
class CompromiseNotice:
    """A signed announcement that a key or a process can no longer be trusted.

    ``key_ref`` narrows the notice to one key; without it the notice covers
    every key of ``subject_id``.
    """

    subject: NoticeSubject
    subject_id: str
    effective_from: int
    note: str
    announcer_key: bytes
    signature: bytes
    key_ref: Optional[bytes] = None

    def body(self) -> dict:
        return {
            "kind": "compromise-notice",
            "subject": self.subject,
            "subject_id": self.subject_id,
            "effective_from": self.effective_from,
            "note": self.note,
            "announcer_key": self.announcer_key,
            "key_ref": self.key_ref,
        }

    def verifies(self) -> bool:
        return crypto.verify(self.announcer_key, canonical_encode(self.body()), self.signature)

    def digest(self) -> bytes:
        return crypto.hash(canonical_encode(self))


def make_notice(
    subject: NoticeSubject,
    subject_id: str,
    effective_from: int,
    note: str,
    announcer: KeyPair,
    key_ref: bytes | None = None,
) -> CompromiseNotice:
    unsigned = CompromiseNotice(
        NoticeSubject(subject), subject_id, effective_from, note, announcer.public, b"", key_ref
    )
    sig = crypto.sign(announcer.secret, canonical_encode(unsigned.body()))
    return dataclasses.replace(unsigned, signature=sig)


class NoticeBoard:
    """Append-only, deduplicated board of compromise notices."""

    def __init__(self, notices: Iterable[CompromiseNotice] = ()):
        self._notices: list[CompromiseNotice] = []
        self._seen: set[bytes] = set()
        self._lock = threading.Lock()
        for n in notices:
            self.publish(n)

    def publish(self, n: CompromiseNotice) -> bool:
        """Append ``n``; returns False if an identical notice is already posted."""
        if not n.verifies():
            raise Rejected("notice signature does not verify")
        with self._lock:
            d = n.digest()
            if d in self._seen:
                return False
            self._seen.add(d)
            self._notices.append(n)
            return True

    def list_notices(self) -> list[CompromiseNotice]:
        with self._lock:
            return list(self._notices)

    def __len__(self) -> int:
        return len(self._notices)

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(b"".join(canonical_encode(n) + b"\n" for n in self.list_notices()))

    @classmethod
    def load(cls, path: str | Path) -> NoticeBoard:
        p = Path(path)
        if not p.exists():
            return cls()
        return cls(canonical_decode(line, CompromiseNotice) for line in p.read_bytes().splitlines() if line)


def publish_notice(n: CompromiseNotice, board: NoticeBoard) -> bool:
    return board.publish(n)


def list_notices(board: NoticeBoard) -> list[CompromiseNotice]:
    return board.list_notices()


@dataclass(frozen=True)
class CriterionResult:
    passed: bool
    reasons: tuple[str, ...] = ()


@dataclass(frozen=True)
class ValidationReport:
    authenticity: CriterionResult
    integrity: CriterionResult
    uniqueness: CriterionResult
    fresh: bool
    status: DiplomaStatus
    compromised: bool
    checked_at: int
    compromise_reasons: tuple[str, ...] = ()

    @property
    def valid(self) -> bool:
        return (
            self.authenticity.passed
            and self.integrity.passed
            and self.uniqueness.passed
            and self.fresh
            and not self.compromised
        )

    @property
    def failed_criteria(self) -> list[str]:
        out = [n for n in ("authenticity", "integrity", "uniqueness") if not getattr(self, n).passed]
        if not self.fresh:
            out.append("freshness")
        if self.compromised:
            out.append("compromise")
        return out

    def summary(self) -> str:
        def line(name: str, r: CriterionResult) -> str:
            tail = f" ({', '.join(r.reasons)})" if r.reasons else ""
            return f"{name:<13}{'pass' if r.passed else 'FAIL'}{tail}"

        rows = [
            line("authenticity", self.authenticity),
            line("integrity", self.integrity),
            line("uniqueness", self.uniqueness),
            f"{'freshness':<13}{'pass' if self.fresh else 'FAIL'}",
            f"{'compromised':<13}{'yes' if self.compromised else 'no'}"
            + (f" ({', '.join(self.compromise_reasons)})" if self.compromise_reasons else ""),
            f"{'status':<13}{self.status.value}",
            f"{'valid':<13}{'yes' if self.valid else 'no'}",
        ]
        return "\n".join(rows)


def _one_time_refs(bundle: DiplomaBundle) -> set[bytes]:
    dg = bundle.certificate.datagram
    return {dg.creation_key, dg.update_key, *(u.next_update_key for u in bundle.updates)}


def compromise_reasons(
    bundle: DiplomaBundle,
    provider_trail: Sequence[str],
    notices: Iterable[CompromiseNotice],
    trust: TrustStore,
    view: LedgerView,
) -> list[str]:
    """Notices that apply to this diploma.

    A notice applies when its signature verifies, its announcer speaks for the
    subject, and it covers a key or provider this diploma relies on. Notices
    about institutional or provider keys only reach diplomas issued at or after
    ``effective_from`` (a certificate without an issue time counts as issued
    after every notice). A notice naming one of the diploma's own one-time keys
    applies regardless of time.
    """
    dg = bundle.certificate.datagram
    issuer_ids = set(trust.issuers_of(bundle.certificate.issuer_public_key))
    if dg.issuer_id is not None:
        issuer_ids.add(dg.issuer_id)
    issued = dg.issued_at
    one_time = _one_time_refs(bundle)
    issuer_ref = crypto.key_ref(bundle.certificate.issuer_public_key)
    out = []
    for n in notices:
        if not n.verifies():
            continue
        in_time = issued is None or n.effective_from <= issued
        about_provider = n.subject is NoticeSubject.PROVIDER_KEY or (
            n.subject is NoticeSubject.PROCESS and n.subject_id not in issuer_ids
        )
        if about_provider:
            keys = view.keys.all_keys(n.subject_id)
            if n.subject_id not in provider_trail or n.announcer_key not in keys or not in_time:
                continue
            if n.key_ref is not None and n.key_ref not in {crypto.key_ref(k) for k in keys}:
                continue
        else:
            if n.subject_id not in issuer_ids:
                continue
            if n.announcer_key not in trust.trusted_issuers.get(n.subject_id, ()):
                continue
            if n.key_ref is None or n.key_ref == issuer_ref:
                if not in_time:
                    continue
            elif n.key_ref not in one_time:
                continue
        out.append(f"{n.subject.value}:{n.subject_id}")
    return out


def validate(
    bundle: DiplomaBundle,
    proof: ProofOfProvenance,
    trust: TrustStore,
    notices: Iterable[CompromiseNotice],
    validator_set: ValidatorSet,
    blocks: Sequence[LedgerBlock],
    now: int,
    freshness: int,
    view: LedgerView | None = None,
) -> ValidationReport:
    view = view or LedgerView(blocks, validator_set)
    chain = verify_chain(bundle, trust)
    verdict = verify_proof(proof, bundle, validator_set, blocks, freshness, view=view)
    integrity = list(chain.link_reasons) + verdict.reasons("integrity")
    comp = compromise_reasons(bundle, proof.provider_trail, notices, trust, view)
    return ValidationReport(
        authenticity=CriterionResult(chain.issuer_ok, (chain.issuer_reason,) if chain.issuer_reason else ()),
        integrity=CriterionResult(not integrity, tuple(integrity)),
        uniqueness=CriterionResult(verdict.uniqueness_ok, tuple(verdict.reasons("uniqueness"))),
        fresh=verdict.fresh,
        status=derive_status(bundle, now),
        compromised=bool(comp),
        checked_at=now,
        compromise_reasons=tuple(comp),
    )
