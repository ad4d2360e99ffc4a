"""Offline digital diplomas anchored through integrity providers and a ledger."""

from .crypto import KeyPair, hash, key_ref, keygen, sign, verify
from .encoding import canonical_decode, canonical_encode
from .epochs import AbsenceProof, Epoch, EpochHeader, TetheringPoint, TransactionRecord
from .errors import DiplomaError
from .ledger import Commitment, Ledger, LedgerBlock, LedgerView, ValidatorSet, verify_block
from .model import (
    Action,
    DiplomaBundle,
    DiplomaStatus,
    InitialCertificate,
    UpdateRecord,
    append_update,
    derive_status,
    issue_certificate,
    make_submission,
    record_hash,
    verify_chain,
)
from .provenance import ProofOfProvenance, ProvenanceRequest, build_proof, verify_proof
from .provider import IntegrityProvider, aggregate_private
from .validation import CompromiseNotice, NoticeBoard, TrustStore, ValidationReport, validate

__version__ = "0.1.0"

__all__ = [
    "AbsenceProof",
    "Action",
    "Commitment",
    "CompromiseNotice",
    "DiplomaBundle",
    "DiplomaError",
    "DiplomaStatus",
    "Epoch",
    "EpochHeader",
    "InitialCertificate",
    "IntegrityProvider",
    "KeyPair",
    "Ledger",
    "LedgerBlock",
    "LedgerView",
    "NoticeBoard",
    "ProofOfProvenance",
    "ProvenanceRequest",
    "TetheringPoint",
    "TransactionRecord",
    "TrustStore",
    "UpdateRecord",
    "ValidationReport",
    "ValidatorSet",
    "aggregate_private",
    "append_update",
    "build_proof",
    "canonical_decode",
    "canonical_encode",
    "derive_status",
    "hash",
    "issue_certificate",
    "key_ref",
    "keygen",
    "make_submission",
    "record_hash",
    "sign",
    "validate",
    "verify",
    "verify_block",
    "verify_chain",
    "verify_proof",
]
