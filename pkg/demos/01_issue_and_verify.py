"""Issue one diploma, anchor it, and verify it offline.

Walks through the life of a single certificate using the library directly:
one integrity provider, a three-member ledger with threshold two, and a
relying party that sees only the bundle, the proof and the ledger blocks.

Run with ``python3 demos/01_issue_and_verify.py``.
"""

from __future__ import annotations

import hashlib
import time

from diploma import (
    DiplomaBundle,
    IntegrityProvider,
    Ledger,
    ProvenanceRequest,
    TrustStore,
    build_proof,
    canonical_encode,
    issue_certificate,
    keygen,
    validate,
)
from diploma.ledger import ValidatorMember, ValidatorSet
from diploma.model import submission_for


def seeded(label: str):
    # deterministic keys keep the printed output stable between runs
    return keygen(hashlib.sha256(label.encode()).digest())


# The ledger: three validators, any two of them can produce a block.
validators = [seeded(f"validator {i}") for i in range(3)]
vs = ValidatorSet(tuple(ValidatorMember(f"v{i}", k.public) for i, k in enumerate(validators)), 2)
ledger = Ledger(vs)

# One integrity provider. Its signing key is announced on the ledger and its
# genesis epoch is committed so certificates have something to tether to.
provider = IntegrityProvider("registry-a", seeded("provider a"), key_lookup=ledger.provider_key)
ledger.announce_provider_key(provider.key_history[0])
ledger.submit_commitment(provider.commitment())
ledger.produce_block(validators[:2])

# The issuer signs the certificate. The creation key and the first update key
# are one-time keys; only their references go into the datagram.
issuer = seeded("university")
creation, first_update = seeded("creation key"), seeded("update key 1")
now = int(time.time())
cert = issue_certificate(
    {"holder_id": "Ada Lovelace", "qualification": "MSc Analytical Engines",
     "issuer_id": "uni", "issued_at": now},
    creation.ref, first_update.ref, provider.tethering_point(), issuer,
)
bundle = DiplomaBundle(cert)
print("certificate bytes:", len(canonical_encode(cert)))

# Registration hands the provider only a hash and a one-time signature.
receipt = provider.register(submission_for(cert, creation))
print("registered record:", receipt.sort_key.hex()[:16], "pending for epoch", receipt.epoch_index)

# Seal the epoch, commit its chain hash, and let the validators include it.
provider.seal_epoch()
ledger.submit_commitment(provider.commitment())
block = ledger.produce_block(validators[1:])
print("anchored in block", block.height, "with", len(block.commitments), "commitment(s)")

# The holder asks any node holding the provider's metadata for a proof.
proof = build_proof(ProvenanceRequest.from_bundle(bundle, freshness=4), provider, ledger)
print("proof: segments", len(proof.segments), "absence entries", len(proof.absence_evidence))

# The relying party trusts the issuer key and nothing else.
trust = TrustStore({"uni": (issuer.public,)})
report = validate(bundle, proof, trust, (), vs, ledger.blocks, now, 4)
print()
print(report.summary())
