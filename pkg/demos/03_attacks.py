"""What a verifier catches: hidden updates, tampering and equivocation.

Run with ``python3 demos/03_attacks.py``.
"""

from __future__ import annotations

import dataclasses

from diploma.errors import KeyPresent
from diploma.model import Action
from diploma.sim import FailureKind, spawn

sim = spawn(3, 2, seed=11)
sim.add_issuer("uni")

# 1. A revocation is registered but the holder keeps presenting the older
# bundle. The newer record sits under the old bundle's watch key, so no
# absence proof exists for it.
sim.issue("bob", "uni", "n0")
sim.cycle()
sim.update("bob", Action.REVOKE, note="degree withdrawn", hide=True)
sim.cycle()
try:
    sim.prove("bob", "n0")
except KeyPresent as exc:
    print("hidden update:  proof refused,", type(exc).__name__)

# 2. Editing the holder's bundle breaks the issuer signature.
sim.issue("carol", "uni", "n1")
sim.cycle()
sim.prove("carol", "n1")
d = sim.diplomas["carol"]
cert = d.holder_bundle.certificate
forged = dataclasses.replace(cert, datagram=dataclasses.replace(cert.datagram, qualification="PhD"))
d.holder_bundle = dataclasses.replace(d.holder_bundle, certificate=forged)
print("tampered field:", sim.validate("carol").failed_criteria)

# 3. A provider signs two different chain hashes for the same epoch.
sim.issue("dan", "uni", "n2")
sim.issue("erin", "uni", "n1")
sim.fail(FailureKind.EQUIVOCATE, "n2")
sim.cycle()
sim.prove("dan", "n2")
print("equivocation:  ", sim.validate("dan").failed_criteria)
sim.prove("erin", "n1")
print("honest peer:    valid =", sim.validate("erin").valid)
