"""Revoke, reinstate and move a diploma to another provider.

Each update is signed by the key its predecessor named, so the history is a
chain the issuer alone can extend. A switch is registered at the old provider
(so it cannot be hidden there) and names a tethering point at the new one.

Run with ``python3 demos/02_updates_and_switch.py``.
"""

from __future__ import annotations

from diploma.model import Action
from diploma.sim import spawn

sim = spawn(3, 2, seed=7)
sim.add_issuer("uni")
sim.issue("ada", "uni", "n0", holder_id="Ada Lovelace", qualification="MSc")
sim.cycle()

sim.update("ada", Action.REVOKE, note="transcript under review")
sim.cycle()
sim.prove("ada", "n0")
print("after revoke:    ", sim.validate("ada").status.value)

sim.update("ada", Action.REINSTATE, note="review closed")
sim.cycle()
sim.prove("ada", "n0")
print("after reinstate: ", sim.validate("ada").status.value)

# Move the diploma to n2. Later updates are registered there.
sim.update("ada", Action.ROUTINE, note="registry migration", provider="n2")
sim.cycle()
sim.update("ada", Action.ROUTINE, note="routine key rotation")
sim.cycle()
sim.sync()

# Any synced node can now serve a proof that spans both providers.
for server in ("n0", "n1", "n2"):
    proof = sim.prove("ada", server)
    rep = sim.validate("ada")
    print(f"served by {server}: trail {proof.provider_trail} valid={rep.valid}")

bundle = sim.diplomas["ada"].bundle
print("updates in bundle:", [u.action.value for u in bundle.updates])
