"""Node failures, association notices and fee counters.

A provider that stops exporting metadata and then crashes strands the
diplomas it registered after it went quiet. Peers answer with
InsufficientMetadata and report the provider to the association.

Run with ``python3 demos/04_network_failures.py``.
"""

from __future__ import annotations

from diploma.errors import InsufficientMetadata
from diploma.sim import FailureKind, spawn

sim = spawn(4, 3, seed=5)
sim.add_issuer("uni")
sim.issue("early", "uni", "n0")
sim.cycle()
sim.sync()

sim.fail(FailureKind.WITHHOLD, "n0")
sim.issue("late", "uni", "n0")
sim.cycle()
sim.sync()
sim.fail(FailureKind.CRASH, "n0")
sim.block()

sim.prove("early", "n1")
print("early diploma via n1: valid =", sim.validate("early").valid)
try:
    sim.prove("late", "n1")
except InsufficientMetadata as exc:
    print("late diploma via n1: ", exc)

for notice in sim.association_log:
    print(f"association notice: {notice.reporter} reports {notice.provider_id} ({notice.reason})")

print()
print(f"{'node':<6}{'registrations':>14}{'proofs':>8}{'bytes shared':>14}")
for node_id, node in sorted(sim.nodes.items()):
    f = node.fees
    print(f"{node_id:<6}{f.registrations:>14}{f.proofs_served:>8}{f.metadata_bytes_shared:>14}")
