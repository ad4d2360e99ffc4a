"""Run every script in demos/scenarios and print its report.

The same scripts run through the command line with
``diploma sim run --script demos/scenarios/<name>.scenario --seed 1``.
"""

from __future__ import annotations

from pathlib import Path

from diploma.scenario import run_scenario

here = Path(__file__).parent / "scenarios"
for path in sorted(here.glob("*.scenario")):
    report = run_scenario(path.read_text(), seed=1)
    print(f"== {path.name}")
    print(report.summary())
    print()
