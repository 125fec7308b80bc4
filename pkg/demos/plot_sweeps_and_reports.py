"""
Sweeps and reports
==================

Sweep the mixture weight on shared episodes and write the report in both
formats. The same run is available from the shell as
``ata ablate --axis beta --values 0,0.5,1``.
"""

import json

from ata import EpisodeSpec, SyntheticSpec, generate, schema_path, sweep, write_report

ds = generate(SyntheticSpec(family="mixed", num_classes=10))
report = sweep("beta", [0.0, 0.5, 1.0], ds, EpisodeSpec(num_episodes=100))
for value, point in report.points:
    lo, hi = point.interval()
    print(f"beta={value}: {point.mean_accuracy:.3f} [{lo:.3f}, {hi:.3f}]")

###############################################################################
# JSON reports echo the full configuration and follow a published schema.

doc = json.loads(write_report(report))
print(sorted(doc["points"][0]["report"]["config"]))
print("schema:", schema_path())
print(write_report(report, fmt="csv").splitlines()[0])
