"""Run every Monte Carlo check at a reduced scale and write the figure CSVs."""

import sys
import tempfile

from repcs import simlab

out = sys.argv[1] if len(sys.argv) > 1 else tempfile.mkdtemp()
small = dict(trials=2000, pool_size=20_000, repeats=50, n_batches=500, minimax_instances=10)

for name in simlab.REGISTRY:
    report = simlab.run(name, simlab.default_config(name, **small))
    simlab.write_report(report, f"{out}/{name}")
    status = "pass" if report.overall_pass else "FAIL"
    print(f"{name:>14}: {status:4}  {report.summary}")

print("reports in", out)
