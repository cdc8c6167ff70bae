"""
Multi-run experiment and calibration-size sweep
===============================================

Run the complete protocol (learning-rate selection on validation AP,
calibration, test evaluation) over several seeds, then vary how many
calibration positives per label are used. The same runs are available from
the command line as ``lamc run`` and ``lamc sweep``.
"""

import sys
import tempfile

from lamc import ExperimentConfig, SyntheticSpec, emit_report, run_experiment, sweep_calibration_size
from lamc.harness import format_table

quick = "--quick" in sys.argv
cfg = ExperimentConfig(
    synthetic=SyntheticSpec(n=2000, d=20, k=10, cardinality=3.0, noise=0.3),
    n_runs=2 if quick else 5,
    epochs=5 if quick else 25,
)

report = run_experiment(cfg)
print(format_table(report))
for run in report.runs:
    print("run", run["run"], "chosen learning rate", run["learning_rate"]["wan"])

###############################################################################
# Calibration-size sweep, reusing the trained model of each run.

sweep = sweep_calibration_size(cfg, [1, 5, 10, 25, "all"])
print(format_table(sweep))

out = tempfile.mkdtemp(prefix="lamc-")
for path in emit_report(report, out) + emit_report(sweep, out):
    print("wrote", path)
