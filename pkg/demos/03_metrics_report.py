"""
Metrics from a results store
============================

The report covers the opinion-change rate, per-scenario success statistics,
how consistently each claim was won across repetitions, relative increases
between scenarios and the helper ablation. It can be exported as three CSVs.
"""

import tempfile
from pathlib import Path

from logicom import ExperimentPlan, build_report, export_report, run_matrix, sample_dataset

root = Path(tempfile.mkdtemp())
plan = ExperimentPlan.from_dict({"dataset": str(sample_dataset()), "seed": 7, "output_dir": str(root / "results")})
results = run_matrix(plan).results()

report = build_report(results)
for model, rate in report.rq1.items():
    print(f"opinion-change rate for {model}: {rate:.2%}")

for scenario, stats in report.a1.items():
    print(f"{scenario.value:17s} mean wins {stats.mean_count:.2f}  variance {stats.sample_variance:.2f}  "
          f"rate {stats.rate:.2%}")

# Claims won 0, 1, 2 or 3 times out of three repetitions.
for scenario, hist in report.a2.items():
    print(scenario.value, hist)

for (metric, treatment, baseline), value in report.relative.items():
    print(f"{metric}: {treatment.value} vs {baseline.value}: {value:+.2%}")

for path in export_report(report, results, root / "report"):
    print("wrote", path)
