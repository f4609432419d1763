"""
Running the experiment matrix
=============================

Every claim is debated under each scenario, several times. Results land in a
directory holding one transcript per debate plus a manifest. Running again
picks up where the last run stopped.
"""

import tempfile
from pathlib import Path

from logicom import ExperimentPlan, run_matrix, sample_dataset

out = Path(tempfile.mkdtemp()) / "results"

# A plan with only a seed runs on simulated backends.
plan = ExperimentPlan.from_dict({"dataset": str(sample_dataset()), "seed": 7, "output_dir": str(out)})
store = run_matrix(plan)
print(f"{len(store.executed)} debates executed, {len(store)} stored under {out}")

# Drop two results and run again: only those two debates are re-run.
for key in [r.key for r in store.results()][:2]:
    store.discard(key)
again = run_matrix(plan)
print("re-run:", again.executed)

# A quick look at how debates ended.
ends = {}
for r in again.results():
    ends[r.termination.value] = ends.get(r.termination.value, 0) + 1
print(ends)
