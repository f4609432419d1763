"""
Building the argument-pair dataset
==================================

Each helper-revised message in a FallaciousHelper debate yields one pair: the
persuader's draft and the fallacious rewrite, with the fallacy label. A
verifier agent then checks the labels.
"""

import tempfile
from pathlib import Path

from logicom import AgentConfig, ExperimentPlan, Role, ScenarioKind, extract_pairs, run_matrix, sample_dataset
from logicom import simulated_backends
from logicom.extractor import summarize_pairs, verify_labels, write_pairs

root = Path(tempfile.mkdtemp())
plan = ExperimentPlan.from_dict({
    "dataset": str(sample_dataset()),
    "seed": 3,
    "output_dir": str(root / "results"),
    "scenarios": [ScenarioKind.FALLACIOUS_HELPER.value],
    "repetitions": 1,
})
store = run_matrix(plan)

pairs = extract_pairs(store)
print(len(pairs), "pairs")
first = pairs[0]
print("draft:     ", first.logical_text)
print("fallacious:", first.fallacious_text)
print("label:     ", first.fallacy_label)

verifier = AgentConfig(Role.VERIFIER, simulated_backends(3)["verifier"]).open()
checked = verify_labels(pairs, verifier)
print(summarize_pairs(checked))
print("wrote", write_pairs(checked, root / "argument_pairs.jsonl"))
