"""
One debate, start to finish
===========================

A persuader tries to convince a debater of a claim. A helper rewrites each
persuader draft, and three yes/no moderators decide after every round whether
to stop. All agents here are seeded scripted stand-ins, so nothing leaves the
machine and the output is the same on every run.
"""

from logicom import DebateConfig, ScenarioKind, conduct_debate, load_claims, sample_dataset, simulated_backends

# Pick one claim from the bundled sample dataset.
claim = load_claims(sample_dataset())[0]
print(claim.topic)
print("claim:", claim.claim)

# Simulated backends exist for every role, keyed by role name.
backends = simulated_backends(seed=7)
config = DebateConfig.from_backends(ScenarioKind.FALLACIOUS_HELPER, backends)

run = conduct_debate(claim, config, repetition=0)

# Each persuader message after the opener keeps the helper's input draft and
# the fallacy it chose. The debater only ever saw the final text.
for msg in run.transcript.dialogue():
    print(f"\n[{msg.round_index + 1}] {msg.author.value}: {msg.text}")
    if msg.draft_text:
        print(f"    draft: {msg.draft_text}")
        print(f"    fallacy: {msg.fallacy_label}")

r = run.result
print(f"\n{r.termination.value} after {r.rounds_completed} rounds; "
      f"initial stance {r.initial_stance.value}, final stance {r.final_stance.value}")
