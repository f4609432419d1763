"""
Fitting a long history into a small context window
==================================================

When a request would not fit, the oldest intermediate messages are
summarized one at a time. The opener and the latest message are never
touched, and the summaries travel with the system prompt.
"""

from logicom import ChatMessage, Author, ScenarioKind, TokenBudget, Transcript, fit_to_budget
from logicom.backend import whitespace_tokens
from logicom.memory import context_tokens

messages = []
for i in range(8):
    author = Author.PERSUADER if i % 2 == 0 else Author.DEBATER
    messages.append(ChatMessage(author, " ".join(f"word{i}_{k}" for k in range(12)), i // 2))
history = Transcript("demo", ScenarioKind.NO_HELPER, 0, tuple(messages))
system = "You are a careful debater."

print("full context:", context_tokens(history, system, whitespace_tokens), "tokens")


def summarizer(batch):
    # Any callable from messages to text works; a real one would ask a model.
    return f"gist of round {batch[0].round_index + 1}"


budget = TokenBudget(context_window=100, reserved_output=20)
fitted = fit_to_budget(history, budget, summarizer, whitespace_tokens, system)

print("budget:", budget.effective_budget, "tokens; fitted:", context_tokens(fitted, system, whitespace_tokens))
print("kept", len(fitted.messages), "of", len(history.messages), "messages")
print("summary note:\n" + fitted.summary_note)
assert fitted.messages[0] == history.messages[0] and fitted.messages[-1] == history.messages[-1]
