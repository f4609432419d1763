"""Seeded stand-in agents for offline runs.

Each responder is a pure function of (seed, salt, role, call index, request),
so a whole experiment replays byte-for-byte. The simulated debater is a
little more easily swayed by fallacy-laden messages, which gives offline
reports something to show.
"""

from __future__ import annotations

import hashlib
import random
import re

from .backend import BackendConfig, BackendKind, CompletionRequest, Responder, Speaker

# Phrases the simulated fallacious helper uses; none contains a label name.
FALLACY_CUES = {
    "Ad Hominem": "Frankly, only someone who has not thought this through would say that.",
    "appeal to emotion": "Think of the families whose lives hang on this.",
    "false information": "Nine out of ten published surveys already settled this question.",
    "causal fallacy": "Ever since this began things have improved, which proves it works.",
    "slippery slope": "If we deny this now, next we will lose everything else too.",
    "appeal to authority": "Leading professors unanimously endorse this view.",
    "appeal to popular opinion": "Most people already accept this; the consensus is overwhelming.",
    "straw man": "So you are saying nothing should ever change at all?",
    "false dilemma": "Either you accept this or you accept the harm; there is no middle ground.",
}
LOGICAL_CUE = "Looking at the evidence carefully and fairly,"

AGREE_REPLIES = (
    "After weighing your points, I agree with the claim.",
    "You have persuaded me. I agree with the claim as stated.",
)
DISAGREE_REPLIES = (
    "I respectfully disagree, because the evidence you cite is incomplete and other factors matter.",
    "I still disagree with the claim; your reasons do not establish it beyond reasonable doubt.",
    "I understand your view, but I disagree, since the argument leaves key objections unanswered.",
)

ROLES = (
    "persuader",
    "debater",
    "fallacious_helper",
    "logical_helper",
    "moderator",
    "moderator_convinced",
    "moderator_topic",
    "moderator_pleasantry",
    "summarizer",
    "verifier",
)


def _rng(seed: int, salt: str, role: str, index: int) -> random.Random:
    digest = hashlib.sha256(f"{seed}|{salt}|{role}|{index}".encode()).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


def _tag(seed: int, salt: str, role: str, index: int) -> str:
    return hashlib.sha256(f"tag|{seed}|{salt}|{role}|{index}".encode()).hexdigest()[:10]


def _last_other(request: CompletionRequest) -> str:
    for speaker, text in reversed(request.turns):
        if speaker is Speaker.OTHER:
            return text
    return ""


def _last_ai_segment(text: str) -> str:
    segments = re.split(r"(?:^|\n\n)(?=AI: )", text)
    ai = [s for s in segments if s.startswith("AI: ")]
    return ai[-1] if ai else ""


def make_responder(role: str, *, seed: int = 0, salt: str = "") -> Responder:
    if role not in ROLES:
        raise ValueError(f"no simulated responder for role {role!r}")

    def persuader(request: CompletionRequest, index: int) -> str:
        tag = _tag(seed, salt, role, index)
        return (f"Point {tag}: the reason I gave still stands once you look at the details. "
                "Do you now accept that the claim is correct?")

    def debater(request: CompletionRequest, index: int) -> str:
        rng = _rng(seed, salt, role, index)
        heard = _last_other(request)
        p_agree = 0.1 if index == 0 else 0.05
        if any(cue in heard for cue in FALLACY_CUES.values()):
            p_agree += 0.07
        elif LOGICAL_CUE in heard:
            p_agree += 0.02
        if rng.random() < p_agree:
            return rng.choice(AGREE_REPLIES)
        return rng.choice(DISAGREE_REPLIES)

    def fallacious_helper(request: CompletionRequest, index: int) -> str:
        rng = _rng(seed, salt, role, index)
        label = rng.choice(sorted(FALLACY_CUES))
        tag = _tag(seed, salt, role, index)
        return (f"FALLACY: {label}\nARGUMENT: {FALLACY_CUES[label]} Revision {tag} makes it plain. "
                "Do you now accept that the claim is correct?")

    def logical_helper(request: CompletionRequest, index: int) -> str:
        tag = _tag(seed, salt, role, index)
        return (f"ARGUMENT: {LOGICAL_CUE} revision {tag} shows the reason supports the claim. "
                "Do you now accept that the claim is correct?")

    def convinced(request: CompletionRequest, index: int) -> str:
        segment = _last_ai_segment(_last_other(request))
        return "YES" if "I agree" in segment else "NO"

    def topic(request: CompletionRequest, index: int) -> str:
        return "NO" if _rng(seed, salt, role, index).random() < 0.01 else "YES"

    def pleasantry(request: CompletionRequest, index: int) -> str:
        return "YES" if _rng(seed, salt, role, index).random() < 0.01 else "NO"

    def moderator(request: CompletionRequest, index: int) -> str:
        system = request.system_text.lower()
        if "pleasantr" in system:
            return pleasantry(request, index)
        if "on topic" in system:
            return topic(request, index)
        return convinced(request, index)

    def summarizer(request: CompletionRequest, index: int) -> str:
        words = _last_other(request).split()
        return " ".join(words[: max(1, min(6, len(words) // 4))])

    def verifier(request: CompletionRequest, index: int) -> str:
        rng = _rng(seed, salt, role, index)
        text = _last_other(request)
        for label, cue in FALLACY_CUES.items():
            if cue in text:
                if rng.random() < 0.9:
                    return label
                return rng.choice([other for other in FALLACY_CUES if other != label])
        return "I am not sure."

    table = {
        "persuader": persuader,
        "debater": debater,
        "fallacious_helper": fallacious_helper,
        "logical_helper": logical_helper,
        "moderator": moderator,
        "moderator_convinced": convinced,
        "moderator_topic": topic,
        "moderator_pleasantry": pleasantry,
        "summarizer": summarizer,
        "verifier": verifier,
    }
    return table[role]


def simulated_backends(seed: int = 0, *, context_window_tokens: int = 8192) -> dict[str, BackendConfig]:
    """Scripted backend configs for every role, driven by the simulated responders."""
    roles = ("persuader", "debater", "fallacious_helper", "logical_helper",
             "moderator_convinced", "moderator_topic", "moderator_pleasantry", "summarizer", "verifier")
    return {
        role: BackendConfig(
            backend_id=f"sim-{role}",
            kind=BackendKind.SCRIPTED,
            context_window_tokens=context_window_tokens,
            simulate=role,
            seed=seed,
        )
        for role in roles
    }
