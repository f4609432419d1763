"""Debate benchmark for measuring how far fallacious arguments sway chat models.

A persuader agent argues a claim against a debater agent for up to ten
rounds, optionally with a helper that rewrites each draft as a fallacious
or a logical argument. Moderators end the debate, and the analysis module
turns stored results into success-rate metrics.
"""

from __future__ import annotations

import logging

from .agents import AgentConfig, PromptTemplate, Role, build_opener, load_template, render_template
from .analysis import build_report, export_report
from .backend import BackendConfig, BackendKind, CompletionRequest, CompletionResponse, RetryPolicy, open_backend
from .engine import DebateConfig, DebateRun, conduct_debate, run_debate
from .extractor import ArgumentPair, extract_pairs, verify_labels
from .memory import Memory, TokenBudget, fit_to_budget
from .model import (
    ALL_SCENARIOS,
    Author,
    ChatMessage,
    ClaimRecord,
    DebateResult,
    ScenarioKind,
    Side,
    Stance,
    TerminationReason,
    Transcript,
)
from .moderation import Moderator, master_decision, parse_yes_no
from .runner import ExperimentPlan, ResultsStore, load_claims, run_matrix, sample_dataset
from .simulate import simulated_backends

logging.getLogger(__name__).addHandler(logging.NullHandler())

__version__ = "0.1.0"

__all__ = [
    "ALL_SCENARIOS",
    "AgentConfig",
    "ArgumentPair",
    "Author",
    "BackendConfig",
    "BackendKind",
    "ChatMessage",
    "ClaimRecord",
    "CompletionRequest",
    "CompletionResponse",
    "DebateConfig",
    "DebateResult",
    "DebateRun",
    "ExperimentPlan",
    "Memory",
    "Moderator",
    "PromptTemplate",
    "ResultsStore",
    "RetryPolicy",
    "Role",
    "ScenarioKind",
    "Side",
    "Stance",
    "TerminationReason",
    "TokenBudget",
    "Transcript",
    "build_opener",
    "build_report",
    "conduct_debate",
    "export_report",
    "extract_pairs",
    "fit_to_budget",
    "load_claims",
    "load_template",
    "master_decision",
    "open_backend",
    "parse_yes_no",
    "render_template",
    "run_debate",
    "run_matrix",
    "sample_dataset",
    "simulated_backends",
    "verify_labels",
]
