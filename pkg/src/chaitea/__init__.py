"""Offline evaluation harness for autocompleting user turns in chat conversations.

Pipeline: curate conversations into a canonical format, simulate the
sequential suggest/accept loop against ground-truth turns, and report
saved@k, acceptance rate@k and latency statistics across generation
hyper-parameters and latency budgets.
"""
from .boundaries import SuggestionMode, match, suggestion_points
from .candgen import Candidate, ExpansionPolicy, GenConfig, expand, perplexity, rank_select
from .corpus import (
    Conversation,
    Granularity,
    Message,
    PrefixInstance,
    Role,
    enumerate_instances,
    parse_oasst,
    parse_sharegpt,
    serialize_context,
    truncate_context,
    turn_instances,
)
from .metrics import EvalReport, accepted_length_hist, acceptance_rate, aggregate, latency_stats, saved_at_k
from .ngram import NgramModel, NgramProvider, train_ngram
from .provider import (
    CompletionProvider,
    CompletionRequest,
    HttpProvider,
    NullProvider,
    OracleProvider,
    ProviderError,
    ProviderTiming,
    SampledCompletion,
    Terminated,
    TimingOverride,
    Token,
)
from .simulator import Acceptance, RequestCache, StepRecord, TurnTrace, run_dataset, simulate_turn
from .sweep import SweepResult, SweepRow, run_sweep, select_budget_table

__version__ = "0.1.0"

__all__ = [
    "Acceptance",
    "Candidate",
    "CompletionProvider",
    "CompletionRequest",
    "Conversation",
    "EvalReport",
    "ExpansionPolicy",
    "GenConfig",
    "Granularity",
    "HttpProvider",
    "Message",
    "NgramModel",
    "NgramProvider",
    "NullProvider",
    "OracleProvider",
    "PrefixInstance",
    "ProviderError",
    "ProviderTiming",
    "RequestCache",
    "Role",
    "SampledCompletion",
    "StepRecord",
    "SuggestionMode",
    "SweepResult",
    "SweepRow",
    "Terminated",
    "TimingOverride",
    "Token",
    "TurnTrace",
    "accepted_length_hist",
    "acceptance_rate",
    "aggregate",
    "enumerate_instances",
    "expand",
    "latency_stats",
    "match",
    "parse_oasst",
    "parse_sharegpt",
    "perplexity",
    "rank_select",
    "run_dataset",
    "run_sweep",
    "saved_at_k",
    "select_budget_table",
    "serialize_context",
    "simulate_turn",
    "suggestion_points",
    "train_ngram",
    "truncate_context",
    "turn_instances",
]
