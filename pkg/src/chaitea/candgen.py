"""Candidate generation: word-prefix expansion, perplexity scoring, top-k ranking.

Sampled completions carry per-token logprobs, so every token prefix that
ends at a word boundary of the decoded text can stand alone as a
suggestion with a well-defined perplexity; a boundary is "the next token's
text starts with whitespace" (or the prefix is the whole sample).
Candidate texts keep their internal joining whitespace but drop trailing
whitespace; the simulator consumes the separator from the ground truth
instead.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

from .provider import SampledCompletion, Terminated


class ExpansionPolicy(str, Enum):
    PARTIAL = "partial"
    SINGLE_WORD = "single_word"
    FULL_ONLY = "full_only"


@dataclass(frozen=True)
class Candidate:
    text: str
    token_logprobs: tuple[float, ...]
    ppl: float
    source_sample: int
    token_count: int


@dataclass(frozen=True)
class GenConfig:
    """Generation hyper-parameters for one evaluation configuration."""

    n_c: int
    n_t: int
    k: int
    policy: ExpansionPolicy = ExpansionPolicy.PARTIAL
    temperature: float = 1.0
    history_cap_chars: int | None = None  # None = full context

    def __post_init__(self) -> None:
        if self.n_c < 1 or self.n_t < 1:
            raise ValueError("n_c and n_t must be >= 1")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.history_cap_chars is not None and self.history_cap_chars < 1:
            raise ValueError("history_cap_chars must be positive or None")


def perplexity(token_logprobs: Sequence[float]) -> float:
    """exp of the negative mean token logprob."""
    if not token_logprobs:
        raise ValueError("empty candidate")
    return math.exp(-sum(token_logprobs) / len(token_logprobs))


def _boundary_prefix_ends(sample: SampledCompletion) -> list[int]:
    """Indices i such that tokens[:i+1] ends at a word boundary."""
    ends = []
    last = len(sample.tokens) - 1
    for i in range(len(sample.tokens)):
        if i == last or sample.tokens[i + 1].text[:1].isspace():
            ends.append(i)
    return ends


def expand(samples: Sequence[SampledCompletion], policy: ExpansionPolicy) -> list[Candidate]:
    """Turn raw samples into standalone candidates (pre-deduplication).

    PARTIAL yields every word-boundary token prefix of every sample,
    SINGLE_WORD only the first such prefix per sample, FULL_ONLY only
    whole samples that terminated at end-of-turn.  Prefixes whose text is
    empty after stripping trailing whitespace yield nothing.
    """
    out: list[Candidate] = []
    for sample_index, sample in enumerate(samples):
        if policy is ExpansionPolicy.FULL_ONLY:
            if sample.terminated_by is not Terminated.EOS:
                continue
            ends = [len(sample.tokens) - 1]
        else:
            ends = _boundary_prefix_ends(sample)
            if policy is ExpansionPolicy.SINGLE_WORD:
                ends = ends[:1]
        text = ""
        upto = 0
        for end in ends:
            text += "".join(t.text for t in sample.tokens[upto : end + 1])
            upto = end + 1
            stripped = text.rstrip()
            if not stripped:
                continue
            logprobs = tuple(t.logprob for t in sample.tokens[: end + 1])
            out.append(
                Candidate(
                    text=stripped,
                    token_logprobs=logprobs,
                    ppl=perplexity(logprobs),
                    source_sample=sample_index,
                    token_count=len(logprobs),
                )
            )
    return out


def rank_select(cands: Sequence[Candidate], k: int) -> list[Candidate]:
    """Deduplicate by text (keeping minimal perplexity) and return the top k.

    The order is total: ascending (ppl, token_count, text), so selection is
    deterministic and the top-k list is a prefix of any larger-k list.
    """
    best: dict[str, Candidate] = {}
    for cand in cands:
        cur = best.get(cand.text)
        if cur is None or (cand.ppl, cand.token_count, cand.source_sample) < (
            cur.ppl,
            cur.token_count,
            cur.source_sample,
        ):
            best[cand.text] = cand
    ranked = sorted(best.values(), key=lambda c: (c.ppl, c.token_count, c.text))
    return ranked[: min(k, len(ranked))]
