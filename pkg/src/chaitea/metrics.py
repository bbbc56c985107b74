"""Scores and reports: saved@k, acceptance rate@k, latency stats, histograms.

saved@k for one turn is::

    (accepted_chars_total - acceptance_count) / (full_turn_len - 1)

where accepted characters include consumed separators.  Zero acceptances
score 0; a single acceptance completing the whole turn scores 1.  Reports
macro-average saved@k over turns and micro-average the acceptance rate
over steps; one-character turns (zero denominator) and aborted turns are
excluded from every aggregate and counted instead.
"""
from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass, field
from typing import IO, Iterable, Sequence

from .simulator import TurnTrace


@dataclass(frozen=True)
class TurnScore:
    saved: float
    steps: int
    acceptances: int


def saved_at_k(trace: TurnTrace) -> TurnScore:
    if trace.aborted:
        raise ValueError("aborted traces are not scored")
    if trace.full_turn_len < 2:
        raise ValueError("turns shorter than 2 characters are excluded, not scored")
    saved = (trace.accepted_chars_total - trace.acceptance_count) / (trace.full_turn_len - 1)
    return TurnScore(saved=saved, steps=len(trace.steps), acceptances=trace.acceptance_count)


def acceptance_rate(traces: Sequence[TurnTrace]) -> float:
    """Accepted steps over total steps, pooled across traces."""
    steps = sum(len(t.steps) for t in traces)
    if steps == 0:
        raise ValueError("no steps recorded")
    accepted = sum(1 for t in traces for s in t.steps if s.accepted is not None)
    return accepted / steps


def latency_stats(traces: Sequence[TurnTrace]) -> tuple[float, float]:
    """(mean, nearest-rank p90) of per-step latency in milliseconds."""
    latencies = sorted(s.latency_ms for t in traces for s in t.steps)
    n = len(latencies)
    if n == 0:
        raise ValueError("no steps recorded")
    mean = sum(latencies) / n
    p90 = latencies[(9 * n + 9) // 10 - 1]  # ceil(0.9 n), 1-based
    return mean, p90


def accepted_length_hist(traces: Iterable[TurnTrace]) -> dict[int, int]:
    """Acceptance frequencies by whitespace-token count of the accepted text."""
    hist: Counter[int] = Counter()
    for trace in traces:
        for step in trace.steps:
            if step.accepted is not None:
                hist[len(step.accepted.text.split())] += 1
    return dict(sorted(hist.items()))


@dataclass
class EvalReport:
    k: int
    saved_at_k: float
    acc_rate_at_k: float
    latency_mean_ms: float
    latency_p90_ms: float
    accepted_length_hist: dict[int, int]
    included_turns: int
    excluded_turns: int
    short_turns: int
    aborted_turns: int
    total_steps: int
    total_acceptances: int
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "saved_at_k": self.saved_at_k,
            "acc_rate_at_k": self.acc_rate_at_k,
            "latency_mean_ms": self.latency_mean_ms,
            "latency_p90_ms": self.latency_p90_ms,
            "accepted_length_hist": {str(n): f for n, f in self.accepted_length_hist.items()},
            "included_turns": self.included_turns,
            "excluded_turns": self.excluded_turns,
            "short_turns": self.short_turns,
            "aborted_turns": self.aborted_turns,
            "total_steps": self.total_steps,
            "total_acceptances": self.total_acceptances,
            "config": self.config,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "EvalReport":
        return cls(
            k=obj["k"],
            saved_at_k=obj["saved_at_k"],
            acc_rate_at_k=obj["acc_rate_at_k"],
            latency_mean_ms=obj["latency_mean_ms"],
            latency_p90_ms=obj["latency_p90_ms"],
            accepted_length_hist={int(n): f for n, f in obj["accepted_length_hist"].items()},
            included_turns=obj["included_turns"],
            excluded_turns=obj["excluded_turns"],
            short_turns=obj["short_turns"],
            aborted_turns=obj["aborted_turns"],
            total_steps=obj["total_steps"],
            total_acceptances=obj["total_acceptances"],
            config=obj.get("config", {}),
        )


def aggregate(traces: Sequence[TurnTrace], config: dict | None = None) -> EvalReport:
    """Aggregate traces of one configuration and one k into a report."""
    ks = {t.k for t in traces}
    if len(ks) != 1:
        raise ValueError(f"traces must share one k, got {sorted(ks)}")
    (k,) = ks

    included = []
    short = aborted = 0
    for trace in traces:
        if trace.aborted:
            aborted += 1
        elif trace.full_turn_len < 2:
            short += 1
        else:
            included.append(trace)
    if not included:
        raise ValueError("all turns were excluded; nothing to aggregate")

    scores = [saved_at_k(t) for t in included]
    mean_ms, p90_ms = latency_stats(included)
    return EvalReport(
        k=k,
        saved_at_k=sum(s.saved for s in scores) / len(scores),
        acc_rate_at_k=acceptance_rate(included),
        latency_mean_ms=mean_ms,
        latency_p90_ms=p90_ms,
        accepted_length_hist=accepted_length_hist(included),
        included_turns=len(included),
        excluded_turns=short + aborted,
        short_turns=short,
        aborted_turns=aborted,
        total_steps=sum(len(t.steps) for t in included),
        total_acceptances=sum(t.acceptance_count for t in included),
        config=config or {},
    )


def aggregate_by_k(traces: Sequence[TurnTrace], config: dict | None = None) -> list[EvalReport]:
    """One report per k found in the traces, ascending."""
    by_k: dict[int, list[TurnTrace]] = {}
    for trace in traces:
        by_k.setdefault(trace.k, []).append(trace)
    return [aggregate(by_k[k], config) for k in sorted(by_k)]


def write_k_curve_csv(reports: Sequence[EvalReport], fp: IO[str]) -> None:
    writer = csv.writer(fp, lineterminator="\n")
    writer.writerow(["k", "saved_at_k", "acc_rate_at_k", "latency_mean_ms", "latency_p90_ms"])
    for rep in reports:
        writer.writerow([rep.k, rep.saved_at_k, rep.acc_rate_at_k, rep.latency_mean_ms, rep.latency_p90_ms])


def write_hist_csv(report: EvalReport, fp: IO[str]) -> None:
    writer = csv.writer(fp, lineterminator="\n")
    writer.writerow(["accepted_word_count", "frequency"])
    for words, freq in sorted(report.accepted_length_hist.items()):
        writer.writerow([words, freq])
