"""Versioned JSONL step log: the sole input for metric recomputation.

Line types (field ``type``):

* ``header`` -- format version plus the resolved run configuration.
* ``step``   -- one StepRecord with its trace identity; shown candidates
  are logged as (text, ppl, token_count, source_sample) projections.
* ``trace``  -- per-turn summary written after the turn's steps.

Serialization is compact, key-sorted and UTF-8, so identical runs produce
byte-identical logs.
"""
from __future__ import annotations

import json
from typing import IO, Iterable

from .candgen import Candidate
from .simulator import Acceptance, StepRecord, TurnTrace

LOG_FORMAT_VERSION = 1


def _dump(obj: dict) -> str:
    return json.dumps(obj, ensure_ascii=False, sort_keys=True, separators=(",", ":"))


def _candidate_row(cand: Candidate) -> dict:
    return {
        "text": cand.text,
        "ppl": cand.ppl,
        "token_count": cand.token_count,
        "source_sample": cand.source_sample,
    }


def write_step_log(traces: Iterable[TurnTrace], fp: IO[str], config: dict | None = None) -> None:
    fp.write(_dump({"type": "header", "format_version": LOG_FORMAT_VERSION, "config": config or {}}))
    fp.write("\n")
    for trace in traces:
        ident = {
            "trace_id": trace.trace_id,
            "conversation_id": trace.conversation_id,
            "turn_index": trace.turn_index,
            "k": trace.k,
            "full_turn_len": trace.full_turn_len,
        }
        for step in trace.steps:
            row = {
                "type": "step",
                **ident,
                "position": step.position,
                "prefix_len": step.prefix_len,
                "latency_ms": step.latency_ms,
                "failed": step.failed,
                "shown": [_candidate_row(c) for c in step.shown],
                "accepted": None
                if step.accepted is None
                else {
                    "text": step.accepted.text,
                    "consumed_chars": step.accepted.consumed_chars,
                    "rank": step.accepted.rank,
                },
            }
            fp.write(_dump(row))
            fp.write("\n")
        summary = {
            "type": "trace",
            **ident,
            "steps": len(trace.steps),
            "accepted_chars_total": trace.accepted_chars_total,
            "acceptance_count": trace.acceptance_count,
            "aborted": trace.aborted,
            "abort_reason": trace.abort_reason,
        }
        fp.write(_dump(summary))
        fp.write("\n")
        fp.flush()  # the log is complete per turn even if the run dies


def read_step_log(fp: IO[str]) -> tuple[dict, list[TurnTrace]]:
    """Rebuild traces from a step log; returns (embedded config, traces).

    Shown candidates are reconstructed without token logprobs (the log
    stores a projection); everything aggregation needs is recovered.
    """
    header = json.loads(fp.readline())
    if header.get("type") != "header" or header.get("format_version") != LOG_FORMAT_VERSION:
        raise ValueError("not a recognized step log")
    steps_by_trace: dict[str, list[StepRecord]] = {}
    order: list[str] = []
    summaries: dict[str, dict] = {}

    for line in fp:
        line = line.strip()
        if not line:
            continue
        row = json.loads(line)
        trace_id = row["trace_id"]
        if row["type"] == "step":
            shown = tuple(
                Candidate(
                    text=c["text"],
                    token_logprobs=(),
                    ppl=c["ppl"],
                    source_sample=c["source_sample"],
                    token_count=c["token_count"],
                )
                for c in row["shown"]
            )
            accepted = row["accepted"]
            steps_by_trace.setdefault(trace_id, []).append(
                StepRecord(
                    position=row["position"],
                    prefix_len=row["prefix_len"],
                    shown=shown,
                    accepted=None
                    if accepted is None
                    else Acceptance(
                        text=accepted["text"],
                        consumed_chars=accepted["consumed_chars"],
                        rank=accepted["rank"],
                    ),
                    latency_ms=row["latency_ms"],
                    failed=row["failed"],
                )
            )
        elif row["type"] == "trace":
            order.append(trace_id)
            summaries[trace_id] = row
        else:
            raise ValueError(f"unknown step-log record type {row['type']!r}")

    traces = []
    for trace_id in order:
        row = summaries[trace_id]
        steps = tuple(steps_by_trace.get(trace_id, ()))
        if len(steps) != row["steps"]:
            raise ValueError(f"step log is missing steps for trace {trace_id!r}")
        traces.append(
            TurnTrace(
                conversation_id=row["conversation_id"],
                turn_index=row["turn_index"],
                k=row["k"],
                steps=steps,
                accepted_chars_total=row["accepted_chars_total"],
                acceptance_count=row["acceptance_count"],
                full_turn_len=row["full_turn_len"],
                aborted=row["aborted"],
                abort_reason=row["abort_reason"],
            )
        )
    return header.get("config", {}), traces
