"""Sequential completion simulation over ground-truth user turns.

A turn is walked from position 0.  At every suggestion point the truncated
context is sent to the provider, the samples are expanded and ranked, and
the top-k suggestions are compared against the ground-truth remainder.
Among matching suggestions the simulated user greedily accepts the one
consuming the most characters (ties broken by rank); the position then
advances by the consumed characters, landing on a word start where a new
step fires immediately (chained acceptances).  With no match the user
"types" to the next suggestion point.
"""
from __future__ import annotations

import time
from bisect import bisect_right
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from threading import Lock
from typing import Callable, Iterable, Sequence

from .boundaries import SuggestionMode, match, suggestion_points
from .candgen import Candidate, GenConfig, expand, rank_select
from .corpus import PrefixInstance, truncate_context
from .provider import (
    CompletionProvider,
    CompletionRequest,
    ProviderError,
    ProviderTiming,
    SampledCompletion,
)

Clock = Callable[[], float]

# Clock for byte-reproducible runs: local ranking time is recorded as zero.
NULL_CLOCK: Clock = lambda: 0.0


@dataclass(frozen=True)
class Acceptance:
    text: str
    consumed_chars: int
    rank: int


@dataclass(frozen=True)
class StepRecord:
    position: int
    prefix_len: int
    shown: tuple[Candidate, ...]
    accepted: Acceptance | None
    latency_ms: float
    failed: bool = False


@dataclass(frozen=True)
class TurnTrace:
    conversation_id: str
    turn_index: int
    k: int
    steps: tuple[StepRecord, ...]
    accepted_chars_total: int
    acceptance_count: int
    full_turn_len: int
    aborted: bool = False
    abort_reason: str | None = None

    @property
    def trace_id(self) -> str:
        return f"{self.conversation_id}:{self.turn_index}:k{self.k}"


class RequestCache:
    """Shared memo of completion calls keyed by (context, request params).

    Insert-if-absent is atomic; racing computations of the same key all
    observe the first stored value, including its timing.
    """

    def __init__(self) -> None:
        self._data: dict[tuple, tuple[list[SampledCompletion], ProviderTiming]] = {}
        self._lock = Lock()
        self.hits = 0
        self.misses = 0

    def get_or_compute(
        self, key: tuple, compute: Callable[[], tuple[list[SampledCompletion], ProviderTiming]]
    ) -> tuple[list[SampledCompletion], ProviderTiming]:
        with self._lock:
            if key in self._data:
                self.hits += 1
                return self._data[key]
        value = compute()
        with self._lock:
            stored = self._data.setdefault(key, value)
            if stored is value:
                self.misses += 1
            else:
                self.hits += 1
            return stored


def _pick_acceptance(shown: Sequence[Candidate], gt_suffix: str) -> Acceptance | None:
    best: Acceptance | None = None
    for rank, cand in enumerate(shown):
        consumed = match(cand.text, gt_suffix)
        if consumed is None:
            continue
        if best is None or consumed > best.consumed_chars:
            best = Acceptance(text=cand.text, consumed_chars=consumed, rank=rank)
    return best


def simulate_turn(
    instance: PrefixInstance,
    provider: CompletionProvider,
    cfg: GenConfig,
    mode: SuggestionMode,
    *,
    seed: int | None = None,
    cache: RequestCache | None = None,
    clock: Clock = time.perf_counter,
) -> TurnTrace:
    """Simulate the complete turn of ``instance`` and record every step.

    The instance's typed prefix is ignored: simulation always covers the
    whole turn, firing at the suggestion points of the chosen mode.  A
    provider transport error marks the step failed and aborts the turn;
    aborted traces are excluded from aggregation but stay in the report.
    """
    full_turn = instance.prefix + instance.gt_remainder
    if not full_turn:
        raise ValueError("cannot simulate an empty turn")
    base_context = instance.context[: len(instance.context) - len(instance.prefix)]
    points = suggestion_points(full_turn, mode)
    point_set = set(points)

    # Instance-scoped test providers (oracle and friends) are bound to the
    # turn under simulation; their cache entries must not leak across turns
    # that share identical contexts.
    key_scope: tuple = ()
    if getattr(provider, "instance_scoped", False):
        provider = provider.for_instance(instance)
        key_scope = (instance.conversation_id, instance.turn_index)

    steps: list[StepRecord] = []
    accepted_chars = 0
    acceptances = 0
    aborted = False
    abort_reason = None

    pos = 0
    n = len(full_turn)
    while pos < n:
        if pos in point_set:
            context = truncate_context(base_context + full_turn[:pos], cfg.history_cap_chars)
            request = CompletionRequest(
                context_text=context,
                n_samples=cfg.n_c,
                max_tokens=cfg.n_t,
                temperature=cfg.temperature,
                seed=seed,
            )
            key = key_scope + (context, cfg.n_c, cfg.n_t, cfg.temperature, seed)
            try:
                if cache is None:
                    samples, timing = provider.complete(request)
                else:
                    samples, timing = cache.get_or_compute(key, lambda: provider.complete(request))
            except ProviderError as exc:
                steps.append(
                    StepRecord(
                        position=pos, prefix_len=pos, shown=(), accepted=None,
                        latency_ms=0.0, failed=True,
                    )
                )
                aborted = True
                abort_reason = str(exc)
                break

            t0 = clock()
            shown = tuple(rank_select(expand(samples, cfg.policy), cfg.k))
            accepted = _pick_acceptance(shown, full_turn[pos:])
            rank_ms = (clock() - t0) * 1000.0

            steps.append(
                StepRecord(
                    position=pos,
                    prefix_len=pos,
                    shown=shown,
                    accepted=accepted,
                    latency_ms=timing.wall_ms + rank_ms,
                )
            )
            if accepted is not None:
                accepted_chars += accepted.consumed_chars
                acceptances += 1
                pos += accepted.consumed_chars
                continue
        # Simulated typing up to the next suggestion point.
        idx = bisect_right(points, pos)
        if idx >= len(points):
            break
        pos = points[idx]

    return TurnTrace(
        conversation_id=instance.conversation_id,
        turn_index=instance.turn_index,
        k=cfg.k,
        steps=tuple(steps),
        accepted_chars_total=accepted_chars,
        acceptance_count=acceptances,
        full_turn_len=n,
        aborted=aborted,
        abort_reason=abort_reason,
    )


def run_dataset(
    instances: Iterable[PrefixInstance],
    provider: CompletionProvider,
    cfg: GenConfig,
    mode: SuggestionMode,
    k_list: Sequence[int],
    *,
    seed: int | None = None,
    cache: RequestCache | None = None,
    workers: int = 1,
    clock: Clock = time.perf_counter,
) -> list[TurnTrace]:
    """One independent simulate_turn pass per (k, instance), k-major order.

    All passes share one request cache, so identical contexts across k
    values reuse the same samples (and the originally measured timing).
    """
    if not k_list:
        raise ValueError("k_list must be non-empty")
    if list(k_list) != sorted(set(k_list)):
        raise ValueError("k_list must be ascending and distinct")
    instances = list(instances)
    if cache is None:
        cache = RequestCache()

    jobs = [(k, inst) for k in k_list for inst in instances]

    def run(job: tuple[int, PrefixInstance]) -> TurnTrace:
        k, inst = job
        cfg_k = GenConfig(
            n_c=cfg.n_c, n_t=cfg.n_t, k=k, policy=cfg.policy,
            temperature=cfg.temperature, history_cap_chars=cfg.history_cap_chars,
        )
        return simulate_turn(inst, provider, cfg_k, mode, seed=seed, cache=cache, clock=clock)

    if workers <= 1:
        return [run(job) for job in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run, jobs))
