#!/usr/bin/env python3
"""Aggregate reports, the k curve, and a latency-budget sweep.

Run:  python demos/03_metrics_and_sweep.py
"""
import random

from chaitea import (
    Conversation,
    GenConfig,
    Message,
    NgramProvider,
    Role,
    SuggestionMode,
    run_dataset,
    train_ngram,
    turn_instances,
)
from chaitea.metrics import aggregate_by_k
from chaitea.simulator import RequestCache

OPENERS = [
    "can you tell me more about {}?",
    "what is the best way to learn about {}?",
    "could you give me a short summary of {}?",
]
TOPICS = ["volcanoes", "the deep sea", "electric cars", "photosynthesis"]
REPLY = "Sure, here is a short overview of {}."


def corpus(n: int, seed: int) -> list[Conversation]:
    rng = random.Random(seed)
    out = []
    for i in range(n):
        topic = rng.choice(TOPICS)
        out.append(
            Conversation(
                id=f"c{i}",
                messages=(
                    Message(Role.PROMPTER, rng.choice(OPENERS).format(topic)),
                    Message(Role.ASSISTANT, REPLY.format(topic)),
                    Message(Role.PROMPTER, "thanks, can you give me a simple example of that?"),
                ),
            )
        )
    return out


def main() -> None:
    model = train_ngram(corpus(400, seed=3), order=3)
    instances = [i for c in corpus(40, seed=4) for i in turn_instances(c) if i.full_turn_len >= 2]
    provider = NgramProvider(model)

    print(f"evaluating {len(instances)} turns at k = 1, 3, 100\n")
    traces = run_dataset(
        instances, provider, GenConfig(n_c=3, n_t=5, k=1), SuggestionMode.WORD,
        [1, 3, 100], seed=0, cache=RequestCache(),
    )
    print(f"{'k':>4}  {'saved@k':>8}  {'acc_rate@k':>10}  {'mean ms':>8}  {'p90 ms':>7}")
    for report in aggregate_by_k(traces):
        print(f"{report.k:>4}  {report.saved_at_k:>8.4f}  {report.acc_rate_at_k:>10.4f}  "
              f"{report.latency_mean_ms:>8.2f}  {report.latency_p90_ms:>7.2f}")

    print("\naccepted-completion lengths at k=100 (words -> count):")
    hist = aggregate_by_k(traces)[-1].accepted_length_hist
    for words, freq in hist.items():
        print(f"  {words:>2} words: {'#' * min(freq, 60)} {freq}")

    print("\nsmall hyper-parameter sweep (quality vs latency):")
    from chaitea.sweep import run_sweep

    result = run_sweep(
        instances[:20], provider,
        grid_n_c=(1, 3), grid_n_t=(3, 10), grid_history_cap=(50, None),
        budgets=(5.0, 20.0, float("inf")), seed=0,
    )
    for row in result.rows:
        cap = row.history_cap or "full"
        print(f"  n_c={row.n_c} n_t={row.n_t:>2} cap={cap:>4}  "
              f"saved@100={row.saved_at_100:.4f}  p90={row.latency_p90_ms:.2f}ms")
    print("\nbest configuration per latency budget:")
    for budget, row in result.budget_table:
        label = "unbounded" if budget == float("inf") else f"<= {budget:.0f}ms"
        if row is None:
            print(f"  {label:>10}: no configuration qualifies")
        else:
            print(f"  {label:>10}: n_c={row.n_c} n_t={row.n_t} cap={row.history_cap or 'full'} "
                  f"(saved@100={row.saved_at_100:.4f}, p90={row.latency_p90_ms:.2f}ms)")


if __name__ == "__main__":
    main()
