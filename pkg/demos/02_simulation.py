#!/usr/bin/env python3
"""Train the n-gram baseline and watch the suggest/accept loop on one turn.

Run:  python demos/02_simulation.py
"""
import random

from chaitea import (
    Conversation,
    GenConfig,
    Message,
    NgramProvider,
    Role,
    SuggestionMode,
    simulate_turn,
    train_ngram,
    turn_instances,
)

TOPICS = ["the solar system", "black holes", "ancient rome", "machine learning"]
OPENERS = [
    "can you tell me more about {}?",
    "what is the best way to learn about {}?",
    "please explain how {} works in simple terms.",
]
REPLIES = ["Sure, here is a short overview of {}.", "Of course. Let me explain {}."]


def build_corpus(n: int, seed: int) -> list[Conversation]:
    rng = random.Random(seed)
    convs = []
    for i in range(n):
        topic = rng.choice(TOPICS)
        convs.append(
            Conversation(
                id=f"demo-{i}",
                messages=(
                    Message(Role.PROMPTER, rng.choice(OPENERS).format(topic)),
                    Message(Role.ASSISTANT, rng.choice(REPLIES).format(topic)),
                    Message(Role.PROMPTER, "thanks, can you tell me more about the details?"),
                ),
            )
        )
    return convs


def main() -> None:
    model = train_ngram(build_corpus(300, seed=1), order=3)
    print(f"trained an order-3 model, vocabulary size {model.vocab_size}\n")

    target = Conversation(
        id="target",
        messages=(
            Message(Role.PROMPTER, "can you tell me more about black holes?"),
            Message(Role.ASSISTANT, "Sure, here is a short overview of black holes."),
            Message(Role.PROMPTER, "thanks, can you tell me more about the details?"),
        ),
    )
    instance = list(turn_instances(target))[1]
    turn = instance.gt_remainder
    print(f"simulating the turn: {turn!r}\n")

    cfg = GenConfig(n_c=3, n_t=5, k=3)
    trace = simulate_turn(instance, NgramProvider(model), cfg, SuggestionMode.WORD, seed=7)

    for step in trace.steps:
        shown = ", ".join(repr(c.text) for c in step.shown[:3])
        print(f"position {step.position:>2} | typed so far: {turn[:step.position]!r}")
        print(f"             suggestions: {shown}")
        if step.accepted:
            print(f"             ACCEPTED {step.accepted.text!r} "
                  f"(+{step.accepted.consumed_chars} chars, rank {step.accepted.rank})")
        else:
            print("             no match, user keeps typing")
    saved = (trace.accepted_chars_total - trace.acceptance_count) / (trace.full_turn_len - 1)
    print(f"\naccepted {trace.accepted_chars_total}/{trace.full_turn_len} chars "
          f"in {trace.acceptance_count} acceptances -> saved@{cfg.k} = {saved:.2%}")


if __name__ == "__main__":
    main()
