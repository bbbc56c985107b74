from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from synthdata import synth_conversations  # noqa: E402

from chaitea import Conversation, Message, NgramModel, Role  # noqa: E402


@pytest.fixture(scope="session")
def toy_conversation() -> Conversation:
    return Conversation(
        id="toy-1",
        messages=(
            Message(Role.PROMPTER, "What is the Sun?"),
            Message(Role.ASSISTANT, "The Sun is a star at the center of the solar system."),
            Message(Role.PROMPTER, "Can you tell me more about suns from other solar systems?"),
        ),
    )


@pytest.fixture(scope="session")
def train_conversations() -> list[Conversation]:
    return synth_conversations(400, seed=11, id_prefix="train")


@pytest.fixture(scope="session")
def eval_conversations() -> list[Conversation]:
    return synth_conversations(60, seed=23, id_prefix="eval")


@pytest.fixture(scope="session")
def trained_model(train_conversations) -> NgramModel:
    return NgramModel.train(train_conversations, order=3)
