from __future__ import annotations

import pytest
import torch
from fastapi.testclient import TestClient

from chaitea_adapter.server import AdapterConfig, InferenceEngine, build_app

WORDS = [
    "the", "sun", "is", "a", "star", "can", "you", "tell", "me", "more",
    "about", "black", "holes", "what", "best", "way", "to", "learn",
    "please", "explain", "how", "works", "in", "simple", "terms", "and",
    "of", "system", "solar", "it", "this", "that", "with", "for", "on",
]


def tiny_model_and_tokenizer():
    """A sub-1B causal LM built locally: random weights, word-level tokenizer."""
    from tokenizers import Tokenizer, models, pre_tokenizers
    from transformers import GPT2Config, GPT2LMHeadModel, PreTrainedTokenizerFast

    vocab = {"<unk>": 0, "<eos>": 1}
    for word in WORDS:
        vocab[word] = len(vocab)
    backend = Tokenizer(models.WordLevel(vocab, unk_token="<unk>"))
    backend.pre_tokenizer = pre_tokenizers.Whitespace()
    tokenizer = PreTrainedTokenizerFast(
        tokenizer_object=backend, unk_token="<unk>", eos_token="<eos>"
    )

    torch.manual_seed(1234)
    config = GPT2Config(
        vocab_size=len(vocab),
        n_positions=96,
        n_embd=32,
        n_layer=2,
        n_head=2,
        bos_token_id=1,
        eos_token_id=1,
    )
    model = GPT2LMHeadModel(config)
    model.eval()
    return model, tokenizer


@pytest.fixture(scope="session")
def engine() -> InferenceEngine:
    model, tokenizer = tiny_model_and_tokenizer()
    config = AdapterConfig(model_id="tiny-random-gpt2", device="cpu", max_context_tokens=64)
    return InferenceEngine(model, tokenizer, config)


@pytest.fixture(scope="session")
def client(engine) -> TestClient:
    return TestClient(build_app(engine), raise_server_exceptions=False)
