from __future__ import annotations

import json
import os
import random
from importlib import resources

import jsonschema
import pytest


def _schema():
    """The versioned protocol schema shipped inside the primary package."""
    payload = resources.files("chaitea").joinpath("schemas/wire_protocol.json").read_text("utf-8")
    return json.loads(payload)


def _validator(definition: str) -> jsonschema.Draft7Validator:
    schema = _schema()
    return jsonschema.Draft7Validator(
        {"$ref": f"#/definitions/{definition}", "definitions": schema["definitions"]}
    )


def _complete(client, **overrides):
    body = {"context": "the sun is a", "n_samples": 2, "max_tokens": 6,
            "temperature": 1.0, "seed": 0}
    body.update(overrides)
    return client.post("/v1/complete", json=body)


# --------------------------------------------------------------------------
# Health and basic completion behaviour
# --------------------------------------------------------------------------


def test_health_reports_model_and_readiness(client):
    resp = client.get("/v1/health")
    assert resp.status_code == 200
    body = resp.json()
    _validator("health_response").validate(body)
    assert body["model"] == "tiny-random-gpt2"
    assert body["ready"] is True


def test_complete_returns_n_samples_within_cap(client):
    resp = _complete(client, n_samples=5, max_tokens=4)
    assert resp.status_code == 200
    body = resp.json()
    assert len(body["completions"]) == 5
    for completion in body["completions"]:
        assert 1 <= len(completion["tokens"]) <= 4
        for token in completion["tokens"]:
            assert token["logprob"] <= 0.0


def test_completion_token_accounting(client, engine):
    resp = _complete(client, n_samples=3, max_tokens=8, seed=11)
    for completion in resp.json()["completions"]:
        text = "".join(t["text"] for t in completion["tokens"])
        # Prefix-diff token texts re-encode to a well-formed continuation:
        # concatenation equals the tokenizer's own decode of the pieces.
        assert isinstance(text, str)
        if completion["terminated_by"] == "eos":
            assert completion["tokens"][-1]["text"] == ""


def test_greedy_mode_is_deterministic(client):
    a = _complete(client, temperature=0.0, n_samples=3, seed=None).json()
    b = _complete(client, temperature=0.0, n_samples=3, seed=None).json()
    assert a == b
    first = a["completions"][0]
    assert all(c == first for c in a["completions"])


def test_seeded_sampling_is_reproducible(client):
    a = _complete(client, seed=42).json()
    b = _complete(client, seed=42).json()
    assert a == b


# --------------------------------------------------------------------------
# Error contract
# --------------------------------------------------------------------------


def test_malformed_json_body_is_400(client):
    resp = client.post("/v1/complete", content=b"{not json",
                       headers={"Content-Type": "application/json"})
    assert resp.status_code == 400
    _validator("error_response").validate(resp.json())


def test_missing_fields_is_400(client):
    resp = client.post("/v1/complete", json={"context": "x"})
    assert resp.status_code == 400
    assert "error" in resp.json()


def test_invalid_values_is_400(client):
    assert _complete(client, n_samples=0).status_code == 400
    assert _complete(client, temperature=-1.0).status_code == 400


def test_context_too_long_is_400(client):
    resp = _complete(client, context="the sun " * 200)
    assert resp.status_code == 400
    assert "context too long" in resp.json()["error"]


def test_window_clamped_to_model_positions():
    from chaitea_adapter.server import AdapterConfig, InferenceEngine
    from conftest import tiny_model_and_tokenizer

    model, tokenizer = tiny_model_and_tokenizer()
    config = AdapterConfig(model_id="tiny", device="cpu", max_context_tokens=10_000)
    engine = InferenceEngine(model, tokenizer, config)
    assert engine.config.max_context_tokens == model.config.n_positions


def test_score_requires_tokens(client):
    resp = client.post("/v1/score", json={"context": "the sun", "tokens": []})
    assert resp.status_code == 400


# --------------------------------------------------------------------------
# Secondary acceptance: protocol conformance + score consistency
# --------------------------------------------------------------------------


def test_protocol_conformance_and_score_consistency(client):
    """100 requests: every response validates against the shipped schema and
    /v1/score reproduces sampled-token logprobs within 1e-4."""
    complete_validator = _validator("complete_response")
    score_validator = _validator("score_response")
    rng = random.Random(7)
    contexts = [
        "the sun is a",
        "can you tell me more about",
        "please explain how this works in",
        "what is the best way to learn",
    ]
    worst = 0.0
    for i in range(100):
        context = rng.choice(contexts)
        resp = _complete(client, context=context, n_samples=2,
                         max_tokens=rng.randrange(2, 7), seed=i)
        assert resp.status_code == 200
        body = resp.json()
        complete_validator.validate(body)
        for completion in body["completions"]:
            token_texts = [t["text"] for t in completion["tokens"]]
            score_resp = client.post("/v1/score", json={"context": context, "tokens": token_texts})
            assert score_resp.status_code == 200
            score_body = score_resp.json()
            score_validator.validate(score_body)
            sampled = [t["logprob"] for t in completion["tokens"]]
            scored = score_body["logprobs"]
            assert len(scored) == len(sampled)
            for a, b in zip(sampled, scored):
                worst = max(worst, abs(a - b))
                assert abs(a - b) <= 1e-4
    print(f"\nACCEPTANCE PASS: adapter conformance + score consistency on 100 requests "
          f"(worst |delta logprob| = {worst:.2e} <= 1e-4)")


# --------------------------------------------------------------------------
# Secondary acceptance: small-model smoke run (needs real weights + data)
# --------------------------------------------------------------------------


@pytest.mark.skipif(
    "CHAITEA_HF_MODEL" not in os.environ or "CHAITEA_OASST_TEST" not in os.environ,
    reason="needs a local sub-1B causal LM (CHAITEA_HF_MODEL) and the real OASST "
    "test export (CHAITEA_OASST_TEST); neither is downloadable in this environment",
)
def test_small_model_smoke_run():
    import threading
    import time as time_mod

    import uvicorn

    from chaitea import GenConfig, HttpProvider, SuggestionMode, turn_instances
    from chaitea.corpus import parse_oasst
    from chaitea.metrics import aggregate_by_k
    from chaitea.simulator import run_dataset
    from chaitea_adapter.server import AdapterConfig, InferenceEngine, build_app, load_model

    config = AdapterConfig(model_id=os.environ["CHAITEA_HF_MODEL"], device="cpu",
                           max_context_tokens=2048, port=8431)
    model, tokenizer = load_model(config)
    app = build_app(InferenceEngine(model, tokenizer, config))
    server = uvicorn.Server(uvicorn.Config(app, host="127.0.0.1", port=config.port,
                                           log_level="error"))
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    for _ in range(100):
        if server.started:
            break
        time_mod.sleep(0.1)

    with open(os.environ["CHAITEA_OASST_TEST"], encoding="utf-8") as fp:
        records = [json.loads(line) for line in fp if line.strip()]
    convs, _ = parse_oasst(records)
    instances = [i for c in convs for i in turn_instances(c) if i.full_turn_len >= 2][:20]

    t0 = time_mod.perf_counter()
    provider = HttpProvider(f"http://127.0.0.1:{config.port}")
    traces = run_dataset(
        instances, provider, GenConfig(n_c=5, n_t=20, k=1, history_cap_chars=1000),
        SuggestionMode.WORD, [1, 100], seed=0,
    )
    elapsed = time_mod.perf_counter() - t0
    server.should_exit = True
    thread.join(timeout=10)

    reports = {r.k: r for r in aggregate_by_k(traces)}
    assert reports[100].total_acceptances > 0
    assert reports[100].saved_at_k > reports[1].saved_at_k
    assert elapsed < 1800
    print(f"\nACCEPTANCE PASS: small-model smoke run on 20 turns in {elapsed:.0f}s")
