"""HTTP completion server exposing causal language models over the wire protocol.

Endpoints::

    POST /v1/complete   sample n continuations with per-token logprobs
    POST /v1/score      logprobs of a forced continuation
    GET  /v1/health     model id and readiness

Sampling is pure temperature sampling (temperature 0 = greedy argmax);
recorded logprobs are always the model's unscaled conditionals, so
/v1/score reproduces them.  Requests are serialized through one lock by
default: overlapping inference would distort the latency the evaluation
harness measures.  Contexts longer than the model window are rejected
with 400 "context too long"; the client is expected to truncate.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Any

import torch
import torch.nn.functional as F
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field


@dataclass
class AdapterConfig:
    model_id: str
    device: str = "cpu"
    max_context_tokens: int = 2048
    port: int = 8400
    max_batch: int = 8
    default_decoding: dict[str, Any] = field(default_factory=lambda: {"strategy": "temperature_sampling"})

    def __post_init__(self) -> None:
        if self.max_context_tokens <= 0:
            raise ValueError("max_context_tokens must be > 0")
        if self.max_batch < 1:
            raise ValueError("max_batch must be >= 1")


class CompleteBody(BaseModel):
    context: str
    n_samples: int = Field(ge=1)
    max_tokens: int = Field(ge=1)
    temperature: float = Field(ge=0.0)
    seed: int | None = Field(default=None, ge=0)


class ScoreBody(BaseModel):
    context: str
    tokens: list[str] = Field(min_length=1)


class ContextTooLong(Exception):
    pass


def load_model(config: AdapterConfig):
    from transformers import AutoModelForCausalLM, AutoTokenizer

    tokenizer = AutoTokenizer.from_pretrained(config.model_id)
    model = AutoModelForCausalLM.from_pretrained(config.model_id)
    model.to(config.device)
    model.eval()
    return model, tokenizer


class InferenceEngine:
    """Sampling and scoring around one loaded model; one request at a time."""

    def __init__(self, model, tokenizer, config: AdapterConfig):
        self.model = model
        self.tokenizer = tokenizer
        self.config = config
        self._lock = threading.Lock()
        if tokenizer.eos_token_id is None:
            raise ValueError("the adapter requires a tokenizer with an EOS token")
        self.eos_id = tokenizer.eos_token_id
        model_window = getattr(model.config, "max_position_embeddings", None) or getattr(
            model.config, "n_positions", None
        )
        if model_window:
            self.config.max_context_tokens = min(config.max_context_tokens, int(model_window))

    # -- helpers -----------------------------------------------------------

    def _encode_context(self, context: str) -> list[int]:
        ids = self.tokenizer.encode(context, add_special_tokens=False)
        if not ids and self.tokenizer.bos_token_id is not None:
            ids = [self.tokenizer.bos_token_id]
        if not ids:
            raise ContextTooLong("context encodes to zero tokens")
        return ids

    def _check_window(self, context_len: int, extra: int) -> None:
        if context_len + extra > self.config.max_context_tokens:
            raise ContextTooLong("context too long")

    def _decode(self, ids: list[int]) -> str:
        return self.tokenizer.decode(ids, skip_special_tokens=False,
                                     clean_up_tokenization_spaces=False)

    def _token_texts(self, generated_ids: list[int]) -> list[str]:
        """Per-token surface text via prefix-diff decoding.

        The concatenation equals the decoded completion.  Specials stay
        visible so /v1/score can re-encode every surface to the id that was
        sampled; only the terminal end-of-turn token becomes the empty
        marker string.
        """
        trailing_eos = bool(generated_ids) and generated_ids[-1] == self.eos_id
        visible = generated_ids[:-1] if trailing_eos else generated_ids
        texts = []
        previous = ""
        for j in range(1, len(visible) + 1):
            current = self._decode(visible[:j])
            if current.startswith(previous):
                texts.append(current[len(previous):])
            else:  # non-prefix-stable decode; fall back to the raw piece
                texts.append(self._decode(visible[j - 1 : j]))
            previous = current
        if trailing_eos:
            texts.append("")
        return texts

    # -- endpoints ---------------------------------------------------------

    def complete(self, body: CompleteBody) -> dict:
        with self._lock:
            return self._complete_locked(body)

    @torch.no_grad()
    def _complete_locked(self, body: CompleteBody) -> dict:
        ids = self._encode_context(body.context)
        self._check_window(len(ids), body.max_tokens)
        device = self.config.device

        completions = []
        generator = torch.Generator(device=device)
        generator.manual_seed(body.seed if body.seed is not None else torch.seed() % (2**63))

        for start in range(0, body.n_samples, self.config.max_batch):
            width = min(self.config.max_batch, body.n_samples - start)
            batch = torch.tensor([ids] * width, dtype=torch.long, device=device)
            past = None
            step_input = batch
            done = [False] * width
            token_ids: list[list[int]] = [[] for _ in range(width)]
            token_lps: list[list[float]] = [[] for _ in range(width)]

            for _ in range(body.max_tokens):
                output = self.model(input_ids=step_input, past_key_values=past, use_cache=True)
                past = output.past_key_values
                logits = output.logits[:, -1, :]
                logprobs = F.log_softmax(logits.float(), dim=-1)
                if body.temperature == 0.0:
                    next_ids = logits.argmax(dim=-1)
                else:
                    probs = F.softmax(logits.float() / body.temperature, dim=-1)
                    next_ids = torch.multinomial(probs, 1, generator=generator).squeeze(1)
                for b in range(width):
                    if done[b]:
                        continue
                    token_id = int(next_ids[b])
                    token_ids[b].append(token_id)
                    token_lps[b].append(float(logprobs[b, token_id]))
                    if token_id == self.eos_id:
                        done[b] = True
                if all(done):
                    break
                step_input = next_ids.unsqueeze(1)

            for b in range(width):
                texts = self._token_texts(token_ids[b])
                completions.append(
                    {
                        "tokens": [
                            {"text": text, "logprob": min(lp, 0.0)}
                            for text, lp in zip(texts, token_lps[b])
                        ],
                        "terminated_by": "eos" if done[b] else "token_limit",
                    }
                )
        return {"completions": completions, "model": self.config.model_id}

    def score(self, body: ScoreBody) -> dict:
        with self._lock:
            return self._score_locked(body)

    @torch.no_grad()
    def _score_locked(self, body: ScoreBody) -> dict:
        context_ids = self._encode_context(body.context)
        groups: list[list[int]] = []
        for text in body.tokens:
            if text == "":
                groups.append([self.eos_id])
                continue
            piece = self.tokenizer.encode(text, add_special_tokens=False)
            if not piece:
                unk = self.tokenizer.unk_token_id
                piece = [unk if unk is not None else self.eos_id]
            groups.append(piece)
        flat = [tid for group in groups for tid in group]
        self._check_window(len(context_ids), len(flat))

        ids = torch.tensor([context_ids + flat], dtype=torch.long, device=self.config.device)
        logits = self.model(input_ids=ids).logits[0]
        logprobs = F.log_softmax(logits.float(), dim=-1)

        out = []
        offset = len(context_ids)
        for group in groups:
            total = 0.0
            for tid in group:
                total += float(logprobs[offset - 1, tid])
                offset += 1
            out.append(min(total, 0.0))
        return {"logprobs": out}

    def health(self) -> dict:
        return {
            "model": self.config.model_id,
            "ready": True,
            "decoding": self.config.default_decoding,
            "max_context_tokens": self.config.max_context_tokens,
        }


def _error(status: int, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": message})


def build_app(engine: InferenceEngine) -> FastAPI:
    app = FastAPI(title="chaitea adapter", docs_url=None, redoc_url=None)

    @app.exception_handler(RequestValidationError)
    async def _validation_handler(request: Request, exc: RequestValidationError):
        return _error(400, f"invalid request: {exc.errors()[0].get('msg', 'validation failed')}")

    @app.exception_handler(ContextTooLong)
    async def _too_long_handler(request: Request, exc: ContextTooLong):
        return _error(400, str(exc))

    @app.exception_handler(torch.cuda.OutOfMemoryError)
    async def _oom_handler(request: Request, exc: torch.cuda.OutOfMemoryError):
        return _error(503, "out of memory")

    @app.post("/v1/complete")
    def complete(body: CompleteBody):
        return engine.complete(body)

    @app.post("/v1/score")
    def score(body: ScoreBody):
        return engine.score(body)

    @app.get("/v1/health")
    def health():
        return engine.health()

    return app
