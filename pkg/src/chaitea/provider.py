"""Completion-provider contract, reference test providers, and the HTTP client.

A provider takes a serialized (possibly truncated) context ending in the
typed prefix and returns sampled continuations with per-token
log-probabilities plus the wall-clock time the request took.  The wire
protocol for remote providers is::

    POST /v1/complete {"context", "n_samples", "max_tokens", "temperature", "seed"}
        -> {"completions": [{"tokens": [{"text", "logprob"}],
                             "terminated_by": "eos"|"token_limit"}],
            "model": str}
    POST /v1/score {"context", "tokens": [str]} -> {"logprobs": [float]}
    GET  /v1/health -> {"model": str, "ready": true}

A machine-readable schema ships in ``chaitea/schemas/wire_protocol.json``.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass
from enum import Enum
from typing import Protocol, runtime_checkable

import requests

from .corpus import PrefixInstance

# Surface text of the end-of-turn marker token.  Keeping it empty means
# candidate texts never carry a terminal marker that could break matching.
EOS_TEXT = ""


class ProviderError(RuntimeError):
    """Transport failure or malformed reply from a completion backend."""


class Terminated(str, Enum):
    EOS = "eos"
    TOKEN_LIMIT = "token_limit"


@dataclass(frozen=True)
class Token:
    text: str
    logprob: float


@dataclass(frozen=True)
class CompletionRequest:
    context_text: str
    n_samples: int
    max_tokens: int
    temperature: float = 1.0
    seed: int | None = None
    stop_at_eos: bool = True

    def __post_init__(self) -> None:
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")


@dataclass(frozen=True)
class SampledCompletion:
    tokens: tuple[Token, ...]
    terminated_by: Terminated

    @property
    def text(self) -> str:
        return "".join(t.text for t in self.tokens)


@dataclass(frozen=True)
class ProviderTiming:
    wall_ms: float


@dataclass(frozen=True)
class TokenScore:
    logprob: float
    unk: bool = False


@runtime_checkable
class CompletionProvider(Protocol):
    def complete(self, req: CompletionRequest) -> tuple[list[SampledCompletion], ProviderTiming]: ...


def _eos_completion() -> SampledCompletion:
    return SampledCompletion(tokens=(Token(EOS_TEXT, 0.0),), terminated_by=Terminated.EOS)


def resolve_remainder(instance: PrefixInstance, context_text: str) -> str | None:
    """Ground-truth remainder implied by a (possibly truncated) request context.

    The request context is the serialized history plus the typed prefix,
    optionally cut down to its trailing characters; recover the typing
    position by matching it against the instance's own serialization.
    """
    base = instance.context[: len(instance.context) - len(instance.prefix)]
    full_turn = instance.prefix + instance.gt_remainder
    if context_text.startswith(base):
        typed = context_text[len(base):]
        if full_turn.startswith(typed):
            return full_turn[len(typed):]
        return None
    # Truncated context: find a typing position whose serialization ends with it.
    for t in range(len(full_turn) + 1):
        if (base + full_turn[:t]).endswith(context_text):
            return full_turn[t:]
    return None


class _BoundOracle:
    def __init__(self, instance: PrefixInstance):
        self._instance = instance

    def complete(self, req: CompletionRequest) -> tuple[list[SampledCompletion], ProviderTiming]:
        t0 = time.perf_counter()
        remainder = resolve_remainder(self._instance, req.context_text)
        if not remainder:
            completion = _eos_completion()
        elif req.max_tokens >= 2:
            completion = SampledCompletion(
                tokens=(Token(remainder, 0.0), Token(EOS_TEXT, 0.0)),
                terminated_by=Terminated.EOS,
            )
        else:
            completion = SampledCompletion(
                tokens=(Token(remainder, 0.0),), terminated_by=Terminated.TOKEN_LIMIT
            )
        wall_ms = (time.perf_counter() - t0) * 1000.0
        return [completion] * req.n_samples, ProviderTiming(wall_ms)


class OracleProvider:
    """Evaluation ceiling that returns the exact ground-truth remainder.

    Instance-scoped: the simulator binds it to the turn being simulated
    (distinct turns can share identical serialized contexts, e.g. every
    first turn of a corpus, so context alone cannot identify the turn).
    """

    instance_scoped = True

    def for_instance(self, instance: PrefixInstance) -> _BoundOracle:
        return _BoundOracle(instance)

    def complete(self, req: CompletionRequest) -> tuple[list[SampledCompletion], ProviderTiming]:
        raise ProviderError("OracleProvider must be bound to an instance by the simulator")


class NullProvider:
    """Evaluation baseline whose suggestions can never match a real turn."""

    # NUL characters cannot survive whitespace-split curation, so no
    # ground-truth turn starts with this text.
    _TEXT = "\x00<no-match>\x00"

    def complete(self, req: CompletionRequest) -> tuple[list[SampledCompletion], ProviderTiming]:
        t0 = time.perf_counter()
        completion = SampledCompletion(
            tokens=(Token(self._TEXT, -1.0),), terminated_by=Terminated.TOKEN_LIMIT
        )
        wall_ms = (time.perf_counter() - t0) * 1000.0
        return [completion] * req.n_samples, ProviderTiming(wall_ms)


class TimingOverride:
    """Wrap a provider and report a fixed wall time instead of the measured one.

    Measured wall clock is inherently non-reproducible; runs that must be
    byte-identical wrap their provider with ``TimingOverride(p, 0.0)``.
    """

    def __init__(self, inner: CompletionProvider, wall_ms: float = 0.0):
        self._inner = inner
        self._wall_ms = wall_ms
        self.instance_scoped = getattr(inner, "instance_scoped", False)

    def for_instance(self, instance: PrefixInstance) -> "TimingOverride":
        return TimingOverride(self._inner.for_instance(instance), self._wall_ms)

    def complete(self, req: CompletionRequest) -> tuple[list[SampledCompletion], ProviderTiming]:
        completions, _ = self._inner.complete(req)
        return completions, ProviderTiming(self._wall_ms)

    def __getattr__(self, name: str):
        return getattr(self._inner, name)


class CountingProvider:
    """Wrap a provider and count complete() calls (test instrumentation)."""

    def __init__(self, inner: CompletionProvider, counter: list[int] | None = None):
        self._inner = inner
        self._counter = counter if counter is not None else [0]
        self.instance_scoped = getattr(inner, "instance_scoped", False)

    def for_instance(self, instance: PrefixInstance) -> "CountingProvider":
        return CountingProvider(self._inner.for_instance(instance), self._counter)

    @property
    def calls(self) -> int:
        return self._counter[0]

    def complete(self, req: CompletionRequest) -> tuple[list[SampledCompletion], ProviderTiming]:
        self._counter[0] += 1
        return self._inner.complete(req)

    def __getattr__(self, name: str):
        return getattr(self._inner, name)


class HttpProvider:
    """Client for remote model servers speaking the wire protocol.

    Retries are intentionally off: a retry would be invisible in the
    reported latency and distort the measurement.
    """

    def __init__(self, endpoint: str, timeout_s: float = 120.0):
        self.endpoint = endpoint.rstrip("/")
        self.timeout_s = timeout_s
        self.empty_completions = 0
        self._session = requests.Session()

    def _post(self, path: str, payload: dict) -> dict:
        url = f"{self.endpoint}{path}"
        try:
            resp = self._session.post(url, json=payload, timeout=self.timeout_s)
        except requests.RequestException as exc:
            raise ProviderError(f"request to {url} failed: {exc}") from exc
        if resp.status_code != 200:
            detail = ""
            try:
                detail = resp.json().get("error", "")
            except ValueError:
                pass
            raise ProviderError(f"{url} returned {resp.status_code}: {detail}")
        try:
            return resp.json()
        except ValueError as exc:
            raise ProviderError(f"{url} returned a non-JSON body") from exc

    def complete(self, req: CompletionRequest) -> tuple[list[SampledCompletion], ProviderTiming]:
        payload = {
            "context": req.context_text,
            "n_samples": req.n_samples,
            "max_tokens": req.max_tokens,
            "temperature": req.temperature,
            "seed": req.seed,
        }
        t0 = time.perf_counter()
        body = self._post("/v1/complete", payload)
        wall_ms = (time.perf_counter() - t0) * 1000.0

        raw = body.get("completions")
        if not isinstance(raw, list) or len(raw) != req.n_samples:
            raise ProviderError(
                f"{self.endpoint}/v1/complete returned {0 if not isinstance(raw, list) else len(raw)}"
                f" completions, expected {req.n_samples}"
            )
        completions = []
        for entry in raw:
            try:
                tokens = tuple(Token(t["text"], float(t["logprob"])) for t in entry["tokens"])
                terminated = Terminated(entry["terminated_by"])
            except (KeyError, TypeError, ValueError) as exc:
                raise ProviderError(f"{self.endpoint}/v1/complete returned a malformed completion") from exc
            if not tokens:
                self.empty_completions += 1
                completions.append(_eos_completion())
                continue
            if len(tokens) > req.max_tokens:
                raise ProviderError(f"{self.endpoint}/v1/complete exceeded max_tokens")
            if any(not math.isfinite(t.logprob) or t.logprob > 0 for t in tokens):
                raise ProviderError(f"{self.endpoint}/v1/complete returned an invalid logprob")
            completions.append(SampledCompletion(tokens=tokens, terminated_by=terminated))
        return completions, ProviderTiming(wall_ms)

    def score(self, context_text: str, forced_tokens: list[str]) -> list[TokenScore]:
        if not forced_tokens:
            raise ValueError("forced_tokens must be non-empty")
        body = self._post("/v1/score", {"context": context_text, "tokens": forced_tokens})
        logprobs = body.get("logprobs")
        if not isinstance(logprobs, list) or len(logprobs) != len(forced_tokens):
            raise ProviderError(f"{self.endpoint}/v1/score returned a malformed reply")
        return [TokenScore(float(lp)) for lp in logprobs]

    def health(self) -> dict:
        url = f"{self.endpoint}/v1/health"
        try:
            resp = self._session.get(url, timeout=self.timeout_s)
        except requests.RequestException as exc:
            raise ProviderError(f"request to {url} failed: {exc}") from exc
        if resp.status_code != 200:
            raise ProviderError(f"{url} returned {resp.status_code}")
        return resp.json()
