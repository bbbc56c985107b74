"""Seeded word-level n-gram language model used as the offline baseline provider.

The model is trained on whitespace-separated tokens of serialized
conversations (role tags included), with a reserved end-of-turn token
appended after every message and a reserved unknown-word token carrying a
unigram floor.  Conditionals interpolate maximum-likelihood estimates
across orders with fixed weights:

    P(w | h) = sum_o  lambda_o * count_o(h_o, w) / count_o(h_o)

where the sum runs over orders whose context was observed (order 1
always qualifies) and the fixed weights are renormalized over those
orders.  This keeps every conditional an exact probability distribution,
which the tests assert to 1e-6.

Sampling draws an order with probability lambda_o and then a continuation
from that order's counts, which is exactly equivalent to sampling from the
interpolated distribution and avoids materializing it.  Each sample chain
derives its RNG from (seed, context, temperature, sample index), so a
completion for a given context is reproducible regardless of request
order, worker count, or which run it happens in.
"""
from __future__ import annotations

import hashlib
import json
import math
import random
import time
from bisect import bisect_right
from dataclasses import dataclass
from typing import IO, Sequence

from .corpus import ASSISTANT_TAG, PROMPTER_TAG, Conversation, Role
from .provider import (
    EOS_TEXT,
    CompletionRequest,
    ProviderTiming,
    SampledCompletion,
    Terminated,
    Token,
    TokenScore,
)

# Reserved tokens.  The NUL prefix cannot appear in whitespace-split input.
EOT = "\x00eot"
UNK = "\x00unk"
UNK_SURFACE = "<unk>"

MODEL_FORMAT = "ngram-v1"
MAX_ORDER = 5

# Fixed interpolation weights, highest order first.  A model of order k
# uses the first k entries renormalized to sum to 1; order 4 gets the
# documented defaults 0.6/0.25/0.1/0.05 exactly.
_WEIGHT_PROFILE = (0.6, 0.25, 0.1, 0.05, 0.05)


def default_weights(order: int) -> tuple[float, ...]:
    if not 1 <= order <= MAX_ORDER:
        raise ValueError(f"order must be in 1..{MAX_ORDER}")
    head = _WEIGHT_PROFILE[:order]
    total = sum(head)
    return tuple(w / total for w in head)


def conversation_tokens(conv: Conversation) -> list[str]:
    """Whitespace tokens of the serialized conversation with end-of-turn marks."""
    out: list[str] = []
    for msg in conv.messages:
        tag = PROMPTER_TAG if msg.role is Role.PROMPTER else ASSISTANT_TAG
        out.append(tag)
        out.extend(msg.text.split())
        out.append(EOT)
    return out


def tokenize_context(context_text: str) -> list[str]:
    """Tokenize a serialized context, re-inserting end-of-turn marks.

    Serialized contexts carry no explicit end-of-turn token, but training
    sequences do; each line that starts a new tagged message therefore
    closes the previous one.  The final (in-progress) turn stays open.
    Truncated leading fragments are tolerated as ordinary tokens.
    """
    out: list[str] = []
    for line in context_text.split("\n"):
        words = line.split()
        if words and words[0] in (PROMPTER_TAG, ASSISTANT_TAG) and out:
            out.append(EOT)
        out.extend(words)
    return out


@dataclass(frozen=True)
class _CtxDist:
    """Frozen continuation counts for one observed context."""

    tokens: tuple[str, ...]       # sorted
    counts: tuple[int, ...]
    cumulative: tuple[int, ...]
    total: int
    by_token: dict[str, int]

    @staticmethod
    def from_counts(counts: dict[str, int]) -> "_CtxDist":
        tokens = tuple(sorted(counts))
        vals = tuple(counts[t] for t in tokens)
        cum = []
        running = 0
        for v in vals:
            running += v
            cum.append(running)
        return _CtxDist(tokens, vals, tuple(cum), running, dict(zip(tokens, vals)))


class NgramModel:
    """Immutable after construction; safe to share across workers."""

    def __init__(self, order: int, weights: tuple[float, ...], tables: list[dict[tuple[str, ...], _CtxDist]]):
        self.order = order
        self.weights = weights
        # tables[o-1] maps (o-1)-token contexts to continuation counts.
        self._tables = tables
        self._unigram = tables[0][()]

    # -- training ----------------------------------------------------------

    @classmethod
    def train(
        cls,
        convs: Sequence[Conversation],
        order: int,
        weights: Sequence[float] | None = None,
    ) -> "NgramModel":
        if not 1 <= order <= MAX_ORDER:
            raise ValueError(f"order must be in 1..{MAX_ORDER}")
        if weights is None:
            weights = default_weights(order)
        else:
            weights = tuple(float(w) for w in weights)
            if len(weights) != order:
                raise ValueError("need exactly one weight per order")
            total = sum(weights)
            if total <= 0:
                raise ValueError("weights must sum to a positive value")
            weights = tuple(w / total for w in weights)

        raw: list[dict[tuple[str, ...], dict[str, int]]] = [dict() for _ in range(order)]
        n_tokens = 0
        for conv in convs:
            seq = conversation_tokens(conv)
            n_tokens += len(seq)
            for i, target in enumerate(seq):
                for o in range(1, order + 1):
                    if i < o - 1:
                        continue
                    ctx = tuple(seq[i - o + 1 : i])
                    table = raw[o - 1]
                    dist = table.get(ctx)
                    if dist is None:
                        table[ctx] = {target: 1}
                    else:
                        dist[target] = dist.get(target, 0) + 1
        if n_tokens == 0:
            raise ValueError("empty training corpus")

        # Unigram floor for unknown words.
        raw[0].setdefault((), {})
        raw[0][()][UNK] = raw[0][()].get(UNK, 0) + 1

        tables = [
            {ctx: _CtxDist.from_counts(counts) for ctx, counts in table.items()}
            for table in raw
        ]
        return cls(order, tuple(weights), tables)

    # -- probabilities -----------------------------------------------------

    def _available(self, history: Sequence[str]) -> list[tuple[float, _CtxDist]]:
        """(renormalized weight, distribution) per order with an observed context."""
        picks: list[tuple[float, _CtxDist]] = []
        total = 0.0
        for o in range(self.order, 0, -1):
            if len(history) < o - 1:
                continue
            ctx = tuple(history[len(history) - o + 1 :]) if o > 1 else ()
            dist = self._tables[o - 1].get(ctx)
            if dist is not None:
                weight = self.weights[self.order - o]
                picks.append((weight, dist))
                total += weight
        return [(w / total, d) for w, d in picks]

    def vocab(self) -> tuple[str, ...]:
        return self._unigram.tokens

    @property
    def vocab_size(self) -> int:
        return len(self._unigram.tokens)

    def known(self, token: str) -> bool:
        return token in self._unigram.by_token

    def prob(self, history: Sequence[str], token: str) -> float:
        p = 0.0
        for weight, dist in self._available(history):
            count = dist.by_token.get(token)
            if count:
                p += weight * (count / dist.total)
        return p

    def logprob(self, history: Sequence[str], token: str) -> float:
        # Renormalized weights can sum to 1 + eps; clamp so a certain token
        # never reports a (tiny) positive logprob.
        return min(0.0, math.log(self.prob(history, token)))

    def distribution(self, history: Sequence[str]) -> tuple[tuple[str, ...], list[float]]:
        """Full interpolated distribution (slow path; support = unigram vocab)."""
        support = self._unigram.tokens
        probs = [0.0] * len(support)
        index = {t: i for i, t in enumerate(support)}
        for weight, dist in self._available(history):
            for tok, count in dist.by_token.items():
                probs[index[tok]] += weight * (count / dist.total)
        return support, probs

    # -- sampling ----------------------------------------------------------

    def sample_token(self, history: Sequence[str], rng: random.Random) -> tuple[str, float]:
        """Draw one token from P(. | history); returns (token, model logprob)."""
        picks = self._available(history)
        r = rng.random()
        acc = 0.0
        chosen = picks[-1][1]
        for weight, dist in picks:
            acc += weight
            if r < acc:
                chosen = dist
                break
        j = rng.randrange(chosen.total)
        token = chosen.tokens[bisect_right(chosen.cumulative, j)]
        return token, self.logprob(history, token)

    def argmax_token(self, history: Sequence[str]) -> tuple[str, float]:
        support, probs = self.distribution(history)
        best = 0
        for i in range(1, len(support)):
            if probs[i] > probs[best] or (probs[i] == probs[best] and support[i] < support[best]):
                best = i
        return support[best], min(0.0, math.log(probs[best]))

    def sample_token_scaled(
        self, history: Sequence[str], temperature: float, rng: random.Random
    ) -> tuple[str, float]:
        """Temperature-scaled sampling (slow path); logprob stays unscaled."""
        support, probs = self.distribution(history)
        logits = [math.log(p) / temperature if p > 0 else -math.inf for p in probs]
        peak = max(logits)
        scaled = [math.exp(l - peak) for l in logits]
        total = sum(scaled)
        r = rng.random() * total
        acc = 0.0
        idx = len(support) - 1
        for i, s in enumerate(scaled):
            acc += s
            if r < acc:
                idx = i
                break
        return support[idx], min(0.0, math.log(probs[idx]))

    # -- persistence -------------------------------------------------------

    def save(self, fp: IO[str]) -> None:
        header = {
            "format": MODEL_FORMAT,
            "order": self.order,
            "weights": list(self.weights),
            "vocab_size": self.vocab_size,
        }
        fp.write(json.dumps(header, ensure_ascii=False, sort_keys=True) + "\n")
        for o, table in enumerate(self._tables, start=1):
            for ctx in sorted(table):
                dist = table[ctx]
                row = {
                    "o": o,
                    "ctx": list(ctx),
                    "counts": {t: c for t, c in zip(dist.tokens, dist.counts)},
                }
                fp.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")

    @classmethod
    def load(cls, fp: IO[str]) -> "NgramModel":
        header = json.loads(fp.readline())
        if header.get("format") != MODEL_FORMAT:
            raise ValueError(f"unsupported model format: {header.get('format')!r}")
        order = int(header["order"])
        weights = tuple(float(w) for w in header["weights"])
        tables: list[dict[tuple[str, ...], _CtxDist]] = [dict() for _ in range(order)]
        for line in fp:
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            ctx = tuple(row["ctx"])
            tables[int(row["o"]) - 1][ctx] = _CtxDist.from_counts(
                {t: int(c) for t, c in row["counts"].items()}
            )
        return cls(order, weights, tables)


def train_ngram(
    convs: Sequence[Conversation], order: int, weights: Sequence[float] | None = None
) -> NgramModel:
    """Train the word-level baseline model (see NgramModel.train)."""
    return NgramModel.train(convs, order, weights)


def _chain_seed(seed: int | None, context_text: str, temperature: float, sample_index: int) -> int:
    payload = f"{seed}|{temperature!r}|{sample_index}|{context_text}".encode("utf-8")
    return int.from_bytes(hashlib.sha256(payload).digest()[:8], "big")


def _surface(token: str, first: bool) -> str:
    word = UNK_SURFACE if token == UNK else token
    return word if first else f" {word}"


class NgramProvider:
    """Completion provider backed by an NgramModel.

    Timing is measured wall clock like any other provider; wrap with
    ``TimingOverride`` when byte-reproducible logs are required.
    """

    def __init__(self, model: NgramModel):
        self.model = model

    def complete(self, req: CompletionRequest) -> tuple[list[SampledCompletion], ProviderTiming]:
        t0 = time.perf_counter()
        history = tokenize_context(req.context_text)
        completions = []
        for i in range(req.n_samples):
            rng = random.Random(_chain_seed(req.seed, req.context_text, req.temperature, i))
            completions.append(self._sample_chain(history, req, rng))
        wall_ms = (time.perf_counter() - t0) * 1000.0
        return completions, ProviderTiming(wall_ms)

    def _sample_chain(
        self, history: list[str], req: CompletionRequest, rng: random.Random
    ) -> SampledCompletion:
        h = list(history)
        tokens: list[Token] = []
        terminated = Terminated.TOKEN_LIMIT
        for _ in range(req.max_tokens):
            if req.temperature == 1.0:
                word, lp = self.model.sample_token(h, rng)
            elif req.temperature == 0.0:
                word, lp = self.model.argmax_token(h)
            else:
                word, lp = self.model.sample_token_scaled(h, req.temperature, rng)
            if word == EOT:
                tokens.append(Token(EOS_TEXT, lp))
                terminated = Terminated.EOS
                break
            tokens.append(Token(_surface(word, first=not tokens), lp))
            h.append(word)
        return SampledCompletion(tokens=tuple(tokens), terminated_by=terminated)

    def score(self, context_text: str, forced_tokens: Sequence[str]) -> list[TokenScore]:
        """Per-token conditional logprobs of a forced continuation.

        Token surfaces follow complete(): words may carry a leading joining
        space and the empty string denotes the end-of-turn marker.  Words
        outside the vocabulary are scored as the unknown token and flagged.
        """
        if not forced_tokens:
            raise ValueError("forced_tokens must be non-empty")
        h = tokenize_context(context_text)
        scores = []
        for text in forced_tokens:
            word = text.strip()
            if word == EOS_TEXT:
                token, unk = EOT, False
            elif word == UNK_SURFACE and not self.model.known(UNK_SURFACE):
                token, unk = UNK, True
            elif self.model.known(word):
                token, unk = word, False
            else:
                token, unk = UNK, True
            scores.append(TokenScore(self.model.logprob(h, token), unk))
            h.append(token)
        return scores
