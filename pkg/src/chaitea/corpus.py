"""Conversation curation: raw dump parsing, canonical format, prefix enumeration.

Input formats
-------------
OASST message trees are consumed as a flat stream of node records (the
official export, one JSON object per line)::

    {"message_id": str, "parent_id": str|null, "role": "prompter"|"assistant",
     "text": str, "lang": str}

Extra fields are ignored.  ``id`` is accepted as an alias of ``message_id``.
Trees are flattened to all root-to-leaf paths; a path becomes one
conversation, identified by its leaf message id.

ShareGPT dumps are consumed as a JSON array (or JSONL stream) of::

    {"id": str, "conversations": [{"from": "human"|"gpt", "value": str}]}

Canonical output is JSONL, one conversation per line, UTF-8::

    {"id": str, "lang": str, "messages": [{"role": ..., "text": ...}]}
"""
from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass
from enum import Enum
from typing import IO, Iterable, Iterator

PROMPTER_TAG = "<|prompter|>"
ASSISTANT_TAG = "<|assistant|>"
ROLE_TAGS = (PROMPTER_TAG, ASSISTANT_TAG)

# Bump when serialize_context changes; instance caches are keyed on it.
SERIALIZER_VERSION = 1


class Role(str, Enum):
    PROMPTER = "prompter"
    ASSISTANT = "assistant"


class Granularity(str, Enum):
    CHAR = "char"
    WORD_BOUNDARY = "word"


@dataclass(frozen=True)
class Message:
    role: Role
    text: str


@dataclass(frozen=True)
class Conversation:
    id: str
    messages: tuple[Message, ...]
    lang: str = "en"


@dataclass(frozen=True)
class PrefixInstance:
    """One simulation subject: a typing position inside a user turn.

    ``context`` is the serialized history including the current turn's tag
    and the typed prefix; ``turn_index`` counts user turns (0 = first user
    turn of the conversation).
    """

    conversation_id: str
    turn_index: int
    context: str
    prefix: str
    gt_remainder: str
    full_turn_len: int


@dataclass
class ParseStats:
    """Counters reported by the raw-dump parsers."""

    conversations: int = 0
    messages: int = 0
    malformed_records: int = 0
    orphan_subtrees: int = 0
    dropped_alternation: int = 0
    dropped_language: int = 0
    dropped_unknown_role: int = 0
    dropped_invalid_text: int = 0

    def as_dict(self) -> dict[str, int]:
        return dict(vars(self))


def validate_conversation(conv: Conversation) -> None:
    """Raise ValueError if the conversation breaks a structural invariant."""
    if not conv.messages:
        raise ValueError(f"conversation {conv.id!r} has no messages")
    if conv.messages[0].role is not Role.PROMPTER:
        raise ValueError(f"conversation {conv.id!r} does not start with a prompter turn")
    for i, msg in enumerate(conv.messages):
        expected = Role.PROMPTER if i % 2 == 0 else Role.ASSISTANT
        if msg.role is not expected:
            raise ValueError(f"conversation {conv.id!r} roles do not alternate at index {i}")
        if not msg.text:
            raise ValueError(f"conversation {conv.id!r} has an empty message at index {i}")
        for tag in ROLE_TAGS:
            if tag in msg.text:
                raise ValueError(f"conversation {conv.id!r} contains a role-tag marker at index {i}")


def _clean_text(text: object) -> str:
    # Trailing whitespace is stripped; internal whitespace is preserved verbatim.
    return str(text).rstrip()


def _valid_message_text(text: str) -> bool:
    if not text:
        return False
    return not any(tag in text for tag in ROLE_TAGS)


# --------------------------------------------------------------------------
# OASST message trees
# --------------------------------------------------------------------------

_OASST_ROLES = {"prompter": Role.PROMPTER, "assistant": Role.ASSISTANT}


def parse_oasst(records: Iterable[dict]) -> tuple[list[Conversation], ParseStats]:
    """Flatten OASST message-tree node records into conversations.

    Every root-to-leaf path whose messages are all ``lang == "en"``, start
    with a prompter turn and strictly alternate becomes one conversation
    (id = leaf message id).  Shared prefixes are duplicated across paths.
    Output is independent of record order within a tree: children are
    visited in message-id order.
    """
    stats = ParseStats()
    nodes: dict[str, dict] = {}
    children: dict[str | None, list[str]] = defaultdict(list)
    roots: list[str] = []

    for record in records:
        if not isinstance(record, dict):
            stats.malformed_records += 1
            continue
        node_id = record.get("message_id", record.get("id"))
        role = record.get("role")
        text = record.get("text")
        if not isinstance(node_id, str) or role not in _OASST_ROLES or not isinstance(text, str):
            stats.malformed_records += 1
            continue
        if node_id in nodes:
            stats.malformed_records += 1
            continue
        parent_id = record.get("parent_id")
        nodes[node_id] = {
            "parent": parent_id,
            "role": _OASST_ROLES[role],
            "text": _clean_text(text),
            "lang": record.get("lang"),
        }
        if parent_id is None:
            roots.append(node_id)
        else:
            children[parent_id].append(node_id)

    # Orphan subtrees: nodes whose parent id never appeared in the stream.
    for node_id, node in nodes.items():
        parent = node["parent"]
        if parent is not None and parent not in nodes:
            stats.orphan_subtrees += 1

    conversations: list[Conversation] = []

    def walk(node_id: str, path: list[str]) -> None:
        path.append(node_id)
        kids = sorted(children.get(node_id, ()))
        if not kids:
            _emit(path)
        else:
            for kid in kids:
                walk(kid, path)
        path.pop()

    def _emit(path: list[str]) -> None:
        msgs = []
        for i, node_id in enumerate(path):
            node = nodes[node_id]
            expected = Role.PROMPTER if i % 2 == 0 else Role.ASSISTANT
            if node["role"] is not expected:
                stats.dropped_alternation += 1
                return
            msgs.append((node["text"], node["lang"], node["role"]))
        if any(lang != "en" for _, lang, _ in msgs):
            stats.dropped_language += 1
            return
        if any(not _valid_message_text(text) for text, _, _ in msgs):
            stats.dropped_invalid_text += 1
            return
        conv = Conversation(
            id=path[-1],
            messages=tuple(Message(role, text) for text, _, role in msgs),
            lang="en",
        )
        conversations.append(conv)
        stats.conversations += 1
        stats.messages += len(conv.messages)

    for root in roots:
        walk(root, [])

    return conversations, stats


# --------------------------------------------------------------------------
# ShareGPT dumps
# --------------------------------------------------------------------------

_SHAREGPT_ROLES = {"human": Role.PROMPTER, "gpt": Role.ASSISTANT}

_VOWELS = set("aeiouAEIOU")
_WORD_CHARS = set("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ'’-")


def _is_english_token(token: str) -> bool:
    return bool(token) and all(c in _WORD_CHARS for c in token) and any(c in _VOWELS for c in token)


def looks_english(texts: Iterable[str]) -> bool:
    """Heuristic English filter for corpora without language metadata.

    A conversation passes iff at least 90% of its characters are ASCII and
    at least 60% of its whitespace-separated tokens are plain letter runs
    (apostrophes and hyphens allowed) containing a vowel.
    """
    joined = " ".join(texts)
    if not joined:
        return False
    ascii_chars = sum(1 for c in joined if ord(c) < 128)
    if ascii_chars < 0.9 * len(joined):
        return False
    tokens = joined.split()
    if not tokens:
        return False
    wordlike = sum(1 for t in tokens if _is_english_token(t))
    return wordlike >= 0.6 * len(tokens)


def parse_sharegpt(records: Iterable[dict]) -> tuple[list[Conversation], ParseStats]:
    """Convert ShareGPT conversation records into canonical conversations.

    Leading assistant messages are trimmed until the first human message,
    empty messages are dropped (alternation is re-validated afterwards),
    and conversations failing the English heuristic are discarded.
    """
    stats = ParseStats()
    conversations: list[Conversation] = []

    for record in records:
        if not isinstance(record, dict):
            stats.malformed_records += 1
            continue
        conv_id = record.get("id")
        turns = record.get("conversations")
        if not isinstance(conv_id, str) or not isinstance(turns, list):
            stats.malformed_records += 1
            continue

        msgs: list[Message] = []
        unknown_role = False
        for turn in turns:
            origin = turn.get("from") if isinstance(turn, dict) else None
            if origin not in _SHAREGPT_ROLES:
                unknown_role = True
                break
            text = _clean_text(turn.get("value", ""))
            if not msgs and _SHAREGPT_ROLES[origin] is Role.ASSISTANT:
                continue  # leading assistant messages are trimmed
            if not text:
                continue  # empty message dropped; alternation re-checked below
            msgs.append(Message(_SHAREGPT_ROLES[origin], text))
        if unknown_role:
            stats.dropped_unknown_role += 1
            continue
        if not msgs:
            stats.dropped_invalid_text += 1
            continue
        if any(not _valid_message_text(m.text) for m in msgs):
            stats.dropped_invalid_text += 1
            continue
        ok = msgs[0].role is Role.PROMPTER and all(
            m.role is (Role.PROMPTER if i % 2 == 0 else Role.ASSISTANT) for i, m in enumerate(msgs)
        )
        if not ok:
            stats.dropped_alternation += 1
            continue
        if not looks_english(m.text for m in msgs):
            stats.dropped_language += 1
            continue
        conv = Conversation(id=conv_id, messages=tuple(msgs), lang="en")
        conversations.append(conv)
        stats.conversations += 1
        stats.messages += len(msgs)

    return conversations, stats


# --------------------------------------------------------------------------
# Context serialization and prefix enumeration
# --------------------------------------------------------------------------


def serialize_context(history: Iterable[Message], current_prefix: str) -> str:
    """Render the conversation history plus the current typed prefix.

    Each history message becomes ``tag + " " + text``; messages are joined
    by single newlines and followed by the current turn's prompter tag and
    the prefix.  Byte-deterministic.
    """
    parts = []
    for msg in history:
        tag = PROMPTER_TAG if msg.role is Role.PROMPTER else ASSISTANT_TAG
        parts.append(f"{tag} {msg.text}")
    parts.append(f"{PROMPTER_TAG} {current_prefix}")
    return "\n".join(parts)


def truncate_context(serialized: str, max_chars: int | None) -> str:
    """Keep only the trailing ``max_chars`` characters (None means full).

    Truncation may split a word or a role tag; no re-alignment is done.
    """
    if max_chars is None:
        return serialized
    if max_chars <= 0:
        raise ValueError("max_chars must be positive (or None for full context)")
    return serialized[-max_chars:]


def user_turns(conv: Conversation) -> Iterator[tuple[int, str, tuple[Message, ...]]]:
    """Yield (turn_index, turn_text, history) for every prompter turn."""
    turn_index = 0
    for i, msg in enumerate(conv.messages):
        if msg.role is Role.PROMPTER:
            yield turn_index, msg.text, conv.messages[:i]
            turn_index += 1


def enumerate_instances(
    conv: Conversation, granularity: Granularity = Granularity.CHAR
) -> Iterator[PrefixInstance]:
    """Lazily yield every prefix instance of every user turn.

    CHAR yields one instance per character position ``0..len(turn)-1``;
    WORD_BOUNDARY yields one instance per word-level suggestion point.
    Never materializes the full instance list.
    """
    from .boundaries import SuggestionMode, suggestion_points

    for turn_index, turn, history in user_turns(conv):
        base = serialize_context(history, "")
        if granularity is Granularity.CHAR:
            positions: Iterable[int] = range(len(turn))
        else:
            positions = suggestion_points(turn, SuggestionMode.WORD)
        for pos in positions:
            yield PrefixInstance(
                conversation_id=conv.id,
                turn_index=turn_index,
                context=base + turn[:pos],
                prefix=turn[:pos],
                gt_remainder=turn[pos:],
                full_turn_len=len(turn),
            )


def turn_instances(conv: Conversation) -> Iterator[PrefixInstance]:
    """One empty-prefix instance per user turn (the simulator's input)."""
    for turn_index, turn, history in user_turns(conv):
        if not turn:
            continue
        yield PrefixInstance(
            conversation_id=conv.id,
            turn_index=turn_index,
            context=serialize_context(history, ""),
            prefix="",
            gt_remainder=turn,
            full_turn_len=len(turn),
        )


def count_instances(convs: Iterable[Conversation], granularity: Granularity = Granularity.CHAR) -> int:
    """Instance count without materializing contexts (Table-style stats)."""
    from .boundaries import SuggestionMode, suggestion_points

    total = 0
    for conv in convs:
        for _, turn, _ in user_turns(conv):
            if granularity is Granularity.CHAR:
                total += len(turn)
            else:
                total += len(suggestion_points(turn, SuggestionMode.WORD))
    return total


# --------------------------------------------------------------------------
# Canonical JSONL I/O
# --------------------------------------------------------------------------


def conversation_to_dict(conv: Conversation) -> dict:
    return {
        "id": conv.id,
        "lang": conv.lang,
        "messages": [{"role": m.role.value, "text": m.text} for m in conv.messages],
    }


def conversation_from_dict(obj: dict) -> Conversation:
    msgs = tuple(Message(Role(m["role"]), m["text"]) for m in obj["messages"])
    return Conversation(id=obj["id"], messages=msgs, lang=obj.get("lang", "en"))


def save_conversations(convs: Iterable[Conversation], fp: IO[str]) -> int:
    n = 0
    for conv in convs:
        fp.write(json.dumps(conversation_to_dict(conv), ensure_ascii=False, sort_keys=True))
        fp.write("\n")
        n += 1
    return n


def load_conversations(fp: IO[str]) -> list[Conversation]:
    convs = []
    for line in fp:
        line = line.strip()
        if line:
            convs.append(conversation_from_dict(json.loads(line)))
    return convs


def write_instance_cache(
    convs: Iterable[Conversation],
    fp: IO[str],
    granularity: Granularity,
    dataset: str = "",
    split: str = "",
) -> int:
    """Materialize instance keys as JSONL (header line + one entry per instance)."""
    header = {
        "type": "header",
        "dataset": dataset,
        "split": split,
        "granularity": granularity.value,
        "serializer_version": SERIALIZER_VERSION,
    }
    fp.write(json.dumps(header, ensure_ascii=False, sort_keys=True) + "\n")
    n = 0
    for conv in convs:
        for inst in enumerate_instances(conv, granularity):
            row = {
                "conversation_id": inst.conversation_id,
                "turn_index": inst.turn_index,
                "prefix_len": len(inst.prefix),
            }
            fp.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")
            n += 1
    return n
