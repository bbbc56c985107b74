#!/usr/bin/env python3
"""Walk through corpus curation: message trees -> conversations -> prefixes.

Run:  python demos/01_curation.py
"""
from chaitea import Granularity, enumerate_instances, parse_oasst, serialize_context

# A five-node message tree: one root question with two alternative
# assistant replies, each followed by a user follow-up.
TREE = [
    {"message_id": "root", "parent_id": None, "role": "prompter",
     "text": "What is the Sun?", "lang": "en"},
    {"message_id": "a1", "parent_id": "root", "role": "assistant",
     "text": "The Sun is a star at the center of the solar system.", "lang": "en"},
    {"message_id": "a2", "parent_id": "root", "role": "assistant",
     "text": "It is a ball of plasma held together by gravity.", "lang": "en"},
    {"message_id": "p1", "parent_id": "a1", "role": "prompter",
     "text": "Can you tell me more about suns from other solar systems?", "lang": "en"},
    {"message_id": "p2", "parent_id": "a2", "role": "prompter",
     "text": "How hot is it at the core?", "lang": "en"},
]


def main() -> None:
    conversations, stats = parse_oasst(TREE)
    print(f"flattened {len(TREE)} nodes into {stats.conversations} conversations "
          f"({stats.messages} messages)\n")

    for conv in conversations:
        print(f"conversation {conv.id}:")
        for msg in conv.messages:
            print(f"  [{msg.role.value}] {msg.text}")
        print()

    conv = conversations[0]
    print("serialized context for the second user turn with prefix 'Can':")
    print(serialize_context(conv.messages[:2], "Can"))
    print()

    word_instances = list(enumerate_instances(conv, Granularity.WORD_BOUNDARY))
    char_count = sum(1 for _ in enumerate_instances(conv, Granularity.CHAR))
    print(f"{char_count} character-level prefixes, {len(word_instances)} word-level prefixes")
    print("word-level prefixes of the last turn:")
    for inst in word_instances:
        if inst.turn_index == 1:
            print(f"  {inst.prefix!r} + {inst.gt_remainder!r}")


if __name__ == "__main__":
    main()
