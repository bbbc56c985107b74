"""Word-boundary rules shared by prefix enumeration and the turn simulator.

A "word" throughout this package is a maximal run of non-whitespace
characters; whitespace is anything `str.isspace` accepts.  Every module
that needs to decide where a word starts or ends goes through these two
functions so the rules cannot drift apart.
"""
from __future__ import annotations

from enum import Enum


class SuggestionMode(str, Enum):
    """Where completion steps fire inside a turn."""

    WORD = "word"
    CHAR = "char"


def suggestion_points(turn_text: str, mode: SuggestionMode) -> list[int]:
    """Character offsets of the turn at which a completion step fires.

    WORD mode fires at offset 0 and at the first character after each
    whitespace run (the start of every subsequent word).  CHAR mode fires
    at every offset.  Offsets whose remaining suffix is empty are never
    returned.
    """
    n = len(turn_text)
    if n == 0:
        return []
    if mode is SuggestionMode.CHAR:
        return list(range(n))
    points = [0]
    for i in range(1, n):
        if turn_text[i - 1].isspace() and not turn_text[i].isspace():
            points.append(i)
    return points


def match(candidate_text: str, gt_suffix: str) -> int | None:
    """Exact-match acceptance check of a suggestion against the ground truth.

    Returns the number of consumed characters, or None if the candidate is
    not accepted.  A candidate is accepted iff the ground-truth suffix
    starts with it byte-exactly and the match ends at a ground-truth word
    boundary (end of turn, or the next character is whitespace).  The
    consumed count includes the whitespace run immediately following the
    match, so the next position always starts a word.
    """
    if not candidate_text:
        return None
    if not gt_suffix.startswith(candidate_text):
        return None
    end = len(candidate_text)
    if end == len(gt_suffix):
        return end
    if not gt_suffix[end].isspace():
        return None
    consumed = end
    while consumed < len(gt_suffix) and gt_suffix[consumed].isspace():
        consumed += 1
    return consumed
