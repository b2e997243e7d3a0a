"""Tokenization, stemming and term counting shared by corpus flags, mocks and rank metrics.

Everything here is deterministic and dependency-free; the stemmer is a
minimal suffix-stripper, not a linguistic one (plural/possessive only).
"""

from __future__ import annotations

import hashlib
import random
import re

_WORD = re.compile(r"[^\W_]+", re.UNICODE)


def tokenize(s: str) -> list[str]:
    """Lowercased word tokens; splits on anything non-alphanumeric."""
    return [t.lower() for t in _WORD.findall(s)]


def stem(token: str) -> str:
    """Strip possessive and plural suffixes from a lowercased token.

    Kept deliberately crude so the rule is auditable: "Audis" and "Audi"
    both map to "audi"; short tokens pass through unchanged.
    """
    t = token.lower()
    if t.endswith("'s") or t.endswith("’s"):
        t = t[:-2]
    elif t.endswith("'") or t.endswith("’"):
        t = t[:-1]
    if len(t) > 4 and t.endswith("ies"):
        t = t[:-3] + "y"
    elif len(t) > 3 and t.endswith("s") and not t.endswith("ss"):
        t = t[:-1]
    return t


def stem_set(s: str) -> set[str]:
    return {stem(t) for t in tokenize(s)}


def count_occurrences(text_tokens: list[str], needle_tokens: list[str]) -> int:
    """Non-overlapping occurrences of a token sequence within a token list."""
    if not needle_tokens or len(needle_tokens) > len(text_tokens):
        return 0
    n, m = len(text_tokens), len(needle_tokens)
    count = 0
    i = 0
    while i <= n - m:
        if text_tokens[i : i + m] == needle_tokens:
            count += 1
            i += m
        else:
            i += 1
    return count


def term_frequencies(texts: list[str], candidates: list[str]) -> dict[str, int]:
    """Whole-token-sequence candidate counts, summed per text.

    Counting per text (never across text boundaries) makes the result
    invariant under reordering of the texts.
    """
    token_lists = [tokenize(t) for t in texts]
    freqs: dict[str, int] = {}
    for cand in candidates:
        needle = tokenize(cand)
        freqs[cand] = sum(count_occurrences(toks, needle) for toks in token_lists)
    return freqs


def derive_rng(seed: int, *parts: object) -> random.Random:
    """Deterministic, platform-stable RNG keyed on (seed, *parts)."""
    h = hashlib.sha256()
    h.update(str(seed).encode("utf-8"))
    for p in parts:
        h.update(b"\x1f")
        h.update(str(p).encode("utf-8"))
    return random.Random(int.from_bytes(h.digest()[:8], "big"))


def derive_unit(seed: int, dim: int, *parts: object) -> list[float]:
    """Deterministic unit vector, used for synthetic query embeddings."""
    rng = derive_rng(seed, *parts)
    v = [rng.uniform(-1.0, 1.0) for _ in range(dim)]
    norm = sum(x * x for x in v) ** 0.5 or 1.0
    return [x / norm for x in v]
