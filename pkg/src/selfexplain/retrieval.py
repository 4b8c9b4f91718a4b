"""Deterministic TF-IDF embedding and exact top-k search over snippets.

This stands in for a learned-vector index: term frequency is the raw
count, idf = ln((1+N)/(1+df)) + 1, vectors are L2-normalized, and search
scores every candidate (no approximation). No stemming, no stop words;
the whole thing is reproducible by hand.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Mapping

from .model import Snippet, part_rank

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


def tokenize(text: str) -> list[str]:
    """Lowercase and split on runs of non-alphanumeric characters."""
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class EmbeddingVector:
    """Sparse L2-normalized TF-IDF weights; empty text maps to the zero vector."""

    weights: Mapping[str, float]

    def dot(self, other: "EmbeddingVector") -> float:
        a, b = self.weights, other.weights
        if len(b) < len(a):
            a, b = b, a
        return sum(w * b.get(term, 0.0) for term, w in a.items())


@dataclass(frozen=True)
class ScoredSnippet:
    snippet: Snippet
    score: float


@dataclass(frozen=True)
class SnippetIndex:
    snippets: tuple[Snippet, ...]
    vocabulary: dict[str, int]  # term -> document frequency
    vectors: tuple[EmbeddingVector, ...]

    def idf(self, term: str) -> float:
        n = len(self.snippets)
        return math.log((1 + n) / (1 + self.vocabulary.get(term, 0))) + 1.0


def _normalize(weights: dict[str, float]) -> EmbeddingVector:
    norm = math.sqrt(sum(w * w for w in weights.values()))
    if norm == 0.0:
        return EmbeddingVector({})
    return EmbeddingVector({t: w / norm for t, w in weights.items()})


def build_index(snippets: Iterable[Snippet]) -> SnippetIndex:
    """Index snippets for exact cosine search; an empty list is a valid index."""
    items = tuple(snippets)
    token_lists = [tokenize(s.text) for s in items]
    vocabulary: dict[str, int] = {}
    for tokens in token_lists:
        for term in set(tokens):
            vocabulary[term] = vocabulary.get(term, 0) + 1
    n = len(items)
    idf = {t: math.log((1 + n) / (1 + df)) + 1.0 for t, df in vocabulary.items()}
    vectors = tuple(
        _normalize({t: c * idf[t] for t, c in Counter(tokens).items()})
        for tokens in token_lists)
    return SnippetIndex(snippets=items, vocabulary=vocabulary, vectors=vectors)


def embed_query(index: SnippetIndex, text: str) -> EmbeddingVector:
    """Embed free text in the index's vocabulary; unknown terms are dropped."""
    counts = Counter(t for t in tokenize(text) if t in index.vocabulary)
    return _normalize({t: c * index.idf(t) for t, c in counts.items()})


def search(index: SnippetIndex, query: str, k: int,
           parts: Iterable[str]) -> list[ScoredSnippet]:
    """Exact top-k cosine search over the snippets whose part is allowed.

    Results are sorted by score descending; ties break on (part, source id)
    ascending so rankings are stable across runs.
    """
    part_set = set(parts)
    if not part_set:
        raise ValueError("no searchable parts")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    query_vector = embed_query(index, query)
    scored = []
    for snippet, vector in zip(index.snippets, index.vectors):
        if snippet.part not in part_set:
            continue
        score = min(1.0, max(0.0, query_vector.dot(vector)))
        scored.append(ScoredSnippet(snippet, score))
    scored.sort(key=lambda s: (-s.score, part_rank(s.snippet.part), s.snippet.source_id))
    return scored[:k]


def answer_similarity(a: str, b: str) -> float:
    """Cosine similarity of two texts over their own two-document corpus.

    Symmetric, bounded to [0, 1]; identical non-empty texts score 1.0 and
    anything compared against empty text scores 0.0.
    """
    tokens_a, tokens_b = tokenize(a), tokenize(b)
    if not tokens_a or not tokens_b:
        return 0.0
    counts_a, counts_b = Counter(tokens_a), Counter(tokens_b)
    if counts_a == counts_b:  # keep similarity(a, a) exactly 1.0
        return 1.0
    df: Counter = Counter()
    for tokens in (tokens_a, tokens_b):
        df.update(set(tokens))
    idf = {t: math.log(3 / (1 + n)) + 1.0 for t, n in df.items()}
    va = _normalize({t: c * idf[t] for t, c in counts_a.items()})
    vb = _normalize({t: c * idf[t] for t, c in counts_b.items()})
    return min(1.0, max(0.0, va.dot(vb)))
