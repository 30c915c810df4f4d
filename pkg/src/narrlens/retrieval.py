"""Sentence segmentation, per-article sentence index and dual-pass retrieval."""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .corpus import Article
from .embedding import Embedder
from .taxonomy import Taxonomy, TaxonomyError

# Terminator (., !, ?, devanagari danda) followed by whitespace.
_BOUNDARY = re.compile(r"(?<=[.!?।])\s+")
MIN_SENTENCE_CHARS = 3


class RetrievalError(RuntimeError):
    pass


class IndexDroppedError(RetrievalError):
    pass


@dataclass
class RetrievalConfig:
    top_k: int = 5
    query_composition: str = "label_plus_definition"  # or "label_only"
    inclusive_threshold: bool = True

    def __post_init__(self):
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")
        if self.query_composition not in ("label_only", "label_plus_definition"):
            raise ValueError(f"unknown query composition {self.query_composition!r}")


@dataclass(frozen=True)
class SentenceRecord:
    index: int
    text: str
    vector: np.ndarray = field(repr=False, compare=False)


@dataclass(frozen=True)
class RetrievedEvidence:
    sentence: str
    article_index: int
    score: float
    source: str  # "pass1" | "pass2"
    query_label: str


def segment(text: str, language: str = "EN") -> list[str]:
    """Split on sentence terminators followed by whitespace or end of text.

    Fragments under three characters are joined to the next sentence, or to
    the previous one when they come last.
    """
    pieces = [p.strip() for p in _BOUNDARY.split(text.strip())]
    pieces = [p for p in pieces if p]
    if not pieces:
        raise RetrievalError("text yields no sentences")
    sentences: list[str] = []
    carry = ""
    for piece in pieces:
        piece = f"{carry} {piece}" if carry else piece
        carry = ""
        if len(piece) < MIN_SENTENCE_CHARS:
            carry = piece
        else:
            sentences.append(piece)
    if carry:
        if sentences:
            sentences[-1] = f"{sentences[-1]} {carry}"
        else:
            sentences.append(carry)
    return sentences


class SentenceIndex:
    """In-memory exact-scan index over one article's sentences."""

    def __init__(self, article_id: str, records: list[SentenceRecord]):
        if not records:
            raise RetrievalError(f"article {article_id!r} has no sentences to index")
        self.article_id = article_id
        self.records = records
        self.state = "live"
        self._matrix = np.vstack([r.vector for r in records])

    def __len__(self) -> int:
        return len(self.records)

    def _check_live(self):
        if self.state != "live":
            raise IndexDroppedError(f"index dropped for article {self.article_id!r}")

    def scores(self, query: np.ndarray) -> np.ndarray:
        self._check_live()
        if query.shape != (self._matrix.shape[1],):
            raise ValueError(f"query dim {query.shape} does not match index dim {self._matrix.shape[1]}")
        # Row-wise dot products: a sentence's score is bit-identical however
        # many other sentences share the index (a matrix product may reorder
        # the summation, which matters for exact ties at the threshold).
        return np.array([np.dot(row, query) for row in self._matrix])

    def drop(self) -> None:
        self._check_live()
        self.state = "dropped"
        self.records = []
        self._matrix = None


def index_article(article: Article, embedder: Embedder, cfg: RetrievalConfig | None = None) -> SentenceIndex:
    sentences = segment(article.text, article.language)
    vectors = embedder.embed(sentences)
    return SentenceIndex(
        article.id, [SentenceRecord(i, s, v) for i, (s, v) in enumerate(zip(sentences, vectors))]
    )


def drop_index(idx: SentenceIndex) -> None:
    idx.drop()


def query_text(taxonomy: Taxonomy, label: str, level: str, composition: str) -> str:
    entry = taxonomy.main_entry(label) if level == "main" else taxonomy.sub_entry(label)
    if composition == "label_only":
        return label
    definition = entry.main_definition if level == "main" else entry.sub_definition
    return f"{label}: {definition}" if definition else label


def top_k_order(scores: Sequence[float], k: int) -> list[int]:
    """Indices of the k best scores; ties go to the earlier sentence."""
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    return order[:k]


def retrieve_dual_pass(idx: SentenceIndex, taxonomy: Taxonomy, dominant: str,
                       subs: Sequence[str], embedder: Embedder,
                       cfg: RetrievalConfig | None = None) -> list[RetrievedEvidence]:
    cfg = cfg or RetrievalConfig()
    idx._check_live()
    if not taxonomy.has_narrative(dominant):
        raise TaxonomyError(f"unknown narrative {dominant!r}")
    for s in subs:
        if not taxonomy.has_sub(s):
            raise TaxonomyError(f"unknown sub-narrative {s!r}")

    queries = [query_text(taxonomy, dominant, "main", cfg.query_composition)]
    queries += [query_text(taxonomy, s, "sub", cfg.query_composition) for s in subs]
    qvecs = embedder.embed(queries)

    main_scores = idx.scores(qvecs[0]).tolist()
    top = top_k_order(main_scores, cfg.top_k)
    threshold = main_scores[top[-1]]
    chosen = {
        i: RetrievedEvidence(idx.records[i].text, i, main_scores[i], "pass1", dominant)
        for i in top
    }
    for sub, qvec in zip(subs, qvecs[1:]):
        sub_scores = idx.scores(qvec).tolist()
        for i, score in enumerate(sub_scores):
            if i in chosen:
                continue
            if score > threshold or (cfg.inclusive_threshold and score == threshold):
                chosen[i] = RetrievedEvidence(idx.records[i].text, i, score, "pass2", sub)
    return [chosen[i] for i in sorted(chosen)]
