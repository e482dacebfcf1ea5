"""Okapi BM25 with corpus statistics and a plain-text stats cache."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Iterable

from .embedding import TokenSequence

K1 = 1.5
B = 0.75
EPSILON = 0.25


def _texts(doc) -> list[str]:
    return doc.texts if isinstance(doc, TokenSequence) else list(doc)


@dataclass(frozen=True)
class CorpusStats:
    df: dict[str, int]
    n_docs: int
    avgdl: float

    def idf_raw(self, term: str) -> float:
        df = self.df.get(term, 0)
        return math.log(self.n_docs - df + 0.5) - math.log(df + 0.5)

    @property
    def idf_floor(self) -> float:
        """``EPSILON * mean(idf)`` over the vocabulary, never below zero."""
        if not self.df:
            return 0.0
        mean_idf = sum(self.idf_raw(t) for t in self.df) / len(self.df)
        return max(0.0, EPSILON * mean_idf)

    def idf(self, term: str) -> float:
        return max(self.idf_raw(term), self.idf_floor)


def build_corpus_stats(documents: Iterable[TokenSequence]) -> CorpusStats:
    docs = [_texts(d) for d in documents]
    if not docs:
        raise ValueError("empty corpus")
    df = Counter()
    for d in docs:
        df.update(set(d))
    total = sum(len(d) for d in docs)
    return CorpusStats(dict(df), len(docs), total / len(docs))


def bm25_score(query, doc, stats: CorpusStats, k1: float = K1, b: float = B) -> float:
    """Sum over query tokens (repeats count) of ``idf * tf*(k1+1)/(tf + k1*norm)``."""
    q, d = _texts(query), _texts(doc)
    if not q or not d:
        return 0.0
    tf = Counter(d)
    floor = stats.idf_floor
    norm = 1.0 - b + b * len(d) / stats.avgdl if stats.avgdl > 0 else 1.0
    score = 0.0
    for term in q:
        f = tf.get(term, 0)
        if f:
            idf = max(stats.idf_raw(term), floor)
            score += idf * f * (k1 + 1.0) / (f + k1 * norm)
    return score


def save_stats(path, stats: CorpusStats):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"#n_docs\t{stats.n_docs}\n#avgdl\t{stats.avgdl!r}\n")
        for term in sorted(stats.df):
            fh.write(f"{term}\t{stats.df[term]}\n")


def load_stats(path) -> CorpusStats:
    df, header = {}, {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            key, sep, value = line.rpartition("\t")
            if not sep:
                raise ValueError(f"{path}:{lineno}: expected term<TAB>value")
            if key.startswith("#"):
                header[key[1:]] = value
            else:
                df[key] = int(value)
    try:
        return CorpusStats(df, int(header["n_docs"]), float(header["avgdl"]))
    except KeyError as exc:
        raise ValueError(f"{path}: missing header {exc}") from exc
