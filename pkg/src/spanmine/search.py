"""Normalized cosine scoring, best-span matching and corpus top-k search."""

from __future__ import annotations

import logging
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .embedding import EmbeddingMatrix
from .spans import SpanIndex, SpanRef

logger = logging.getLogger(__name__)

NORM_EPS = 1e-12
# scores this close to the maximum count as ties; earliest span wins
TIE_TOL = 1e-12


class DegenerateVectorWarning(UserWarning):
    pass


@dataclass(frozen=True)
class ScoredSpan:
    span: SpanRef
    score: float
    char_start: int | None = None
    char_end: int | None = None
    text: str | None = None

    @property
    def doc_id(self) -> str:
        return self.span.doc_id


def normalized_cosine(u, v) -> float:
    """``(1 + cos(u, v)) / 2``; zero-norm inputs score 0.0 with a warning."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu < NORM_EPS or nv < NORM_EPS:
        warnings.warn("zero-norm vector in cosine", DegenerateVectorWarning, stacklevel=2)
        return 0.0
    cos = float(np.dot(u, v) / (nu * nv))
    return (1.0 + min(1.0, max(-1.0, cos))) / 2.0


def normalized_cosine_many(block: np.ndarray, q: np.ndarray, norms: np.ndarray | None = None) -> np.ndarray:
    """Row-wise normalized cosine of ``block`` against ``q``."""
    qn = np.linalg.norm(q)
    if norms is None:
        norms = np.linalg.norm(block, axis=1)
    if qn < NORM_EPS:
        return np.zeros(block.shape[0])
    ok = norms >= NORM_EPS
    cos = np.zeros(block.shape[0])
    cos[ok] = (block[ok] @ q) / (norms[ok] * qn)
    scores = (1.0 + np.clip(cos, -1.0, 1.0)) / 2.0
    scores[~ok] = 0.0
    return scores


def query_vector(m: EmbeddingMatrix | np.ndarray, strategy: str = "mean") -> np.ndarray:
    """Whole-query representation matching an index strategy."""
    rows = np.asarray(m.rows if isinstance(m, EmbeddingMatrix) else m, dtype=np.float64)
    if rows.shape[0] == 0:
        raise ValueError("empty query")
    if strategy == "mean":
        return rows.mean(axis=0)
    if strategy == "endpoint":
        return np.concatenate([rows[0], rows[-1]])
    raise ValueError(f"unknown strategy {strategy!r}")


def pick_best(per_length) -> tuple[int, int, float] | None:
    """Pick ``(start, length, score)`` from ``(length, scores-by-start)`` pairs.

    The maximum wins; scores within ``TIE_TOL`` of it are ties and go to the
    earliest span in enumeration order (start, then length).
    """
    per_length = list(per_length)
    if not per_length:
        return None
    best = max(float(s.max()) for _, s in per_length)
    pick = None
    for k, scores in per_length:
        hits = np.flatnonzero(scores >= best - TIE_TOL)
        if hits.size and (pick is None or hits[0] < pick[0]):
            pick = (int(hits[0]), k, float(scores[hits[0]]))
    return pick


def best_span_match(query_vec, index: SpanIndex) -> ScoredSpan | None:
    q = np.asarray(query_vec, dtype=np.float64)
    if q.shape != (index.dim,):
        raise ValueError(f"dimension mismatch: query {q.shape}, index vectors ({index.dim},)")
    if np.linalg.norm(q) < NORM_EPS:
        warnings.warn("zero-norm query vector", DegenerateVectorWarning, stacklevel=2)
    pick = pick_best(
        (k, normalized_cosine_many(block, q, index.block_norms(k, block))) for k, block in index.blocks()
    )
    if pick is None:
        return None
    start, k, score = pick
    span = SpanRef(index.doc_id, start, start + k)
    cs, ce = index.char_span(start, start + k)
    text = index.text[cs:ce] if index.text is not None and cs is not None else None
    return ScoredSpan(span, score, cs, ce, text)


def worker_count() -> int:
    cap = os.environ.get("SPANMINE_THREADS")
    n = os.cpu_count() or 1
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            logger.warning("ignoring bad SPANMINE_THREADS=%r", cap)
    return n


def top_k_search(query_vec, corpus: list[SpanIndex], k: int) -> list[ScoredSpan]:
    """Best span per document, top ``k`` documents by score (ties by doc_id)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if not corpus:
        return []
    workers = min(worker_count(), len(corpus))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            hits = list(pool.map(lambda ix: best_span_match(query_vec, ix), corpus))
    else:
        hits = [best_span_match(query_vec, ix) for ix in corpus]
    hits = [h for h in hits if h is not None]
    hits.sort(key=lambda h: (-h.score, h.doc_id))
    return hits[:k]
