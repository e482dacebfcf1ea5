"""Span enumeration, prefix-sum pooling and per-document span indexes."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numpy as np

from .embedding import (
    EmbeddingMatrix,
    TokenSequence,
    _read_exact,
    _read_str,
    _write_str,
    read_doc_block,
    write_doc_block,
)

STRATEGIES = ("mean", "endpoint")
MODES = ("lazy", "materialized")

INDEX_MAGIC = b"SAIX"
INDEX_VERSION = 1


@dataclass(frozen=True)
class SpanConfig:
    min_size: int = 1
    max_size: int = 20

    def __post_init__(self):
        if not 1 <= self.min_size <= self.max_size:
            raise ValueError(f"need 1 <= min_size <= max_size, got ({self.min_size}, {self.max_size})")

    def lengths(self, n: int) -> range:
        return range(self.min_size, min(self.max_size, n) + 1)


EVAL_SPANS = SpanConfig(1, 20)
TRAIN_SPANS = SpanConfig(1, 10)


class SpanRef(NamedTuple):
    doc_id: str
    start: int
    end: int

    @property
    def length(self) -> int:
        return self.end - self.start


def span_count(n: int, cfg: SpanConfig) -> int:
    return sum(n - k + 1 for k in cfg.lengths(n))


def enumerate_spans(n: int, cfg: SpanConfig, doc_id: str = "") -> list[SpanRef]:
    """All spans with ``min_size <= length <= max_size``, by start then length."""
    if n < 0:
        raise ValueError("n must be non-negative")
    return [
        SpanRef(doc_id, i, i + k)
        for i in range(n)
        for k in range(cfg.min_size, min(cfg.max_size, n - i) + 1)
    ]


def build_prefix(m: EmbeddingMatrix | np.ndarray) -> np.ndarray:
    """``(n+1, d)`` float64 cumulative sums; row 0 is zero."""
    rows = m.rows if isinstance(m, EmbeddingMatrix) else np.asarray(m)
    if rows.ndim != 2:
        raise ValueError(f"expected 2-D rows, got shape {rows.shape}")
    prefix = np.zeros((rows.shape[0] + 1, rows.shape[1]), dtype=np.float64)
    np.cumsum(rows, axis=0, dtype=np.float64, out=prefix[1:])
    return prefix


def _bounds(span, n: int) -> tuple[int, int]:
    start, end = span[-2], span[-1]
    if end <= start:
        raise ValueError(f"empty span [{start}, {end})")
    if start < 0 or end > n:
        raise IndexError(f"span [{start}, {end}) outside 0..{n}")
    return start, end


def mean_pool(span: SpanRef | tuple[int, int], prefix: np.ndarray) -> np.ndarray:
    start, end = _bounds(span, prefix.shape[0] - 1)
    return (prefix[end] - prefix[start]) / (end - start)


def endpoint_concat(span: SpanRef | tuple[int, int], m: EmbeddingMatrix | np.ndarray) -> np.ndarray:
    rows = m.rows if isinstance(m, EmbeddingMatrix) else np.asarray(m)
    start, end = _bounds(span, rows.shape[0])
    return np.concatenate([rows[start], rows[end - 1]]).astype(np.float64)


def _block(k: int, rows: np.ndarray, prefix: np.ndarray | None, strategy: str) -> np.ndarray:
    """Vectors of all length-``k`` spans, row ``i`` = span ``[i, i+k)``."""
    if strategy == "mean":
        return (prefix[k:] - prefix[:-k]) / k
    n = rows.shape[0]
    return np.concatenate([rows[: n - k + 1], rows[k - 1 :]], axis=1).astype(np.float64)


class SpanIndex:
    """All admissible spans of one document.

    ``lazy`` mode keeps only the prefix sums (mean) or the token rows
    (endpoint), so storage is O(n*d); ``materialized`` mode stores every span
    vector, O(n*K*d).  Both yield the same vectors.
    """

    def __init__(
        self,
        tokens: TokenSequence | None,
        m: EmbeddingMatrix,
        cfg: SpanConfig = EVAL_SPANS,
        strategy: str = "mean",
        mode: str = "lazy",
        precompute_norms: bool = False,
        text: str | None = None,
    ):
        if strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {strategy!r}")
        if mode not in MODES:
            raise ValueError(f"unknown mode {mode!r}")
        if tokens is not None and len(tokens) != m.n:
            raise ValueError(f"dimension mismatch: {len(tokens)} tokens but {m.n} rows")
        self.doc_id = m.doc_id
        self.tokens = tokens
        self.text = text
        self.config = cfg
        self.strategy = strategy
        self.mode = mode
        self.n = m.n
        self.d = m.d
        self._matrix = m
        self._prefix = build_prefix(m) if strategy == "mean" else None
        self._rows = m.rows if strategy == "endpoint" else None
        self._blocks: dict[int, np.ndarray] | None = None
        self._norms: dict[int, np.ndarray] | None = None
        if mode == "materialized":
            self._blocks = {k: self._compute_block(k) for k in cfg.lengths(self.n)}
        if precompute_norms:
            self._norms = {k: np.linalg.norm(b, axis=1) for k, b in self.blocks()}

    @property
    def dim(self) -> int:
        return self.d if self.strategy == "mean" else 2 * self.d

    @property
    def matrix(self) -> EmbeddingMatrix:
        return self._matrix

    def __len__(self) -> int:
        return span_count(self.n, self.config)

    def spans(self) -> list[SpanRef]:
        return enumerate_spans(self.n, self.config, self.doc_id)

    def _compute_block(self, k: int) -> np.ndarray:
        return _block(k, self._rows, self._prefix, self.strategy)

    def blocks(self) -> Iterator[tuple[int, np.ndarray]]:
        """Yield ``(k, vectors)`` per span length; lazy blocks are transient."""
        for k in self.config.lengths(self.n):
            yield k, (self._blocks[k] if self._blocks is not None else self._compute_block(k))

    def block_norms(self, k: int, block: np.ndarray) -> np.ndarray:
        if self._norms is not None:
            return self._norms[k]
        return np.linalg.norm(block, axis=1)

    def vector(self, span: SpanRef | tuple[int, int]) -> np.ndarray:
        start, end = _bounds(span, self.n)
        k = end - start
        if not self.config.min_size <= k <= self.config.max_size:
            raise ValueError(f"span length {k} outside {self.config}")
        if self._blocks is not None:
            return self._blocks[k][start]
        if self.strategy == "mean":
            return mean_pool((start, end), self._prefix)
        return endpoint_concat((start, end), self._rows)

    def vectors(self) -> np.ndarray:
        """All span vectors in enumeration order (materializes them)."""
        spans = self.spans()
        out = np.empty((len(spans), self.dim))
        blocks = dict(self.blocks())
        for j, (_, s, e) in enumerate(spans):
            out[j] = blocks[e - s][s]
        return out

    def storage_nbytes(self) -> int:
        arrays = [self._prefix, self._rows]
        arrays += list(self._blocks.values()) if self._blocks else []
        arrays += list(self._norms.values()) if self._norms else []
        return sum(a.nbytes for a in arrays if a is not None)

    def char_span(self, start: int, end: int) -> tuple[int, int] | tuple[None, None]:
        if self.tokens is None:
            return None, None
        return self.tokens.char_span(start, end)


def build_span_index(
    tokens: TokenSequence | None,
    m: EmbeddingMatrix,
    cfg: SpanConfig = EVAL_SPANS,
    strategy: str = "mean",
    mode: str = "lazy",
    **kwargs,
) -> SpanIndex:
    return SpanIndex(tokens, m, cfg, strategy, mode, **kwargs)


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------


def save_index(path, indexes: list[SpanIndex], encoder_name: str = ""):
    """Write indexes: the exchange doc blocks plus config and source text.

    Layout: ``SAIX``, version u32, doc count u64, encoder name (u32-prefixed
    UTF-8); per doc: min/max span u32, strategy u8, mode u8, source text
    (u32-prefixed UTF-8), then an embedding exchange doc block.
    """
    with open(path, "wb") as fh:
        fh.write(INDEX_MAGIC)
        fh.write(struct.pack("<IQ", INDEX_VERSION, len(indexes)))
        _write_str(fh, encoder_name)
        for ix in indexes:
            if ix.tokens is None:
                raise ValueError(f"index {ix.doc_id!r} has no tokens to persist")
            fh.write(struct.pack("<IIBB", ix.config.min_size, ix.config.max_size,
                                 STRATEGIES.index(ix.strategy), MODES.index(ix.mode)))
            _write_str(fh, ix.text or "")
            write_doc_block(fh, ix.tokens, ix.matrix)


def load_index(path) -> tuple[list[SpanIndex], str]:
    out = []
    with open(path, "rb") as fh:
        if _read_exact(fh, 4) != INDEX_MAGIC:
            raise ValueError(f"{path}: not a span index file")
        version, count = struct.unpack("<IQ", _read_exact(fh, 12))
        if version != INDEX_VERSION:
            raise ValueError(f"{path}: unsupported version {version}")
        encoder_name = _read_str(fh)
        for _ in range(count):
            a, b, strat, mode = struct.unpack("<IIBB", _read_exact(fh, 10))
            text = _read_str(fh)
            tokens, m = read_doc_block(fh)
            out.append(SpanIndex(tokens, m, SpanConfig(a, b), STRATEGIES[strat], MODES[mode], text=text))
    return out, encoder_name
