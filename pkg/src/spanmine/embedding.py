"""Tokenization, per-token encoders and the embedding exchange formats.

Three encoders are provided:

* :class:`ToyEncoder` -- a deterministic, trainable contextual encoder. Each
  token gets a pseudo-random unit "base" vector derived from a 64-bit FNV-1a
  hash of ``(seed, token text)``; the contextual vector of token ``i`` is
  ``A @ e_i + B @ c_i`` where ``c_i`` is the mean base vector of the
  neighbours within ``window`` positions (``c_i = 0`` without neighbours).
* :class:`StaticVectorEncoder` -- word2vec-style text vectors, one row per
  token, zero rows for unknown tokens.
* :class:`ExternalEncoder` -- any program speaking the line-delimited JSON
  exchange protocol over stdin/stdout.

Base-vector hash (bit exact)::

    h = FNV-1a-64(seed.to_bytes(8, "little", signed=False) + text.encode("utf-8"))
    e = numpy.random.Generator(PCG64(h)).standard_normal(d); e /= ||e||
    e = float32(e)
"""

from __future__ import annotations

import json
import logging
import re
import shlex
import struct
import subprocess
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

logger = logging.getLogger(__name__)

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1

EXCHANGE_MAGIC = b"SAEM"
EXCHANGE_VERSION = 1

_WORD = re.compile(r"\S+")


class Token(NamedTuple):
    text: str
    start: int
    end: int


@dataclass(frozen=True)
class TokenSequence:
    """Ordered tokens with character offsets into the original text."""

    tokens: tuple[Token, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(Token(*t) for t in self.tokens))
        prev_end = -1
        for tok in self.tokens:
            if not tok.text:
                raise ValueError("empty token text")
            if tok.start < 0 or tok.end <= tok.start or tok.start < prev_end:
                raise ValueError(f"bad token offsets {tok.start}:{tok.end}")
            prev_end = tok.end

    def __len__(self) -> int:
        return len(self.tokens)

    def __iter__(self):
        return iter(self.tokens)

    def __getitem__(self, i):
        return self.tokens[i]

    @property
    def texts(self) -> list[str]:
        return [t.text for t in self.tokens]

    def char_span(self, start: int, end: int) -> tuple[int, int]:
        """Character interval covered by the half-open token range."""
        return self.tokens[start].start, self.tokens[end - 1].end


@dataclass
class EmbeddingMatrix:
    """Per-token vectors of one document, stored as float32 ``(n, d)``."""

    rows: np.ndarray
    doc_id: str = ""
    unknown: np.ndarray | None = None

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.float32)
        if rows.ndim != 2:
            raise ValueError(f"expected a 2-D matrix, got shape {rows.shape}")
        if not np.all(np.isfinite(rows)):
            raise ValueError(f"non-finite embedding entries in {self.doc_id!r}")
        self.rows = rows

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    @property
    def d(self) -> int:
        return self.rows.shape[1]

    def __len__(self) -> int:
        return self.n


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def tokenize(text: str) -> TokenSequence:
    """Lowercase, split on whitespace and strip edge punctuation.

    >>> tokenize("in mid-air flight.").texts
    ['in', 'mid-air', 'flight']
    """
    tokens = []
    for m in _WORD.finditer(text):
        start, end = m.span()
        while start < end and _is_punct(text[start]):
            start += 1
        while end > start and _is_punct(text[end - 1]):
            end -= 1
        if start < end:
            tokens.append(Token(text[start:end].lower(), start, end))
    return TokenSequence(tuple(tokens))


def fnv1a_64(data: bytes) -> int:
    h = FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & _MASK64
    return h


def token_hash(text: str, seed: int) -> int:
    return fnv1a_64((seed & _MASK64).to_bytes(8, "little") + text.encode("utf-8"))


def base_vector(text: str, seed: int, d: int) -> np.ndarray:
    rng = np.random.Generator(np.random.PCG64(token_hash(text, seed)))
    v = rng.standard_normal(d)
    # rounded to float32 so base rows survive EmbeddingMatrix storage unchanged
    return (v / np.linalg.norm(v)).astype(np.float32).astype(np.float64)


# ---------------------------------------------------------------------------
# toy contextual encoder
# ---------------------------------------------------------------------------


@dataclass
class ToyEncoderParams:
    """Parameters of the toy contextualizer ``v_i = A e_i + B c_i``.

    When ``A``/``B`` are omitted they are drawn from the seed: ``A = Q S Q^T``
    with ``Q`` a random orthogonal matrix and ``S = diag(decay**j)``, and
    ``B = mix * G / sqrt(d)`` with ``G`` standard normal.  ``decay < 1`` makes
    the untrained encoder anisotropic (unrelated texts look alike);
    ``decay=1, mix=0`` is the identity encoder.
    """

    d: int = 64
    window: int = 2
    A: np.ndarray | None = None
    B: np.ndarray | None = None
    seed: int = 0
    mix: float = field(default=0.05, repr=False)
    decay: float = field(default=0.5, repr=False)

    def __post_init__(self):
        if self.d < 1 or self.window < 0:
            raise ValueError("d must be positive and window non-negative")
        rng = np.random.Generator(np.random.PCG64(token_hash("\x00toy-init", self.seed)))
        if self.A is None:
            q, _ = np.linalg.qr(rng.standard_normal((self.d, self.d)))
            self.A = (q * self.decay ** np.arange(self.d)) @ q.T
        if self.B is None:
            self.B = self.mix * rng.standard_normal((self.d, self.d)) / np.sqrt(self.d)
        self.A = np.array(self.A, dtype=np.float64)
        self.B = np.array(self.B, dtype=np.float64)
        if self.A.shape != (self.d, self.d) or self.B.shape != (self.d, self.d):
            raise ValueError(f"A and B must be {self.d}x{self.d}")

    @classmethod
    def identity(cls, d: int = 64, window: int = 0, seed: int = 0) -> "ToyEncoderParams":
        return cls(d=d, window=window, A=np.eye(d), B=np.zeros((d, d)), seed=seed)

    def copy(self) -> "ToyEncoderParams":
        return ToyEncoderParams(d=self.d, window=self.window, A=self.A.copy(), B=self.B.copy(), seed=self.seed)


def toy_base_vectors(tokens: TokenSequence | Sequence[str], params: ToyEncoderParams) -> EmbeddingMatrix:
    texts = tokens.texts if isinstance(tokens, TokenSequence) else list(tokens)
    rows = np.zeros((len(texts), params.d))
    for i, t in enumerate(texts):
        rows[i] = base_vector(t, params.seed, params.d)
    return EmbeddingMatrix(rows)


def _window_sum_excl(x: np.ndarray, w: int) -> np.ndarray:
    """Sum of rows within ``w`` positions of each row, excluding the row."""
    n = x.shape[0]
    csum = np.zeros((n + 1,) + x.shape[1:])
    np.cumsum(x, axis=0, out=csum[1:])
    idx = np.arange(n)
    lo = np.maximum(idx - w, 0)
    hi = np.minimum(idx + w + 1, n)
    return csum[hi] - csum[lo] - x


def neighbour_counts(n: int, w: int) -> np.ndarray:
    idx = np.arange(n)
    return (np.minimum(idx + w, n - 1) - np.maximum(idx - w, 0)).astype(np.float64)


def context_means(e: np.ndarray, w: int) -> np.ndarray:
    """``c_i``: mean of base vectors within the window, excluding ``i``."""
    e = np.asarray(e, dtype=np.float64)
    if e.shape[0] == 0 or w == 0:
        return np.zeros_like(e)
    counts = neighbour_counts(e.shape[0], w)
    sums = _window_sum_excl(e, w)
    safe = np.where(counts > 0, counts, 1.0)
    return np.where(counts[:, None] > 0, sums / safe[:, None], 0.0)


def toy_contextualize_array(e: np.ndarray, params: ToyEncoderParams) -> np.ndarray:
    e = np.asarray(e, dtype=np.float64)
    if e.ndim != 2 or e.shape[1] != params.d:
        raise ValueError(f"dimension mismatch: base has shape {e.shape}, params.d={params.d}")
    return e @ params.A.T + context_means(e, params.window) @ params.B.T


def toy_contextualize(base: EmbeddingMatrix, params: ToyEncoderParams) -> EmbeddingMatrix:
    if base.d != params.d:
        raise ValueError(f"dimension mismatch: base.d={base.d}, params.d={params.d}")
    out = toy_contextualize_array(base.rows.astype(np.float64), params)
    return EmbeddingMatrix(out, doc_id=base.doc_id)


def toy_contextualize_backward(e: np.ndarray, params: ToyEncoderParams, grad_out: np.ndarray):
    """Pull ``dL/dV`` back to ``(dL/dA, dL/dB, dL/dE)``."""
    e = np.asarray(e, dtype=np.float64)
    g = np.asarray(grad_out, dtype=np.float64)
    c = context_means(e, params.window)
    d_a = g.T @ e
    d_b = g.T @ c
    d_e = g @ params.A
    if params.window > 0 and e.shape[0] > 1:
        gc = g @ params.B
        counts = neighbour_counts(e.shape[0], params.window)
        scaled = np.where(counts[:, None] > 0, gc / np.where(counts > 0, counts, 1.0)[:, None], 0.0)
        d_e = d_e + _window_sum_excl(scaled, params.window)
    return d_a, d_b, d_e


# ---------------------------------------------------------------------------
# encoders
# ---------------------------------------------------------------------------


class Encoder:
    """Base class: subclasses implement :meth:`encode`."""

    name = "encoder"
    dim: int

    def encode(self, text: str, doc_id: str = "") -> tuple[TokenSequence, EmbeddingMatrix]:
        raise NotImplementedError

    def encode_many(self, texts: Sequence[str], doc_ids: Sequence[str] | None = None):
        ids = doc_ids if doc_ids is not None else [""] * len(texts)
        return [self.encode(t, i) for t, i in zip(texts, ids)]


class ToyEncoder(Encoder):
    def __init__(self, params: ToyEncoderParams | None = None):
        self.params = params if params is not None else ToyEncoderParams()
        self.dim = self.params.d
        self._cache: dict[str, np.ndarray] = {}

    @property
    def name(self) -> str:
        p = self.params
        return f"toy:d={p.d},w={p.window},seed={p.seed}"

    def base_rows(self, texts: Sequence[str]) -> np.ndarray:
        out = np.empty((len(texts), self.dim))
        for i, t in enumerate(texts):
            v = self._cache.get(t)
            if v is None:
                v = base_vector(t, self.params.seed, self.dim)
                self._cache[t] = v
            out[i] = v
        return out

    def encode_tokens(self, tokens: TokenSequence, doc_id: str = "") -> EmbeddingMatrix:
        rows = toy_contextualize_array(self.base_rows(tokens.texts), self.params)
        return EmbeddingMatrix(rows, doc_id=doc_id)

    def encode(self, text, doc_id=""):
        tokens = tokenize(text)
        return tokens, self.encode_tokens(tokens, doc_id)


class StaticVectorEncoder(Encoder):
    """Context-free lookup of word vectors; unknown tokens get zero rows."""

    def __init__(self, vectors: dict[str, np.ndarray], name: str = "static"):
        if not vectors:
            raise ValueError("empty vector table")
        dims = {len(v) for v in vectors.values()}
        if len(dims) != 1:
            raise ValueError(f"inconsistent vector dimensions {sorted(dims)}")
        self.vectors = {k: np.asarray(v, dtype=np.float32) for k, v in vectors.items()}
        self.dim = dims.pop()
        self.name = name

    @classmethod
    def from_file(cls, path) -> "StaticVectorEncoder":
        vectors = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                parts = line.rstrip("\n").split(" ")
                if lineno == 1 and len(parts) == 2 and all(p.isdigit() for p in parts):
                    continue  # word2vec header "count dim"
                if len(parts) < 2 or not parts[0]:
                    continue
                try:
                    vectors[parts[0]] = np.array([float(x) for x in parts[1:]], dtype=np.float32)
                except ValueError as exc:
                    raise ValueError(f"{path}:{lineno}: bad vector line") from exc
        return cls(vectors, name=f"static:{path}")

    def encode(self, text, doc_id=""):
        tokens = tokenize(text)
        rows = np.zeros((len(tokens), self.dim), dtype=np.float32)
        unknown = np.zeros(len(tokens), dtype=bool)
        for i, t in enumerate(tokens.texts):
            v = self.vectors.get(t)
            if v is None:
                unknown[i] = True
            else:
                rows[i] = v
        if unknown.any():
            logger.debug("%d unknown tokens in %r", int(unknown.sum()), doc_id)
        return tokens, EmbeddingMatrix(rows, doc_id=doc_id, unknown=unknown)


class ExternalEncoderError(RuntimeError):
    pass


def encode_requests(texts: Sequence[str], ids: Sequence[str]) -> str:
    return "".join(json.dumps({"id": i, "text": t}, ensure_ascii=False) + "\n" for i, t in zip(ids, texts))


def decode_responses(payload: str, ids: Sequence[str]) -> list[tuple[TokenSequence, EmbeddingMatrix]]:
    lines = [ln for ln in payload.splitlines() if ln.strip()]
    if len(lines) != len(ids):
        raise ExternalEncoderError(f"expected {len(ids)} responses, got {len(lines)}")
    out = []
    dim = None
    for lineno, (line, want) in enumerate(zip(lines, ids), 1):
        try:
            msg = json.loads(line)
            got = msg["id"]
            tokens = TokenSequence(tuple(Token(t["text"], int(t["start"]), int(t["end"])) for t in msg["tokens"]))
            vectors = np.array(msg["vectors"], dtype=np.float32)
        except (KeyError, TypeError, ValueError) as exc:
            raise ExternalEncoderError(f"response {lineno}: malformed ({exc})") from exc
        if got != want:
            raise ExternalEncoderError(f"response {lineno}: id {got!r} != request id {want!r}")
        if len(tokens) == 0:
            vectors = vectors.reshape(0, dim or 0)
        if vectors.ndim != 2 or vectors.shape[0] != len(tokens):
            raise ExternalEncoderError(f"response {lineno}: {len(tokens)} tokens but vectors shape {vectors.shape}")
        if len(tokens):
            if dim is not None and vectors.shape[1] != dim:
                raise ExternalEncoderError(f"response {lineno}: dimension {vectors.shape[1]} != {dim}")
            dim = vectors.shape[1]
        try:
            out.append((tokens, EmbeddingMatrix(vectors, doc_id=want)))
        except ValueError as exc:
            raise ExternalEncoderError(f"response {lineno}: {exc}") from exc
    return out


class ExternalEncoder(Encoder):
    """Runs ``command`` once per batch, piping requests through stdin."""

    def __init__(self, command: str | Sequence[str], timeout: float | None = 600.0):
        self.command = shlex.split(command) if isinstance(command, str) else list(command)
        self.timeout = timeout
        self.name = "extern:" + shlex.join(self.command)
        self._dim: int | None = None

    @property
    def dim(self) -> int:
        if self._dim is None:
            self.encode("dimension probe")
        return self._dim

    def encode_many(self, texts, doc_ids=None):
        if not texts:
            return []
        ids = list(doc_ids) if doc_ids is not None else [str(i) for i in range(len(texts))]
        try:
            proc = subprocess.run(
                self.command,
                input=encode_requests(texts, ids),
                capture_output=True,
                text=True,
                encoding="utf-8",
                timeout=self.timeout,
            )
        except (OSError, subprocess.TimeoutExpired) as exc:
            raise ExternalEncoderError(f"could not run {self.command[0]!r}: {exc}") from exc
        if proc.returncode != 0:
            raise ExternalEncoderError(f"encoder exited with {proc.returncode}: {proc.stderr.strip()[:500]}")
        out = decode_responses(proc.stdout, ids)
        for _, m in out:
            if m.n:
                self._dim = m.d
                break
        return out

    def encode(self, text, doc_id=""):
        return self.encode_many([text], [doc_id or "0"])[0]


def encode(text: str, encoder: Encoder, doc_id: str = "") -> tuple[TokenSequence, EmbeddingMatrix]:
    tokens, m = encoder.encode(text, doc_id)
    if len(tokens) != m.n:
        raise ValueError(f"encoder returned {m.n} rows for {len(tokens)} tokens")
    return tokens, m


def make_encoder(spec: str, seed: int = 0) -> Encoder:
    """Build an encoder from ``toy[:k=v,...]``, ``static:<path>`` or ``extern:<cmd>``.

    Toy keys: ``d``, ``w`` (window), ``mix``, ``decay``, ``seed`` and ``params`` (a path
    to a trained parameter file, see :func:`spanmine.objective.load_params`).
    """
    kind, _, arg = spec.partition(":")
    if kind == "toy":
        opts = dict(kv.split("=", 1) for kv in arg.split(",") if kv) if arg else {}
        if "params" in opts:
            from .objective import load_params

            return ToyEncoder(load_params(opts["params"]))
        params = ToyEncoderParams(
            d=int(opts.get("d", 64)),
            window=int(opts.get("w", 2)),
            seed=int(opts.get("seed", seed)),
            mix=float(opts.get("mix", 0.05)),
            decay=float(opts.get("decay", 0.5)),
        )
        return ToyEncoder(params)
    if kind == "static":
        return StaticVectorEncoder.from_file(arg)
    if kind == "extern":
        return ExternalEncoder(arg)
    raise ValueError(f"unknown encoder spec {spec!r}")


# ---------------------------------------------------------------------------
# binary exchange file
# ---------------------------------------------------------------------------


def _write_str(fh, s: str):
    b = s.encode("utf-8")
    fh.write(struct.pack("<I", len(b)))
    fh.write(b)


def _read_exact(fh, n: int) -> bytes:
    b = fh.read(n)
    if len(b) != n:
        raise ValueError("truncated file")
    return b


def _read_str(fh) -> str:
    (n,) = struct.unpack("<I", _read_exact(fh, 4))
    return _read_exact(fh, n).decode("utf-8")


def write_doc_block(fh, tokens: TokenSequence, m: EmbeddingMatrix):
    if len(tokens) != m.n:
        raise ValueError(f"{m.doc_id!r}: {len(tokens)} tokens but {m.n} rows")
    _write_str(fh, m.doc_id)
    fh.write(struct.pack("<II", m.n, m.d))
    for tok in tokens:
        _write_str(fh, tok.text)
        fh.write(struct.pack("<II", tok.start, tok.end))
    fh.write(np.ascontiguousarray(m.rows, dtype="<f4").tobytes())


def read_doc_block(fh) -> tuple[TokenSequence, EmbeddingMatrix]:
    doc_id = _read_str(fh)
    n, d = struct.unpack("<II", _read_exact(fh, 8))
    toks = []
    for _ in range(n):
        text = _read_str(fh)
        start, end = struct.unpack("<II", _read_exact(fh, 8))
        toks.append(Token(text, start, end))
    rows = np.frombuffer(_read_exact(fh, 4 * n * d), dtype="<f4").reshape(n, d)
    return TokenSequence(tuple(toks)), EmbeddingMatrix(rows.astype(np.float32), doc_id=doc_id)


def write_embeddings(path, docs: Iterable[tuple[TokenSequence, EmbeddingMatrix]]):
    docs = list(docs)
    dims = {m.d for _, m in docs if m.n}
    if len(dims) > 1:
        raise ValueError(f"mixed dimensions in corpus: {sorted(dims)}")
    with open(path, "wb") as fh:
        fh.write(EXCHANGE_MAGIC)
        fh.write(struct.pack("<IQ", EXCHANGE_VERSION, len(docs)))
        for tokens, m in docs:
            write_doc_block(fh, tokens, m)


def read_embeddings(path) -> list[tuple[TokenSequence, EmbeddingMatrix]]:
    with open(path, "rb") as fh:
        if _read_exact(fh, 4) != EXCHANGE_MAGIC:
            raise ValueError(f"{path}: not an embedding exchange file")
        version, count = struct.unpack("<IQ", _read_exact(fh, 12))
        if version != EXCHANGE_VERSION:
            raise ValueError(f"{path}: unsupported version {version}")
        return [read_doc_block(fh) for _ in range(count)]


def write_requests(path, texts: Sequence[str], ids: Sequence[str]):
    Path(path).write_text(encode_requests(texts, ids), encoding="utf-8")


def read_responses(path, ids: Sequence[str]):
    return decode_responses(Path(path).read_text(encoding="utf-8"), ids)
