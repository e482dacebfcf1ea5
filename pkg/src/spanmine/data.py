"""Dataset loaders and the synthetic planted-phrase generator."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .objective import Triple

logger = logging.getLogger(__name__)

DEFAULT_COLUMNS = {"score": "score", "origin_phrase": "origin_phrase", "context": "context"}
_POSITIONAL = {"score": 0, "origin_phrase": 1, "context": 2}


class DataFormatError(ValueError):
    pass


@dataclass(frozen=True)
class EvalRecord:
    id: str
    gold_score: float
    origin_phrase: str
    context: str

    def __post_init__(self):
        if not 0.0 <= self.gold_score <= 5.0:
            raise ValueError(f"gold score {self.gold_score} outside [0, 5]")
        if not self.origin_phrase.strip() or not self.context.strip():
            raise ValueError("empty origin phrase or context")


def _read_rows(path) -> list[list[str]]:
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.reader(fh, delimiter="\t", quoting=csv.QUOTE_NONE))


def load_stsb_context(path, column_map: dict | None = None, lenient: bool = False) -> list[EvalRecord]:
    """Parse a tab-separated STS-B-with-context file.

    ``column_map`` maps ``score``/``origin_phrase``/``context`` (and optionally
    ``id``) to header names or 0-based column indices.  A header row is
    detected when its first line names every mapped column; otherwise columns
    are positional (score, origin phrase, context).  Bad rows raise
    :class:`DataFormatError`, or are logged and skipped when ``lenient``.
    """
    rows = _read_rows(path)
    if not rows:
        if lenient:
            return []
        raise DataFormatError(f"{path}: empty file")
    cmap = dict(DEFAULT_COLUMNS if column_map is None else column_map)
    header = rows[0]
    named = [v for v in cmap.values() if isinstance(v, str)]
    if named and all(v in header for v in named):
        cols = {k: header.index(v) if isinstance(v, str) else int(v) for k, v in cmap.items()}
        if "id" not in cols and "id" in header:
            cols["id"] = header.index("id")
        body, first = rows[1:], 2
    elif named and column_map is not None:
        raise DataFormatError(f"{path}: missing columns {[v for v in named if v not in header]}")
    else:
        cols = {k: int(v) if not isinstance(v, str) else _POSITIONAL[k] for k, v in cmap.items()}
        body, first = rows, 1

    records = []
    for lineno, row in enumerate(body, first):
        if not row or all(not c.strip() for c in row):
            continue
        try:
            if max(cols.values()) >= len(row):
                raise DataFormatError(f"expected at least {max(cols.values()) + 1} columns, got {len(row)}")
            try:
                score = float(row[cols["score"]])
            except ValueError:
                raise DataFormatError(f"bad score {row[cols['score']]!r}") from None
            rec_id = row[cols["id"]] if "id" in cols else str(lineno)
            records.append(EvalRecord(rec_id, score, row[cols["origin_phrase"]], row[cols["context"]]))
        except ValueError as exc:
            msg = f"{path}:{lineno}: {exc}"
            if not lenient:
                raise DataFormatError(msg) from None
            logger.warning("skipping row: %s", msg)
    return records


def write_stsb_context(path, records: Sequence[EvalRecord]):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("id\tscore\torigin_phrase\tcontext\n")
        for r in records:
            fh.write(f"{r.id}\t{r.gold_score!r}\t{r.origin_phrase}\t{r.context}\n")


def load_msmarco_triples(path) -> list[Triple]:
    triples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != 3:
                raise DataFormatError(f"{path}:{lineno}: expected 3 tab-separated fields, got {len(fields)}")
            try:
                triples.append(Triple(*fields))
            except ValueError as exc:
                raise DataFormatError(f"{path}:{lineno}: {exc}") from None
    return triples


def write_triples(path, triples: Sequence[Triple]):
    with open(path, "w", encoding="utf-8") as fh:
        for t in triples:
            fh.write(f"{t.q}\t{t.p_true}\t{t.p_false}\n")


# ---------------------------------------------------------------------------
# synthetic data
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SynthParams:
    """Planted-phrase generator settings.

    ``noise_rate`` is the per-token substitution probability; a sequence
    cycles over records (record ``i`` uses ``noise_rate[i % len]``).
    """

    vocab_size: int = 2000
    phrase_len: tuple[int, int] = (3, 8)
    context_len: tuple[int, int] = (10, 30)
    noise_rate: float | tuple[float, ...] = 0.0
    count: int = 100
    seed: int = 0

    def __post_init__(self):
        rates = self.rates
        if not rates or any(not 0.0 <= r <= 1.0 for r in rates):
            raise ValueError("noise rates must lie in [0, 1]")
        lo, hi = self.phrase_len
        clo, chi = self.context_len
        if self.count < 1 or not 1 <= lo <= hi or not 0 <= clo <= chi:
            raise ValueError("invalid synthetic length/count settings")
        if self.vocab_size < 2 * hi + 1:
            raise ValueError("vocabulary too small for the phrase length")

    @property
    def rates(self) -> tuple[float, ...]:
        r = self.noise_rate
        return tuple(r) if isinstance(r, (tuple, list)) else (r,)


def synth_word(i: int) -> str:
    return f"w{i:05d}"


def synth_generate(p: SynthParams) -> tuple[list[EvalRecord], list[Triple]]:
    """Plant noisy paraphrases of random phrases inside random contexts.

    Gold score is ``5 * (1 - substituted / phrase_length)``.  Each record also
    yields a triple (phrase, its context, an unrelated random context).
    Context and substitute words never collide with the phrase's words.
    """
    rng = np.random.default_rng(p.seed)
    rates = p.rates
    records, triples = [], []
    for i in range(p.count):
        length = int(rng.integers(p.phrase_len[0], p.phrase_len[1] + 1))
        phrase_ids = rng.choice(p.vocab_size, size=length, replace=False)
        banned = set(phrase_ids.tolist())
        others = np.array([w for w in range(p.vocab_size) if w not in banned])

        rate = rates[i % len(rates)]
        flip = rng.random(length) < rate
        para = phrase_ids.copy()
        para[flip] = rng.choice(others, size=int(flip.sum()))

        def context(k):
            return others[rng.integers(0, others.size, size=k)]

        left = int(rng.integers(p.context_len[0], p.context_len[1] + 1))
        split = int(rng.integers(0, left + 1))
        ctx = context(left)
        tokens = [*ctx[:split], *para, *ctx[split:]]
        neg = context(len(tokens))

        phrase = " ".join(synth_word(w) for w in phrase_ids)
        context_text = " ".join(synth_word(w) for w in tokens)
        gold = 5.0 * (1.0 - flip.sum() / length)
        records.append(EvalRecord(f"synth-{p.seed}-{i}", float(gold), phrase, context_text))
        triples.append(Triple(phrase, context_text, " ".join(synth_word(w) for w in neg)))
    return records, triples
