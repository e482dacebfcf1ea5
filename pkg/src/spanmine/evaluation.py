"""The three evaluation setups, correlation reports and their TSV files.

Setups:

``full_context``
    one mean-pooled vector for the whole context against the mean-pooled
    origin phrase.
``per_ngram``
    every admissible n-gram of the context is re-encoded on its own and
    pooled; the prediction is the best score (N*K encoder calls).
``single_pass``
    the context is encoded once and every span is pooled from those rows.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import EvalRecord
from .embedding import Encoder, encode
from .search import best_span_match, normalized_cosine_many, pick_best, query_vector, worker_count
from .spans import EVAL_SPANS, SpanConfig, SpanIndex, enumerate_spans
from .stats import pearson, spearman, williams_test

SETUPS = ("full_context", "per_ngram", "single_pass")
SETUP_ALIASES = {"full": "full_context", "per-ngram": "per_ngram", "single-pass": "single_pass"}
SIGNIFICANCE = 0.05


class EvaluationError(RuntimeError):
    pass


@dataclass(frozen=True)
class Prediction:
    id: str
    gold: float
    prediction: float
    char_start: int | None = None
    char_end: int | None = None


@dataclass
class SetupResult:
    setup: str
    pearson: float
    spearman: float
    n: int
    predictions: list[Prediction] = field(default_factory=list)


@dataclass(frozen=True)
class WilliamsComparison:
    setup_a: str
    setup_b: str
    r12: float
    r13: float
    r23: float
    n: int
    t: float
    p: float

    @property
    def significant(self) -> bool:
        return self.p < SIGNIFICANCE


@dataclass
class EvalReport:
    results: list[SetupResult]
    comparisons: list[WilliamsComparison]
    config: dict[str, str] = field(default_factory=dict)

    def result(self, setup: str) -> SetupResult:
        for r in self.results:
            if r.setup == setup:
                return r
        raise KeyError(setup)

    def comparison(self, a: str, b: str) -> WilliamsComparison:
        for c in self.comparisons:
            if (c.setup_a, c.setup_b) == (a, b):
                return c
            if (c.setup_b, c.setup_a) == (a, b):
                return WilliamsComparison(b, a, c.r13, c.r12, c.r23, c.n, -c.t, c.p)
        raise KeyError((a, b))


def _pool(rows, strategy: str) -> np.ndarray | None:
    return query_vector(rows, strategy) if len(rows) else None


def _score_one(q: np.ndarray | None, v: np.ndarray | None) -> float:
    if q is None or v is None:
        return 0.0
    return float(normalized_cosine_many(v[None, :], q)[0])


def predict(record: EvalRecord, encoder: Encoder, setup: str, cfg: SpanConfig, strategy: str) -> Prediction:
    """Similarity between the origin phrase and the best match in the context."""
    _, qm = encode(record.origin_phrase, encoder, doc_id=f"{record.id}/q")
    tokens, cm = encode(record.context, encoder, doc_id=record.id)
    if setup == "full_context":
        score = _score_one(_pool(qm.rows, "mean"), _pool(cm.rows, "mean"))
        cs, ce = (tokens[0].start, tokens[-1].end) if len(tokens) else (None, None)
        return Prediction(record.id, record.gold_score, score, cs, ce)

    q = _pool(qm.rows, strategy)
    if setup == "single_pass":
        hit = best_span_match(q, SpanIndex(tokens, cm, cfg, strategy)) if q is not None else None
        if hit is None:
            return Prediction(record.id, record.gold_score, 0.0)
        return Prediction(record.id, record.gold_score, hit.score, hit.char_start, hit.char_end)

    if setup == "per_ngram":
        spans = enumerate_spans(len(tokens), cfg)
        offsets = [tokens.char_span(s.start, s.end) for s in spans]
        texts = sorted({record.context[a:b] for a, b in offsets})
        encoded = encoder.encode_many(texts, [f"{record.id}/ng{i}" for i in range(len(texts))])
        vec = {t: _pool(m.rows, strategy) for t, (_, m) in zip(texts, encoded)}
        by_len: dict[int, list[float]] = {}
        for s, (a, b) in zip(spans, offsets):
            by_len.setdefault(s.length, []).append(_score_one(q, vec[record.context[a:b]]))
        pick = pick_best((k, np.array(v)) for k, v in sorted(by_len.items()))
        if pick is None:
            return Prediction(record.id, record.gold_score, 0.0)
        start, k, score = pick
        cs, ce = tokens.char_span(start, start + k)
        return Prediction(record.id, record.gold_score, score, cs, ce)
    raise ValueError(f"unknown setup {setup!r}")


def eval_setup(
    records: Sequence[EvalRecord],
    encoder: Encoder,
    setup: str,
    cfg: SpanConfig = EVAL_SPANS,
    strategy: str = "mean",
) -> SetupResult:
    setup = SETUP_ALIASES.get(setup, setup)
    if setup not in SETUPS:
        raise ValueError(f"unknown setup {setup!r}")
    if not records:
        raise ValueError("no records to evaluate")

    def run(rec):
        try:
            return predict(rec, encoder, setup, cfg, strategy)
        except Exception as exc:
            raise EvaluationError(f"record {rec.id!r}: {exc}") from exc

    workers = min(worker_count(), len(records))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            preds = list(pool.map(run, records))
    else:
        preds = [run(r) for r in records]
    gold = [p.gold for p in preds]
    pred = [p.prediction for p in preds]
    return SetupResult(setup, pearson(gold, pred), spearman(gold, pred), len(preds), preds)


def compare(a: SetupResult, b: SetupResult) -> WilliamsComparison:
    """Williams' test of ``pearson(gold, a)`` vs ``pearson(gold, b)``."""
    if [p.id for p in a.predictions] != [p.id for p in b.predictions]:
        raise ValueError(f"setups {a.setup} and {b.setup} were run on different records")
    gold = [p.gold for p in a.predictions]
    pa = [p.prediction for p in a.predictions]
    pb = [p.prediction for p in b.predictions]
    r12, r13 = pearson(gold, pa), pearson(gold, pb)
    if pa == pb:
        return WilliamsComparison(a.setup, b.setup, r12, r13, 1.0, len(gold), 0.0, 1.0)
    r23 = pearson(pa, pb)
    t, p = williams_test(r12, r13, r23, len(gold))
    return WilliamsComparison(a.setup, b.setup, r12, r13, r23, len(gold), t, p)


def run_report(results: Sequence[SetupResult], path=None, config: dict | None = None) -> EvalReport:
    if len(results) < 2:
        raise ValueError("a report needs at least two setups")
    if len({r.n for r in results}) != 1:
        raise ValueError("setups were evaluated on different record counts")
    comps = [compare(a, b) for a, b in itertools.combinations(results, 2)]
    report = EvalReport(list(results), comps, {k: str(v) for k, v in (config or {}).items()})
    if path is not None:
        write_report(path, report)
    return report


# ---------------------------------------------------------------------------
# report files
# ---------------------------------------------------------------------------


def predictions_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".predictions.tsv")


def _opt(v) -> str:
    return "" if v is None else str(v)


def write_report(path, report: EvalReport):
    """Summary TSV at ``path`` plus per-record predictions next to it."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# kind\tfields...\n")
        for k, v in report.config.items():
            fh.write(f"config\t{k}\t{v}\n")
        fh.write("# setup\tname\tpearson\tspearman\tn\n")
        for r in report.results:
            fh.write(f"setup\t{r.setup}\t{r.pearson!r}\t{r.spearman!r}\t{r.n}\n")
        fh.write("# williams\tsetup_a\tsetup_b\tr12\tr13\tr23\tn\tt\tp\tsignificant\n")
        for c in report.comparisons:
            fh.write(
                f"williams\t{c.setup_a}\t{c.setup_b}\t{c.r12!r}\t{c.r13!r}\t{c.r23!r}\t{c.n}"
                f"\t{c.t!r}\t{c.p!r}\t{int(c.significant)}\n"
            )
    with open(predictions_path(path), "w", encoding="utf-8") as fh:
        fh.write("setup\tid\tgold\tprediction\tchar_start\tchar_end\n")
        for r in report.results:
            for p in r.predictions:
                fh.write(f"{r.setup}\t{p.id}\t{p.gold!r}\t{p.prediction!r}\t{_opt(p.char_start)}\t{_opt(p.char_end)}\n")


def load_report(path) -> EvalReport:
    config, results, comps = {}, [], []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.startswith("#") or not line.strip():
                continue
            f = line.rstrip("\n").split("\t")
            if f[0] == "config":
                config[f[1]] = f[2]
            elif f[0] == "setup":
                results.append(SetupResult(f[1], float(f[2]), float(f[3]), int(f[4])))
            elif f[0] == "williams":
                comps.append(WilliamsComparison(f[1], f[2], *map(float, f[3:6]), int(f[6]), float(f[7]), float(f[8])))
            else:
                raise ValueError(f"{path}: unknown record kind {f[0]!r}")
    by_setup = {r.setup: r for r in results}
    ppath = predictions_path(path)
    if ppath.exists():
        with open(ppath, encoding="utf-8") as fh:
            next(fh)
            for line in fh:
                s, rid, gold, pred, cs, ce = line.rstrip("\n").split("\t")
                by_setup[s].predictions.append(
                    Prediction(rid, float(gold), float(pred), int(cs) if cs else None, int(ce) if ce else None)
                )
    return EvalReport(results, comps, config)


def recompute(report: EvalReport) -> EvalReport:
    """Rebuild every aggregate from the stored per-record predictions."""
    results = []
    for r in report.results:
        gold = [p.gold for p in r.predictions]
        pred = [p.prediction for p in r.predictions]
        results.append(SetupResult(r.setup, pearson(gold, pred), spearman(gold, pred), len(gold), r.predictions))
    return run_report(results, config=report.config)


def is_close_report(a: EvalReport, b: EvalReport, tol: float = 1e-12) -> bool:
    def close(x, y):
        return math.isclose(x, y, rel_tol=0, abs_tol=tol)

    if [r.setup for r in a.results] != [r.setup for r in b.results]:
        return False
    for x, y in zip(a.results, b.results):
        if x.n != y.n or not (close(x.pearson, y.pearson) and close(x.spearman, y.spearman)):
            return False
    for x, y in zip(a.comparisons, b.comparisons):
        if (x.setup_a, x.setup_b) != (y.setup_a, y.setup_b) or not all(
            close(getattr(x, f), getattr(y, f)) for f in ("r12", "r13", "r23", "t", "p")
        ):
            return False
    return len(a.comparisons) == len(b.comparisons)
