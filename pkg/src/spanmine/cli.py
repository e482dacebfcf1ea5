"""Command-line interface: ``spanmine <command> [options]``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .bm25 import bm25_score, build_corpus_stats, load_stats, save_stats
from .data import SynthParams, load_msmarco_triples, load_stsb_context, synth_generate, write_stsb_context, write_triples
from .embedding import ToyEncoder, ToyEncoderParams, encode, make_encoder, tokenize
from .evaluation import SETUPS, SETUP_ALIASES, eval_setup, run_report
from .objective import LossConfig, TrainConfig, save_params, train_toy
from .search import query_vector, top_k_search
from .spans import SpanConfig, SpanIndex, load_index, save_index

log = logging.getLogger("spanmine")


def _common(p: argparse.ArgumentParser):
    p.add_argument("--min-span", type=int, default=1)
    p.add_argument("--max-span", type=int, default=20)
    p.add_argument("--encoder", default=None, help="toy[:k=v,...] | static:<path> | extern:<cmd> (default: toy)")
    p.add_argument("--strategy", choices=("mean", "endpoint"), default="mean")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-v", "--verbose", action="store_true")


def _span_config(args) -> SpanConfig:
    return SpanConfig(args.min_span, args.max_span)


def _encoder(args, fallback: str = "toy"):
    return make_encoder(args.encoder or fallback, seed=args.seed)


def _read_documents(path: Path) -> list[tuple[str, str]]:
    """A directory of ``*.txt`` files, or one document per line (``id<TAB>text`` allowed)."""
    if path.is_dir():
        return [(f.stem, f.read_text(encoding="utf-8")) for f in sorted(path.glob("*.txt"))]
    docs = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        doc_id, sep, text = line.partition("\t")
        docs.append((doc_id, text) if sep else (f"line-{lineno}", line))
    return docs


def cmd_index(args) -> int:
    enc = _encoder(args)
    cfg = _span_config(args)
    indexes = []
    for doc_id, text in _read_documents(Path(args.input)):
        tokens, m = encode(text, enc, doc_id=doc_id)
        indexes.append(SpanIndex(tokens, m, cfg, args.strategy, args.mode, text=text))
    save_index(args.out, indexes, encoder_name=args.encoder or "toy")
    print(f"indexed {len(indexes)} documents, {sum(len(ix) for ix in indexes)} spans -> {args.out}")
    return 0


def cmd_search(args) -> int:
    indexes, encoder_name = load_index(args.index)
    enc = _encoder(args, fallback=encoder_name or "toy")
    strategies = {ix.strategy for ix in indexes}
    strategy = strategies.pop() if len(strategies) == 1 else args.strategy
    _, qm = encode(args.query, enc)
    if qm.n == 0:
        print("error: query has no tokens", file=sys.stderr)
        return 2
    for hit in top_k_search(query_vector(qm, strategy), indexes, args.top_k):
        text = (hit.text or "").replace("\t", " ").replace("\n", " ")
        print(f"{hit.doc_id}\t{hit.score:.6f}\t{hit.char_start}\t{hit.char_end}\t{text}")
    return 0


def _column_map(spec: str | None):
    if not spec:
        return None
    out = {}
    for kv in spec.split(","):
        key, _, value = kv.partition("=")
        out[key] = int(value) if value.isdigit() else value
    return out


def cmd_eval(args) -> int:
    records = load_stsb_context(args.data, _column_map(args.column_map), lenient=args.lenient)
    if args.limit:
        records = records[: args.limit]
    enc = _encoder(args)
    cfg = _span_config(args)
    setups = SETUPS if args.setup == "all" else (SETUP_ALIASES[args.setup],)
    results = []
    for setup in setups:
        r = eval_setup(records, enc, setup, cfg, args.strategy)
        results.append(r)
        print(f"{r.setup}\tpearson={r.pearson:.4f}\tspearman={r.spearman:.4f}\tn={r.n}")
    config = {"min_span": cfg.min_size, "max_span": cfg.max_size, "encoder": enc.name, "strategy": args.strategy}
    if len(results) >= 2:
        report = run_report(results, args.out, config)
        for c in report.comparisons:
            flag = "*" if c.significant else ""
            print(f"williams\t{c.setup_a} vs {c.setup_b}\tt={c.t:.3f}\tp={c.p:.3g}{flag}")
    elif args.out:
        from .evaluation import EvalReport, write_report

        write_report(args.out, EvalReport(results, [], {k: str(v) for k, v in config.items()}))
    return 0


def cmd_train(args) -> int:
    triples = load_msmarco_triples(args.triples)
    if args.encoder:
        enc = make_encoder(args.encoder, seed=args.seed)
        if not isinstance(enc, ToyEncoder):
            print("error: train-toy needs a toy encoder", file=sys.stderr)
            return 2
        params = enc.params
    else:
        params = ToyEncoderParams(seed=args.seed)
    hyper = TrainConfig(
        lr=args.lr,
        steps=args.steps,
        seed=args.seed,
        batch_size=args.batch_size,
        loss=LossConfig(args.lam, SpanConfig(args.min_span, args.train_max_span)),
    )
    result = train_toy(triples, params, hyper)
    for (step, loss), (_, sep) in zip(result.loss_curve, result.separation_curve):
        print(f"step {step}\tloss={loss:.6f}\tseparation={sep:.4f}")
    save_params(args.out, result.params)
    return 0


def cmd_synth(args) -> int:
    rates = tuple(float(x) for x in args.noise.split(","))
    params = SynthParams(
        vocab_size=args.vocab,
        phrase_len=tuple(args.phrase_len),
        context_len=tuple(args.context_len),
        noise_rate=rates,
        count=args.count,
        seed=args.seed,
    )
    records, triples = synth_generate(params)
    if args.out_records:
        write_stsb_context(args.out_records, records)
    if args.out_triples:
        write_triples(args.out_triples, triples)
    print(f"generated {len(records)} records")
    return 0


def cmd_bm25(args) -> int:
    cache = Path(args.stats_cache) if args.stats_cache else None
    if cache is not None and cache.exists():
        stats = load_stats(cache)
    else:
        docs = [tokenize(text) for _, text in _read_documents(Path(args.corpus))]
        stats = build_corpus_stats(docs)
        if cache is not None:
            save_stats(cache, stats)
    doc = tokenize(Path(args.doc).read_text(encoding="utf-8"))
    print(f"{bm25_score(tokenize(args.query), doc, stats):.6f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spanmine", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("index", help="encode documents and write a span index")
    _common(p)
    p.add_argument("--input", required=True, help="directory of .txt files or one document per line")
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=("lazy", "materialized"), default="lazy")
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("search", help="best matching span per document")
    _common(p)
    p.add_argument("--query", required=True)
    p.add_argument("--index", required=True)
    p.add_argument("--top-k", type=int, default=10)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("eval", help="correlation of predicted vs gold similarity")
    _common(p)
    p.add_argument("--data", required=True, help="STS-B-with-context TSV")
    p.add_argument("--setup", choices=("full", "per-ngram", "single-pass", "all"), default="all")
    p.add_argument("--out", help="report path; predictions go next to it")
    p.add_argument("--column-map", help="e.g. score=2,origin_phrase=0,context=1 or header names")
    p.add_argument("--lenient", action="store_true", help="skip malformed rows")
    p.add_argument("--limit", type=int)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("train-toy", help="train the toy encoder on query/positive/negative triples")
    _common(p)
    p.add_argument("--triples", required=True)
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--lam", type=float, default=30.0)
    p.add_argument("--batch-size", type=int, default=1)
    p.add_argument("--train-max-span", type=int, default=10)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("synth", help="generate planted-phrase records and triples")
    _common(p)
    p.add_argument("--count", type=int, default=500)
    p.add_argument("--noise", default="0,0.25,0.5,0.75,1.0", help="comma-separated substitution rates")
    p.add_argument("--vocab", type=int, default=2000)
    p.add_argument("--phrase-len", type=int, nargs=2, default=(3, 8))
    p.add_argument("--context-len", type=int, nargs=2, default=(10, 30))
    p.add_argument("--out-records")
    p.add_argument("--out-triples")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("bm25", help="Okapi BM25 of a query against one document")
    _common(p)
    p.add_argument("--corpus", required=True, help="directory of .txt files or one document per line")
    p.add_argument("--query", required=True)
    p.add_argument("--doc", required=True)
    p.add_argument("--stats-cache", help="read/write corpus statistics here")
    p.set_defaults(func=cmd_bm25)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
