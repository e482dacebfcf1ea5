"""Phrase mining over aggregatable contextual token embeddings."""

from .bm25 import CorpusStats, bm25_score, build_corpus_stats
from .data import EvalRecord, SynthParams, load_msmarco_triples, load_stsb_context, synth_generate
from .embedding import (
    EmbeddingMatrix,
    ExternalEncoder,
    StaticVectorEncoder,
    TokenSequence,
    ToyEncoder,
    ToyEncoderParams,
    encode,
    make_encoder,
    tokenize,
    toy_base_vectors,
    toy_contextualize,
)
from .evaluation import EvalReport, eval_setup, load_report, run_report
from .objective import LossConfig, LossOutput, TrainConfig, Triple, slice_forward, slice_gradient, train_toy, evaluate_toy
from .search import ScoredSpan, best_span_match, normalized_cosine, query_vector, top_k_search
from .spans import (
    SpanConfig,
    SpanIndex,
    SpanRef,
    build_prefix,
    build_span_index,
    endpoint_concat,
    enumerate_spans,
    mean_pool,
)
from .stats import pearson, spearman, williams_test

__version__ = "0.1.0"
