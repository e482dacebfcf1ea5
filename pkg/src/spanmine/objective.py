"""Late-interaction span loss, its gradients, and a trainer for the toy encoder.

The loss of a triple (query, positive passage, negative passage) is::

    L = -lam * sim_true + log(exp(lam * sim_true) + exp(lam * sim_false))
      = softplus(lam * (sim_false - sim_true))

where ``sim_*`` is the best normalized cosine between the mean-pooled query
and any admissible span of the passage.  Gradients use the subgradient of the
max: the whole mass goes to the (first) argmax span.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field

import numpy as np

from .embedding import (
    EmbeddingMatrix,
    ToyEncoder,
    ToyEncoderParams,
    tokenize,
    toy_contextualize_array,
    toy_contextualize_backward,
)
from .search import NORM_EPS, normalized_cosine_many, pick_best
from .spans import TRAIN_SPANS, SpanConfig, SpanRef, build_prefix

logger = logging.getLogger(__name__)

PARAMS_MAGIC = b"STOY"


@dataclass(frozen=True)
class Triple:
    q: str
    p_true: str
    p_false: str

    def __post_init__(self):
        for name in ("q", "p_true", "p_false"):
            if len(tokenize(getattr(self, name))) == 0:
                raise ValueError(f"triple field {name!r} is empty after tokenization")


@dataclass(frozen=True)
class LossConfig:
    lam: float = 30.0
    spans: SpanConfig = TRAIN_SPANS

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lam must be positive")


@dataclass(frozen=True)
class LossOutput:
    L: float
    sim_true: float
    sim_false: float
    argmax_true: SpanRef
    argmax_false: SpanRef


@dataclass
class SliceGradients:
    loss: LossOutput
    d_query: np.ndarray
    d_true: np.ndarray
    d_false: np.ndarray


def softplus(x: float) -> float:
    return float(np.logaddexp(0.0, x))


def _sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + np.exp(-x))
    z = np.exp(x)
    return z / (1.0 + z)


def _rows(m) -> np.ndarray:
    rows = m.rows if isinstance(m, EmbeddingMatrix) else m
    return np.asarray(rows, dtype=np.float64)


def _best_span(u: np.ndarray, rows: np.ndarray, cfg: SpanConfig, doc_id: str):
    prefix = build_prefix(rows)
    pick = pick_best(
        (k, normalized_cosine_many((prefix[k:] - prefix[:-k]) / k, u)) for k in cfg.lengths(rows.shape[0])
    )
    if pick is None:
        raise ValueError(f"passage {doc_id!r} with {rows.shape[0]} tokens has no span under {cfg}")
    start, k, score = pick
    return SpanRef(doc_id, start, start + k), score


def _check(q, pt, pf):
    if q.shape[0] == 0:
        raise ValueError("empty query")
    if not (q.shape[1] == pt.shape[1] == pf.shape[1]):
        raise ValueError(f"dimension mismatch: {q.shape[1]}, {pt.shape[1]}, {pf.shape[1]}")


def slice_forward(q_emb, pt_emb, pf_emb, cfg: LossConfig = LossConfig()) -> LossOutput:
    q, pt, pf = _rows(q_emb), _rows(pt_emb), _rows(pf_emb)
    _check(q, pt, pf)
    u = q.mean(axis=0)
    span_t, sim_t = _best_span(u, pt, cfg.spans, "p_true")
    span_f, sim_f = _best_span(u, pf, cfg.spans, "p_false")
    return LossOutput(softplus(cfg.lam * (sim_f - sim_t)), sim_t, sim_f, span_t, span_f)


def _sim_grads(u: np.ndarray, s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of ``(1 + cos(u, s)) / 2`` w.r.t. ``u`` and ``s``."""
    nu, ns = np.linalg.norm(u), np.linalg.norm(s)
    if nu < NORM_EPS or ns < NORM_EPS:
        return np.zeros_like(u), np.zeros_like(s)
    cos = float(u @ s) / (nu * ns)
    du = (s / (nu * ns) - cos * u / nu**2) / 2.0
    ds = (u / (nu * ns) - cos * s / ns**2) / 2.0
    return du, ds


def slice_gradient(q_emb, pt_emb, pf_emb, cfg: LossConfig = LossConfig()) -> SliceGradients:
    """Loss plus ``dL/d(row)`` for every row of the three input matrices."""
    q, pt, pf = _rows(q_emb), _rows(pt_emb), _rows(pf_emb)
    out = slice_forward(q, pt, pf, cfg)
    sig = _sigmoid(cfg.lam * (out.sim_false - out.sim_true))
    g_true, g_false = -cfg.lam * sig, cfg.lam * sig

    u = q.mean(axis=0)
    d_q = np.zeros_like(q)
    d_t = np.zeros_like(pt)
    d_f = np.zeros_like(pf)
    du_total = np.zeros_like(u)
    for rows, span, g, d_rows in ((pt, out.argmax_true, g_true, d_t), (pf, out.argmax_false, g_false, d_f)):
        s = rows[span.start : span.end].mean(axis=0)
        du, ds = _sim_grads(u, s)
        du_total += g * du
        d_rows[span.start : span.end] = g * ds / span.length
    d_q[:] = du_total / q.shape[0]
    return SliceGradients(out, d_q, d_t, d_f)


# ---------------------------------------------------------------------------
# toy training
# ---------------------------------------------------------------------------


class TrainingDivergedError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    lr: float = 0.1
    steps: int = 200
    seed: int = 0
    batch_size: int = 1
    loss: LossConfig = field(default_factory=LossConfig)
    # evaluate the full training set every this many steps (default: one epoch)
    eval_every: int | None = None


@dataclass
class TrainResult:
    params: ToyEncoderParams
    loss_curve: list[tuple[int, float]]
    separation_curve: list[tuple[int, float]]

    @property
    def initial_loss(self) -> float:
        return self.loss_curve[0][1]

    @property
    def final_loss(self) -> float:
        return self.loss_curve[-1][1]


def _triple_bases(triples: list[Triple], encoder: ToyEncoder):
    return [
        tuple(encoder.base_rows(tokenize(text).texts) for text in (t.q, t.p_true, t.p_false))
        for t in triples
    ]


def _encode_triple(es, params: ToyEncoderParams, where: str) -> list[np.ndarray]:
    vs = [toy_contextualize_array(e, params) for e in es]
    # squared magnitude overflows before the entries do
    if not all(np.isfinite(np.einsum("ij,ij->", v, v)) for v in vs):
        raise TrainingDivergedError(f"{where}: non-finite embeddings")
    return vs


def _eval(bases, params: ToyEncoderParams, cfg: LossConfig, where: str = "evaluation") -> tuple[float, float]:
    losses, seps = [], []
    for es in bases:
        out = slice_forward(*_encode_triple(es, params, where), cfg)
        losses.append(out.L)
        seps.append(out.sim_true - out.sim_false)
    return float(np.mean(losses)), float(np.mean(seps))


def evaluate_toy(triples: list[Triple], params: ToyEncoderParams, cfg: LossConfig = LossConfig()):
    """Mean loss and mean ``sim_true - sim_false`` over ``triples``."""
    return _eval(_triple_bases(triples, ToyEncoder(params)), params, cfg)


def train_toy(triples: list[Triple], params: ToyEncoderParams, hyper: TrainConfig = TrainConfig()) -> TrainResult:
    """Plain gradient descent on ``A`` and ``B``; base vectors stay fixed.

    Argmax spans are re-selected at every step. Batches are drawn from a
    seeded permutation, reshuffled each epoch.
    """
    if not triples:
        raise ValueError("no training triples")
    params = params.copy()
    bases = _triple_bases(triples, ToyEncoder(params))
    rng = np.random.default_rng(hyper.seed)
    per_epoch = -(-len(triples) // hyper.batch_size)
    eval_every = hyper.eval_every or per_epoch

    loss, sep = _eval(bases, params, hyper.loss)
    loss_curve, sep_curve = [(0, loss)], [(0, sep)]
    order = np.empty(0, dtype=int)
    for step in range(1, hyper.steps + 1):
        if order.size < hyper.batch_size:
            order = np.concatenate([order, rng.permutation(len(triples))])
        batch, order = order[: hyper.batch_size], order[hyper.batch_size :]
        d_a = np.zeros_like(params.A)
        d_b = np.zeros_like(params.B)
        for i in batch:
            es = bases[i]
            vs = _encode_triple(es, params, f"step {step}")
            g = slice_gradient(*vs, hyper.loss)
            if not np.isfinite(g.loss.L):
                raise TrainingDivergedError(f"step {step}: loss is {g.loss.L} on triple {i}")
            for e, dv in zip(es, (g.d_query, g.d_true, g.d_false)):
                ga, gb, _ = toy_contextualize_backward(e, params, dv)
                d_a += ga
                d_b += gb
        params.A -= hyper.lr * d_a / len(batch)
        params.B -= hyper.lr * d_b / len(batch)
        if not (np.all(np.isfinite(params.A)) and np.all(np.isfinite(params.B))):
            raise TrainingDivergedError(f"step {step}: non-finite parameters (lr={hyper.lr})")
        if step % eval_every == 0 or step == hyper.steps:
            loss, sep = _eval(bases, params, hyper.loss, f"step {step}")
            if not np.isfinite(loss):
                raise TrainingDivergedError(f"step {step}: mean loss is {loss}")
            loss_curve.append((step, loss))
            sep_curve.append((step, sep))
            logger.info("step %d: loss %.6f separation %.4f", step, loss, sep)
    return TrainResult(params, loss_curve, sep_curve)


def save_params(path, params: ToyEncoderParams):
    """``STOY``, d u32, window u32, seed u64, then A and B as float64 LE."""
    with open(path, "wb") as fh:
        fh.write(PARAMS_MAGIC)
        fh.write(struct.pack("<IIQ", params.d, params.window, params.seed))
        fh.write(np.ascontiguousarray(params.A, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(params.B, dtype="<f8").tobytes())


def load_params(path) -> ToyEncoderParams:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != PARAMS_MAGIC:
        raise ValueError(f"{path}: not a toy parameter file")
    d, window, seed = struct.unpack_from("<IIQ", data, 4)
    body = np.frombuffer(data, dtype="<f8", offset=20)
    if body.size != 2 * d * d:
        raise ValueError(f"{path}: expected {2 * d * d} values, found {body.size}")
    return ToyEncoderParams(d=d, window=window, A=body[: d * d].reshape(d, d), B=body[d * d :].reshape(d, d), seed=seed)
