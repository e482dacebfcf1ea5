"""
Three ways to score a phrase against its context
================================================

Synthetic records plant a noisy copy of a phrase inside a random context.
The gold score falls with the fraction of substituted words.  We compare

* ``full_context``: the whole context pooled into one vector,
* ``per_ngram``: every n-gram re-encoded on its own,
* ``single_pass``: the context encoded once and every span pooled from it,

by Pearson correlation with gold, and test the differences with Williams' t.
"""

from spanmine import SpanConfig, SynthParams, ToyEncoder, ToyEncoderParams, eval_setup, run_report, synth_generate

records, _ = synth_generate(SynthParams(count=150, seed=0, noise_rate=(0.0, 0.25, 0.5, 0.75, 1.0)))
print(records[1].gold_score, "|", records[1].origin_phrase, "|", records[1].context)

encoder = ToyEncoder(ToyEncoderParams(seed=0))
results = [eval_setup(records, encoder, s, SpanConfig(1, 20)) for s in ("full_context", "per_ngram", "single_pass")]
for r in results:
    print(f"{r.setup:13} pearson {r.pearson:.3f}  spearman {r.spearman:.3f}")

# each pair shares the gold column, hence the dependent-correlation test
report = run_report(results)
for c in report.comparisons:
    print(f"{c.setup_a} vs {c.setup_b}: t = {c.t:+.2f}, p = {c.p:.2g}")
