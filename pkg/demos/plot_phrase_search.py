"""
Finding a phrase inside a passage
=================================

Encode a passage once, then score every span of 1 to 20 tokens against a
query without re-running the encoder.  Spans are mean-pooled from prefix
sums, so the index only keeps ``(n + 1) x d`` numbers per document.
"""

import numpy as np

from spanmine import ToyEncoder, ToyEncoderParams, SpanConfig, SpanIndex, best_span_match, encode, query_vector

# the window-0 identity encoder gives every token a fixed random unit vector,
# so a verbatim copy of the query scores exactly 1
encoder = ToyEncoder(ToyEncoderParams.identity(d=64))

text = "Catching a glimpse of the game, a group of men play soccer on the beach at dusk."
tokens, rows = encode(text, encoder, doc_id="beach")
index = SpanIndex(tokens, rows, SpanConfig(1, 20), text=text)
print(f"{len(tokens)} tokens, {len(index)} candidate spans")

for query in ["men play soccer", "Soccer on the BEACH!", "a game at dusk"]:
    _, qrows = encode(query, encoder)
    hit = best_span_match(query_vector(qrows, "mean"), index)
    print(f"{query!r:26} -> {hit.text!r} [{hit.char_start}:{hit.char_end}] score {hit.score:.4f}")

# the default encoder mixes neighbouring tokens into each vector, so the
# passage rows differ from the query rows even for a verbatim copy
contextual = ToyEncoder(ToyEncoderParams(seed=0))
tokens, rows = encode(text, contextual, doc_id="beach")
_, qrows = encode("men play soccer", contextual)
hit = best_span_match(query_vector(qrows, "mean"), SpanIndex(tokens, rows, SpanConfig(1, 20), text=text))
print(f"contextual encoder: {hit.text!r} score {hit.score:.4f}")
print("storage bytes per token:", index.storage_nbytes() / len(tokens), "=", (len(tokens) + 1) * 64 * 8 / len(tokens))
