"""Protocol stub: whitespace tokens, vector = [len(token), position, id length]."""

import json
import re
import sys

for line in sys.stdin:
    if not line.strip():
        continue
    req = json.loads(line)
    toks = [{"text": m.group(), "start": m.start(), "end": m.end()} for m in re.finditer(r"\S+", req["text"])]
    vecs = [[float(len(t["text"])), float(i), float(len(req["id"]))] for i, t in enumerate(toks)]
    print(json.dumps({"id": req["id"], "tokens": toks, "vectors": vecs}))
