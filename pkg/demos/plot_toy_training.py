"""
Training the toy encoder with the span loss
===========================================

Each training triple is (phrase, passage containing it, unrelated passage).
The loss rewards a best-span score in the positive passage that is higher
than the best-span score in the negative one:

    L = softplus(lam * (sim_false - sim_true)),  lam = 30

Only the two mixing matrices of the toy encoder are learned; token base
vectors stay fixed.
"""

from spanmine import SynthParams, ToyEncoderParams, TrainConfig, evaluate_toy, synth_generate, train_toy

train = synth_generate(SynthParams(count=200, seed=0))[1]
held_out = synth_generate(SynthParams(count=100, seed=1))[1]
print(train[0].q, "||", train[0].p_true[:60], "...")

params = ToyEncoderParams(d=32, seed=0)
result = train_toy(train, params, TrainConfig(lr=0.1, steps=400, seed=0))
for (step, loss), (_, sep) in zip(result.loss_curve, result.separation_curve):
    print(f"step {step:4d}  mean loss {loss:.4f}  sim_true - sim_false {sep:.4f}")

# the margin should also widen on triples the trainer never saw
for name, p in (("initial", params), ("trained", result.params)):
    loss, sep = evaluate_toy(held_out, p)
    print(f"held-out {name}: loss {loss:.4f}, separation {sep:.4f}")
