"""Writes loss_reference.jsonl: random contrastive-loss samples with the loss
evaluated in 60-digit arithmetic.

Floats are stored as repr strings so they parse back to the same doubles.
Run from this directory: python3 make_loss_reference.py
"""

import json
import random

import mpmath

mpmath.mp.dps = 60
rng = random.Random(20240611)


def loss(positives, negatives):
    total = mpmath.mpf(0)
    for p in positives:
        # -ln softmax = ln(1 + sum e^(n - p)), exactly 0 without negatives
        inner = mpmath.mpf(0)
        for n in negatives:
            inner += mpmath.exp(mpmath.mpf(n) - mpmath.mpf(p))
        total += mpmath.log1p(inner)
    return total


with open("loss_reference.jsonl", "w") as out:
    for _ in range(1000):
        m = rng.randint(1, 5)
        n = rng.randint(0, 10)
        positives = [rng.uniform(-50.0, 50.0) for _ in range(m)]
        negatives = [rng.uniform(-50.0, 50.0) for _ in range(n)]
        record = {
            "positives": [repr(x) for x in positives],
            "negatives": [repr(x) for x in negatives],
            "loss": mpmath.nstr(loss(positives, negatives), 40),
        }
        out.write(json.dumps(record) + "\n")
