"""Regenerates gate_cases.json: random frames and query sets with the
positive-query softmax score evaluated at 60 significant digits.

Inputs are stored as IEEE-754 bit patterns so the Rust side reads exactly
the doubles used here."""

import json
import random
import struct

import mpmath

mpmath.mp.dps = 60


def bits(x):
    return "%016x" % struct.unpack("<Q", struct.pack("<d", x))[0]


def cos(a, b):
    a = [mpmath.mpf(x) for x in a]
    b = [mpmath.mpf(x) for x in b]
    dot = mpmath.fsum(x * y for x, y in zip(a, b))
    na = mpmath.sqrt(mpmath.fsum(x * x for x in a))
    nb = mpmath.sqrt(mpmath.fsum(x * x for x in b))
    return dot / (na * nb)


def vec(rng, dim):
    while True:
        v = [rng.gauss(0.0, 1.0) for _ in range(dim)]
        if any(v):
            return v


def main():
    rng = random.Random(20240611)
    cases = []
    for i in range(1000):
        dim = rng.randint(2, 16)
        m = rng.randint(2, 6)
        scale = rng.choice([1.0, 10.0, 100.0, 100.0, 100.0])
        frame = vec(rng, dim)
        queries = [vec(rng, dim) for _ in range(m)]
        if i % 10 == 0:
            # near-tie between the positive query and a negative
            queries[1] = [q + rng.gauss(0.0, 1e-6) for q in queries[0]]
        if i % 10 == 1:
            # frame nearly on the positive query
            frame = [q + rng.gauss(0.0, 1e-3) for q in queries[0]]
        logits = [scale * cos(frame, q) for q in queries]
        top = max(logits)
        exps = [mpmath.exp(l - top) for l in logits]
        score = 100 * exps[0] / mpmath.fsum(exps)
        cases.append(
            {
                "scale": bits(scale),
                "frame": [bits(x) for x in frame],
                "queries": [[bits(x) for x in q] for q in queries],
                "score": mpmath.nstr(score, 30, min_fixed=-400, max_fixed=400),
            }
        )
    with open("gate_cases.json", "w") as f:
        json.dump(cases, f, separators=(",", ":"))
        f.write("\n")


if __name__ == "__main__":
    main()
