#!/usr/bin/env python3
"""Reference corpus BLEU-4 with add-one smoothing on zero n-gram matches (n >= 2)."""

import math
from collections import Counter

CASES = {
    "cat": ([["the", "cat", "sat"]], [["the", "cat", "sat", "down"]]),
    "corpus": (
        [
            "the quick brown fox jumps over the dog".split(),
            "a stitch in time saves nine".split(),
            "to be or not to be that is a question".split(),
        ],
        [
            "the quick brown fox jumped over the lazy dog".split(),
            "a stitch in time saves nine lives".split(),
            "to be or not to be that is the question".split(),
        ],
    ),
}


def grams(seq, n):
    return Counter(tuple(seq[i : i + n]) for i in range(len(seq) - n + 1))


def corpus_bleu(hyps, refs):
    match = [0] * 4
    total = [0] * 4
    h_len = sum(len(h) for h in hyps)
    r_len = sum(len(r) for r in refs)
    for h, r in zip(hyps, refs):
        for n in range(1, 5):
            hc, rc = grams(h, n), grams(r, n)
            total[n - 1] += sum(hc.values())
            match[n - 1] += sum(min(c, rc[g]) for g, c in hc.items())
    if match[0] == 0 or h_len == 0:
        return 0.0
    log_p = 0.0
    for n in range(4):
        if match[n] == 0:
            log_p += math.log(1.0 / (total[n] + 1))
        else:
            log_p += math.log(match[n] / total[n])
    bp = 1.0 if h_len >= r_len else math.exp(1.0 - r_len / h_len)
    return 100.0 * bp * math.exp(log_p / 4)


if __name__ == "__main__":
    for name, (h, r) in CASES.items():
        print(f"{name} {corpus_bleu(h, r)!r}")
