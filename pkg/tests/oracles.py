"""Independent reference implementations used only by the tests."""

from __future__ import annotations

import math
import re
from collections import Counter


def tokens(text: str) -> list[str]:
    return [t for t in re.split(r"[^0-9a-z]+", text.lower()) if len(t) >= 2]


def tfidf_cosine(corpus: list[str], i: int, j: int) -> float:
    docs = [Counter(tokens(t)) for t in corpus]
    df = Counter()
    for d in docs:
        df.update(d.keys())
    n = len(docs)

    def vec(d: Counter) -> dict[str, float]:
        return {t: c * (math.log((1 + n) / (1 + df[t])) + 1) for t, c in d.items()}

    a, b = vec(docs[i]), vec(docs[j])
    na = math.sqrt(sum(v * v for v in a.values()))
    nb = math.sqrt(sum(v * v for v in b.values()))
    if na == 0 or nb == 0:
        return 0.0
    return sum(a[t] * b.get(t, 0.0) for t in a) / (na * nb)


def ols(xs, ys):
    n = len(xs)
    mx, my = sum(xs) / n, sum(ys) / n
    sxy = sum((x - mx) * (y - my) for x, y in zip(xs, ys))
    sxx = sum((x - mx) ** 2 for x in xs)
    slope = sxy / sxx
    intercept = my - slope * mx
    sst = sum((y - my) ** 2 for y in ys)
    ssr = sum((y - intercept - slope * x) ** 2 for x, y in zip(xs, ys))
    return intercept, slope, 1 - ssr / sst


def harmonic(n: int) -> float:
    return sum(1.0 / k for k in range(1, n + 1))
