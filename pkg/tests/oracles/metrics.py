"""Reference ranking metrics, computed position by position from a gain list."""

from __future__ import annotations

import math


def oracle_metrics(ranked, relevant, k):
    gains = [1 if item in relevant else 0 for item in list(ranked)[:k]]
    dcg = 0.0
    for pos, g in enumerate(gains):
        dcg += g / math.log2(pos + 2)
    ideal = sorted([1] * len(relevant), reverse=True)[:k]
    idcg = 0.0
    for pos, g in enumerate(ideal):
        idcg += g / math.log2(pos + 2)
    hits = sum(gains)
    return dcg / idcg, hits / len(relevant), hits / k, float(hits > 0)


def walk_scores(adjacency: dict[int, set[int]], user: int) -> dict[int, float]:
    """Explicit enumeration of 2- and 3-hop walks from ``user``, weighted by 1/degree."""
    scores: dict[int, float] = {}
    for e1 in adjacency.get(user, ()):
        w1 = 1.0 / len(adjacency[e1])
        for x in adjacency[e1]:
            scores[x] = scores.get(x, 0.0) + w1
            w2 = w1 / len(adjacency[x])
            for y in adjacency[x]:
                scores[y] = scores.get(y, 0.0) + w2
    return scores
