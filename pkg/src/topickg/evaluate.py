"""Held-out evaluation: interaction split, a path-count baseline recommender, top-k metrics.

The recommender is deliberately simple and identical for every graph variant,
so metric differences come from graph topology alone.  It scores an item by
summing, over all paths ``user -> e -> item`` and ``user -> e1 -> e2 -> item``
in the training graph (edges taken as undirected), the product of
``1 / degree`` over the intermediate entities.
"""

from __future__ import annotations

import math
from collections import defaultdict
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import asdict, dataclass

import numpy as np
import scipy.sparse as sp

from . import kg as K

SPLIT_PROTOCOL = "stand-in: per-user seeded permutation, round(ratio * n) items to train"


@dataclass(frozen=True)
class InteractionSplit:
    train: frozenset[tuple[int, int]]
    test: frozenset[tuple[int, int]]
    seed: int

    def test_items(self) -> dict[int, set[int]]:
        out: dict[int, set[int]] = defaultdict(set)
        for u, i in self.test:
            out[u].add(i)
        return dict(out)

    def train_items(self) -> dict[int, set[int]]:
        out: dict[int, set[int]] = defaultdict(set)
        for u, i in self.train:
            out[u].add(i)
        return dict(out)


def purchases(kg: K.KnowledgeGraph) -> list[tuple[int, int]]:
    return sorted((t.head, t.tail) for t in kg.by_relation(K.PURCHASE))


def split_interactions(
    interactions: Iterable[tuple[int, int]], ratio: float = 0.8, seed: int = 0
) -> InteractionSplit:
    """Per user, shuffle the user's items and keep ``round(ratio * n)`` for training.

    Users with fewer than two interactions go entirely to training; every
    other user keeps at least one training and one test item.
    """
    if not 0 < ratio < 1:
        raise ValueError("ratio must lie in (0, 1)")
    by_user: dict[int, set[int]] = defaultdict(set)
    for u, i in interactions:
        by_user[u].add(i)
    rng = np.random.default_rng(seed)
    train, test = set(), set()
    for u in sorted(by_user):
        items = sorted(by_user[u])
        n = len(items)
        if n < 2:
            train.update((u, i) for i in items)
            continue
        order = rng.permutation(n)
        n_train = min(max(round(ratio * n), 1), n - 1)
        train.update((u, items[j]) for j in order[:n_train])
        test.update((u, items[j]) for j in order[n_train:])
    return InteractionSplit(frozenset(train), frozenset(test), seed)


class PathRecommender:
    """Scores items for users by weighted path counts in the training graph."""

    def __init__(self, kg: K.KnowledgeGraph, split: InteractionSplit):
        self.kg = kg
        self.split = split
        item_types = kg.metagraph.types_of_class(K.EntityClass.ITEM)
        self.items = np.array([e.id for e in kg.entities() if e.entity_type in item_types], dtype=np.int64)
        size = max((e.id for e in kg.entities()), default=-1) + 1
        test = split.test
        rows, cols = [], []
        for t in kg.triplets():
            if t.relation == K.PURCHASE and (t.head, t.tail) in test:
                continue
            rows += [t.head, t.tail]
            cols += [t.tail, t.head]
        adj = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(size, size))
        adj.data[:] = 1.0  # parallel relations between the same pair count once
        deg = np.asarray(adj.sum(axis=1)).ravel()
        inv = np.divide(1.0, deg, out=np.zeros_like(deg), where=deg > 0)
        self.adj = adj
        self.step = sp.diags(inv) @ adj  # row e: 1/deg(e) per neighbour of e
        self.train_items = split.train_items()
        pop: dict[int, int] = defaultdict(int)
        for _, i in split.train:
            pop[i] += 1
        self.popularity = pop

    def scores(self, user: int) -> dict[int, float]:
        if user not in self.train_items:
            raise KeyError(f"user {user} has no training interactions")
        two = self.adj[user] @ self.step
        three = two @ self.step
        total = np.asarray((two + three)[:, self.items].todense()).ravel()
        return {int(i): float(s) for i, s in zip(self.items, total) if s > 0}

    def recommend(self, user: int, k: int = 10, backfill: bool = False) -> list[int]:
        """Top-``k`` unseen items by path score; ties go to the lower item id."""
        seen = self.train_items.get(user, set())
        scored = {i: round(s, 12) for i, s in self.scores(user).items() if i not in seen}
        ranked = sorted(scored, key=lambda i: (-scored[i], i))[:k]
        if backfill and len(ranked) < k:
            taken = set(ranked) | seen
            rest = sorted(
                (int(i) for i in self.items if int(i) not in taken),
                key=lambda i: (-self.popularity.get(i, 0), i),
            )
            ranked += rest[: k - len(ranked)]
        return ranked


def recommend(
    kg: K.KnowledgeGraph, split: InteractionSplit, user: int, k: int = 10, backfill: bool = False
) -> list[int]:
    return PathRecommender(kg, split).recommend(user, k, backfill)


@dataclass(frozen=True)
class RankingMetrics:
    ndcg: float
    recall: float
    precision: float
    hit_ratio: float
    users_evaluated: int

    def to_dict(self) -> dict:
        return asdict(self)


def user_metrics(ranked: Sequence[int], relevant: set[int], k: int) -> tuple[float, float, float, float]:
    """(NDCG, Recall, Precision, HR) at ``k`` with binary relevance."""
    if k < 1:
        raise ValueError("k must be >= 1")
    top = list(ranked)[:k]
    hits = [r for r, item in enumerate(top, 1) if item in relevant]
    dcg = sum(1.0 / math.log2(r + 1) for r in hits)
    idcg = sum(1.0 / math.log2(r + 1) for r in range(1, min(k, len(relevant)) + 1))
    n = len(hits)
    return dcg / idcg, n / len(relevant), n / k, 1.0 if n else 0.0


def evaluate_ranking(results: Mapping[int, tuple[Sequence[int], set[int]]], k: int = 10) -> RankingMetrics:
    """Mean metrics over users with a non-empty relevant set."""
    if k < 1:
        raise ValueError("k must be >= 1")
    rows = [user_metrics(ranked, rel, k) for ranked, rel in results.values() if rel]
    if not rows:
        return RankingMetrics(0.0, 0.0, 0.0, 0.0, 0)
    ndcg, recall, precision, hr = (float(np.mean(col)) for col in zip(*rows))
    return RankingMetrics(ndcg, recall, precision, hr, len(rows))


def evaluate_graph(
    kg: K.KnowledgeGraph,
    *,
    k: int = 10,
    ratio: float = 0.8,
    seed: int = 0,
    backfill: bool = False,
    split: InteractionSplit | None = None,
) -> RankingMetrics:
    """Split purchases, recommend for every test user, and score the lists."""
    split = split or split_interactions(purchases(kg), ratio, seed)
    rec = PathRecommender(kg, split)
    results = {u: (rec.recommend(u, k, backfill), rel) for u, rel in sorted(split.test_items().items())}
    return evaluate_ranking(results, k)
