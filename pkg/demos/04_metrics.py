"""Top-k metrics on a hand-made ranking."""

from __future__ import annotations

from topickg.evaluate import evaluate_ranking, user_metrics

ranked = ["i1", "i2", "i3", "i4", "i5", "i6", "i7", "i8", "i9", "i10"]
ndcg, recall, precision, hr = user_metrics(ranked, {"i2"}, k=10)
print(f"one relevant item at rank 2: ndcg={ndcg:.4f} recall={recall} precision={precision} hr={hr}")

results = {
    "alice": (ranked, {"i2"}),
    "bob": (["i5", "i9"], {"i9", "i11"}),
    "carol": (["i1"], set()),  # nothing held out: skipped
}
print(evaluate_ranking(results, k=10))
