"""Run every stage on a small synthetic corpus with the rule-based backend.

The corpus is written to a temporary directory, so nothing outside it
changes.  The printed summary compares the base graph with the topic-aware
one under the same recommender.
"""

from __future__ import annotations

import json
import tempfile
from pathlib import Path

from topickg.pipeline import PipelineConfig, run_all
from topickg.synthetic import write_corpus

with tempfile.TemporaryDirectory() as tmp:
    meta, reviews = write_corpus(Path(tmp) / "corpus", seed=1)
    summary = run_all(meta, reviews, Path(tmp) / "out", PipelineConfig(seed=7))

    for key in ("stats_base", "stats"):
        s = summary[key]
        print(f"{key:10s} entities={s['entity_count']:4d} subtypes={s['general_topic_count']:3d} "
              f"words={s['specific_topic_count']:3d}")
    print()
    for key in ("eval_base", "eval"):
        e = summary[key]
        print(f"{key:10s} " + "  ".join(f"{m}={e[m]:.4f}" for m in ("ndcg", "recall", "precision", "hit_ratio")))

    cmap = (Path(tmp) / "out" / "final" / "canonical_map.tsv").read_text().splitlines()
    merged = [line.split("\t") for line in cmap if line.split("\t")[0] != line.split("\t")[1]]
    print("\nmerged synonyms:", json.dumps({a: b for a, b, _ in merged}))
