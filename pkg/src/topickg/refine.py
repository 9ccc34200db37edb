"""Synonym refinement of candidate topic words.

Candidates are split into prefix buckets of bounded size
(:func:`topic_partition`), each bucket is grouped into synonyms by the
backend, and every label is mapped to the most frequent member of its group.
"""

from __future__ import annotations

import json
from collections.abc import Iterable
from pathlib import Path

from . import kg as K
from .backend import SynonymGroupRequest, TopicBackend, run_bounded
from .checkpoint import Checkpoint
from .specific import CandidateWordTable, StagedTopicEdge

SECTION = "refine"
DEFAULT_MAX_SUBSET = 50

Partition = list[list[str]]
CanonicalMap = dict[str, str]


class UnmappedLabel(KeyError):
    """A staged edge's label has no entry in the canonical map."""


def topic_partition(labels: Iterable[str], max_size: int = DEFAULT_MAX_SUBSET) -> Partition:
    """Split ``labels`` into subsets of at most ``max_size`` sharing a prefix.

    Words are bucketed by their first character; a bucket larger than
    ``max_size`` is re-bucketed by the next character, and so on.  A word
    that is exactly the shared prefix of an oversized bucket has no next
    character and becomes a singleton.  Characters are Unicode code points.
    Subsets are sorted, and ordered by their first word.
    """
    if max_size < 1:
        raise ValueError("max_size must be >= 1")
    out: Partition = []
    stack = [(0, sorted(set(labels)))]
    while stack:
        depth, words = stack.pop()
        buckets: dict[str, list[str]] = {}
        for w in words:
            if len(w) == depth:
                out.append([w])
            else:
                buckets.setdefault(w[depth], []).append(w)
        for bucket in buckets.values():
            if len(bucket) <= max_size:
                out.append(bucket)
            else:
                stack.append((depth + 1, bucket))
    out.sort(key=lambda s: s[0])
    return out


def choose_canonical(group: Iterable[str], frequency) -> str:
    """Most frequent member; ties go to the lexicographically smallest."""
    return min(group, key=lambda lab: (-frequency(lab), lab))


def refine_topics(
    table: CandidateWordTable,
    partition: Partition,
    backend: TopicBackend,
    *,
    checkpoint: Checkpoint | None = None,
    parallelism: int = 1,
) -> CanonicalMap:
    """Group each subset into synonyms and map every label to its group's canonical."""
    covered = [lab for subset in partition for lab in subset]
    if sorted(covered) != table.labels():
        raise ValueError("partition does not cover the candidate table exactly")
    checkpoint = checkpoint or Checkpoint()
    done = checkpoint.section(SECTION)
    bound = max((len(s) for s in partition), default=1)
    todo = [s for s in partition if s[0] not in done]

    def call(subset: list[str]) -> list[list[str]]:
        req = SynonymGroupRequest(tuple((lab, table.frequency(lab)) for lab in subset))
        return backend.group_synonyms(req, max_size=bound)

    run_bounded(call, todo, parallelism, on_done=lambda s, groups: checkpoint.put(SECTION, s[0], groups))
    done = checkpoint.section(SECTION)

    cmap: CanonicalMap = {}
    for subset in partition:
        for group in done[subset[0]]:
            canonical = choose_canonical(group, table.frequency)
            for lab in group:
                cmap[lab] = canonical
    return cmap


def is_idempotent(cmap: CanonicalMap) -> bool:
    return all(cmap.get(c) == c for c in cmap.values())


def apply_canonical_map(
    staged: Iterable[StagedTopicEdge], cmap: CanonicalMap, kg: K.KnowledgeGraph
) -> K.KnowledgeGraph:
    """Materialize staged edges as triplets to the canonical ``Word`` entities."""
    kg.extend_metagraph(K.build_topic_metagraph())
    for e in staged:
        try:
            canonical = cmap[e.label]
        except KeyError:
            raise UnmappedLabel(e.label) from None
        kg.add(e.head, e.relation, kg.register_entity(canonical, K.WORD))
    return kg


def save_partition(partition: Partition, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(partition, f, ensure_ascii=False, indent=1)
        f.write("\n")


def save_canonical_map(cmap: CanonicalMap, table: CandidateWordTable, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.writelines(f"{lab}\t{cmap[lab]}\t{table.frequency(lab)}\n" for lab in sorted(cmap))
