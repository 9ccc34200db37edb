"""Specific topic extraction from item descriptions and reviews.

Each document is sent to the backend once.  A description yields
``(item, tagged, word)`` edges; a review yields ``(user, mention, word)`` and
``(item, described_as, word)``.  Edges are staged with their raw labels and
only become triplets once synonym refinement has picked canonical labels.
"""

from __future__ import annotations

import logging
from collections.abc import Iterable
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

from . import kg as K
from .backend import EmptyText, SpecificTopicRequest, TopicBackend, run_bounded
from .checkpoint import Checkpoint
from .ingest import ContextStore
from .normalize import clean_label

log = logging.getLogger(__name__)

SECTION = "specific"


class Source(NamedTuple):
    origin: str  # "description" | "review"
    item_id: str
    user_id: str | None = None


@dataclass
class CandidateEntry:
    frequency: int = 0
    sources: set[Source] = field(default_factory=set)


class CandidateWordTable:
    """Candidate topic labels with usage frequency and provenance."""

    def __init__(self) -> None:
        self.entries: dict[str, CandidateEntry] = {}

    def add(self, label: str, source: Source) -> None:
        entry = self.entries.setdefault(label, CandidateEntry())
        entry.frequency += 1
        entry.sources.add(source)

    def merge(self, other: CandidateWordTable) -> None:
        for label, e in other.entries.items():
            mine = self.entries.setdefault(label, CandidateEntry())
            mine.frequency += e.frequency
            mine.sources |= e.sources

    def frequency(self, label: str) -> int:
        e = self.entries.get(label)
        return e.frequency if e else 0

    def labels(self) -> list[str]:
        return sorted(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, label: object) -> bool:
        return label in self.entries

    def save_tsv(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.writelines(f"{lab}\t{self.entries[lab].frequency}\n" for lab in self.labels())

    @classmethod
    def load_tsv(cls, path: str | Path) -> CandidateWordTable:
        table = cls()
        with open(path, encoding="utf-8") as f:
            for line in f:
                line = line.rstrip("\n")
                if line:
                    label, freq = line.rsplit("\t", 1)
                    table.entries[label] = CandidateEntry(int(freq))
        return table


class StagedTopicEdge(NamedTuple):
    head: int
    relation: str
    label: str


class SpecificResult(NamedTuple):
    table: CandidateWordTable
    edges: list[StagedTopicEdge]
    skipped: int


class _Doc(NamedTuple):
    key: str
    kind: str
    text: str
    item_id: str
    user_id: str | None


def _documents(context: ContextStore) -> list[_Doc]:
    docs = [
        _Doc(f"d:{item_id}", "description", text, item_id, None)
        for item_id, text in sorted(context.descriptions.items())
    ]
    docs += [
        _Doc(f"r:{n}", "review", r.text, r.item_id, r.user_id) for n, r in enumerate(context.reviews)
    ]
    return docs


def extract_candidate_words(
    kg: K.KnowledgeGraph,
    context: ContextStore,
    backend: TopicBackend,
    *,
    max_words: int = 10,
    checkpoint: Checkpoint | None = None,
    parallelism: int = 1,
) -> SpecificResult:
    """Query every context document and stage its topic edges.

    Frequencies count documents: a label counts once per document that
    produced it.  Empty documents are skipped and counted.
    """
    checkpoint = checkpoint or Checkpoint()
    kg.extend_metagraph(K.build_topic_metagraph())
    done = checkpoint.section(SECTION)
    docs, skipped = [], 0
    for d in _documents(context):
        if clean_label(d.text):
            docs.append(d)
        else:
            skipped += 1
    todo = [d for d in docs if d.key not in done]

    def call(d: _Doc) -> list[str]:
        try:
            return backend.extract_specific_topics(SpecificTopicRequest(d.text, d.kind, max_words))
        except EmptyText:
            return []

    run_bounded(call, todo, parallelism, on_done=lambda d, labels: checkpoint.put(SECTION, d.key, labels))
    done = checkpoint.section(SECTION)

    table = CandidateWordTable()
    edges: dict[StagedTopicEdge, None] = {}
    for d in docs:
        labels = list(dict.fromkeys(done[d.key]))[:max_words]
        iid = kg.lookup(d.item_id, K.ITEM)
        if iid is None:
            log.warning("document %s refers to unknown item %r", d.key, d.item_id)
            continue
        if d.kind == "description":
            for lab in labels:
                table.add(lab, Source("description", d.item_id))
                edges[StagedTopicEdge(iid, K.TAGGED, lab)] = None
        else:
            uid = kg.lookup(d.user_id, K.USER)
            if uid is None:
                log.warning("review %s by unknown user %r", d.key, d.user_id)
                continue
            for lab in labels:
                table.add(lab, Source("review", d.item_id, d.user_id))
                edges[StagedTopicEdge(uid, K.MENTION, lab)] = None
                edges[StagedTopicEdge(iid, K.DESCRIBED_AS, lab)] = None
    if skipped:
        log.info("skipped %d empty document(s)", skipped)
    return SpecificResult(table, list(edges), skipped)


def save_staged_edges(edges: Iterable[StagedTopicEdge], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.writelines(f"{e.head}\t{e.relation}\t{e.label}\n" for e in edges)


def load_staged_edges(path: str | Path) -> list[StagedTopicEdge]:
    out = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.rstrip("\n")
            if line:
                head, rel, label = line.split("\t", 2)
                out.append(StagedTopicEdge(int(head), rel, label))
    return out
