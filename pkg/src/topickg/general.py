"""Subtype (general topic) extraction over the leaves of the type tree.

Within one leaf, items are visited in ascending id order and each request
carries the subtypes produced so far for that leaf, so the result depends on
the order.  Leaves are independent and may run in parallel; the graph is
only mutated afterwards, in leaf order, so entity ids are reproducible.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from . import kg as K
from .backend import GeneralTopicRequest, TopicBackend, run_bounded
from .checkpoint import Checkpoint
from .ingest import ContextStore, TypeTree
from .normalize import clean_label, match_key

SECTION = "general"


@dataclass
class CategoryTree:
    """Subtypes found so far under one leaf, in first-extraction order."""

    leaf: tuple[str, ...]
    subtypes: list[str] = field(default_factory=list)

    def __contains__(self, label: str) -> bool:
        key = match_key(label)
        return any(match_key(s) == key for s in self.subtypes)

    def add(self, label: str) -> bool:
        """Append ``label`` unless an equal label (after normalization) exists."""
        label = clean_label(label)
        if not label or label in self:
            return False
        self.subtypes.append(label)
        return True

    def to_dict(self) -> dict:
        return {"leaf": list(self.leaf), "subtypes": list(self.subtypes)}


def _leaf_key(leaf: tuple[str, ...]) -> str:
    return json.dumps(list(leaf), ensure_ascii=False)


def _run_leaf(
    leaf: tuple[str, ...],
    items: list[str],
    context: ContextStore,
    backend: TopicBackend,
    checkpoint: Checkpoint,
) -> tuple[CategoryTree, list[tuple[str, str]]]:
    key = _leaf_key(leaf)
    done: list[list[str]] = checkpoint.section(SECTION).get(key, [])
    tree = CategoryTree(leaf)
    assigned: list[tuple[str, str]] = []
    for item_id, label in done:
        tree.add(label)
        assigned.append((item_id, label))
    finished = {item_id for item_id, _ in done}
    for item_id in items:
        if item_id in finished:
            continue
        req = GeneralTopicRequest(
            item_title=context.titles.get(item_id, "") or item_id,
            type_path=leaf,
            description=context.descriptions.get(item_id),
            current_tree=tuple(tree.subtypes),
        )
        label = clean_label(backend.extract_general_topic(req))
        tree.add(label)
        assigned.append((item_id, label))
        checkpoint.put(SECTION, key, [list(a) for a in assigned])
    return tree, assigned


def extract_subtypes(
    kg: K.KnowledgeGraph,
    tree: TypeTree,
    context: ContextStore,
    backend: TopicBackend,
    *,
    checkpoint: Checkpoint | None = None,
    parallelism: int = 1,
) -> dict[tuple[str, ...], CategoryTree]:
    """Add one ``(item, related_to, subtype)`` triplet per item and leaf membership.

    Backend failures propagate after the other leaves finish; the checkpoint
    keeps every item already answered, so a rerun resumes without repeating
    those calls.
    """
    checkpoint = checkpoint or Checkpoint()
    kg.extend_metagraph(K.build_topic_metagraph())
    leaves = tree.leaves()
    results = run_bounded(
        lambda leaf: _run_leaf(leaf, tree.members(leaf), context, backend, checkpoint),
        leaves,
        parallelism,
    )
    trees = {}
    for leaf, (ctree, assigned) in zip(leaves, results):
        trees[leaf] = ctree
        for item_id, label in assigned:
            iid = kg.lookup(item_id, K.ITEM)
            if iid is None:
                raise K.UnknownEntity(f"item {item_id!r} is in the type tree but not the graph")
            kg.add(iid, K.RELATED_TO, kg.register_entity(label, K.SUBTYPE))
    return trees


def save_category_trees(trees: dict[tuple[str, ...], CategoryTree], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump([trees[leaf].to_dict() for leaf in sorted(trees)], f, indent=2, ensure_ascii=False)
        f.write("\n")
