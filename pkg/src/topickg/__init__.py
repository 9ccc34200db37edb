"""Topic-aware knowledge graphs for recommender systems.

Stages: :mod:`~topickg.ingest` builds the side-information graph,
:mod:`~topickg.general` adds item subtypes, :mod:`~topickg.specific` extracts
topic words from descriptions and reviews, :mod:`~topickg.refine` merges
synonymous words, and :mod:`~topickg.evaluate` measures top-k recommendation
quality on the result.
"""

__version__ = "0.1.0"

from .kg import (  # noqa: E402
    KnowledgeGraph,
    Metagraph,
    Triplet,
    build_base_metagraph,
    build_topic_metagraph,
    default_metagraph,
    merge_metagraphs,
    stats,
    topic_aware_metagraph,
    validate_graph,
)

__all__ = [
    "KnowledgeGraph",
    "Metagraph",
    "Triplet",
    "build_base_metagraph",
    "build_topic_metagraph",
    "default_metagraph",
    "merge_metagraphs",
    "stats",
    "topic_aware_metagraph",
    "validate_graph",
]
