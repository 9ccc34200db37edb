"""Directory-level pipeline stages.

Each stage reads its inputs from disk, writes its outputs plus a
``manifest.json`` (input hashes, configuration, tool version), and returns
the objects it produced so callers can chain stages in memory too.

A graph directory holds ``entities.tsv``, ``triplets.tsv``,
``metagraph.json``, the ``context.jsonl`` side table and ``type_tree.json``.
"""

from __future__ import annotations

import hashlib
import json
import shutil
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from . import __version__
from . import kg as K
from .backend import BackendConfig, TopicBackend, make_backend
from .checkpoint import Checkpoint
from .evaluate import SPLIT_PROTOCOL, evaluate_graph, split_interactions
from .general import extract_subtypes, save_category_trees
from .ingest import (
    ContextStore,
    TypeTree,
    build_base_graph,
    build_type_tree,
    load_stopwords,
    parse_item_metadata,
    parse_reviews,
    variant_metagraph,
)
from .refine import (
    DEFAULT_MAX_SUBSET,
    apply_canonical_map,
    is_idempotent,
    refine_topics,
    save_canonical_map,
    save_partition,
    topic_partition,
)
from .specific import CandidateWordTable, extract_candidate_words, load_staged_edges, save_staged_edges

CONTEXT_FILE = "context.jsonl"
TYPE_TREE_FILE = "type_tree.json"


class ValidationFailed(Exception):
    def __init__(self, violations: list[K.Violation]):
        super().__init__(f"{len(violations)} non-conforming triplet(s)")
        self.violations = violations


@dataclass
class PipelineConfig:
    metagraph: str | None = None
    variant: str = "base"
    stopwords: str | None = None
    max_reviews_per_item: int | None = None
    backend: str = "mock"
    backend_config: BackendConfig = field(default_factory=BackendConfig)
    max_words: int = 10
    max_subset: int = DEFAULT_MAX_SUBSET
    k: int = 10
    ratio: float = 0.8
    seed: int = 0
    backfill: bool = False

    def __post_init__(self) -> None:
        if self.variant not in ("base", "large"):
            raise ValueError(f"variant must be base or large, not {self.variant!r}")
        if self.backend not in ("mock", "http"):
            raise ValueError(f"backend must be mock or http, not {self.backend!r}")
        if self.max_words < 1 or self.max_subset < 1 or self.k < 1:
            raise ValueError("max_words, max_subset and k must be >= 1")
        if not 0 < self.ratio < 1:
            raise ValueError("ratio must lie in (0, 1)")
        if self.max_reviews_per_item is not None and self.max_reviews_per_item < 1:
            raise ValueError("max_reviews_per_item must be >= 1")

    def to_dict(self) -> dict[str, Any]:
        d = dict(self.__dict__)
        d["backend_config"] = dict(self.backend_config.__dict__)
        return d

    def make_backend(self) -> TopicBackend:
        return make_backend(self.backend, self.backend_config)


def file_hash(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def input_hashes(inputs: list[Path]) -> dict[str, str]:
    """sha256 of each input file; directories contribute their files (not manifests)."""
    hashes = {}
    for p in map(Path, inputs):
        files = sorted(q for q in p.iterdir() if q.is_file()) if p.is_dir() else [p]
        for q in files:
            if q.name != "manifest.json":
                hashes[str(q)] = file_hash(q)
    return hashes


def fingerprint(inputs: list[Path], **config: Any) -> str:
    """Content hash of inputs and settings; ties a checkpoint to what produced it."""
    digests = sorted(input_hashes(inputs).values())
    blob = json.dumps([digests, config], sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


def write_manifest(out: Path, command: str, inputs: list[Path], config: dict[str, Any], **extra: Any) -> None:
    hashes = input_hashes(inputs)
    manifest = {"tool": "topickg", "version": __version__, "command": command,
                "config": config, "inputs": hashes, **extra}
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "manifest.json", "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True, default=str)
        f.write("\n")


def load_standard(path: str | None) -> K.Metagraph:
    return K.Metagraph.load(path) if path else K.default_metagraph()


def _carry(src: Path, dst: Path, *names: str) -> None:
    dst.mkdir(parents=True, exist_ok=True)
    for name in names:
        if (src / name).exists() and src.resolve() != dst.resolve():
            shutil.copyfile(src / name, dst / name)


def _check(kg: K.KnowledgeGraph) -> None:
    violations = K.validate_graph(kg)
    if violations:
        raise ValidationFailed(violations)


# -- stages -------------------------------------------------------------------------


def ingest(
    metadata: str | Path,
    reviews: str | Path,
    out: str | Path,
    cfg: PipelineConfig,
    holdout: bool = False,
) -> K.KnowledgeGraph:
    """Parse inputs and write the base graph, context table and type tree.

    With ``holdout``, the interactions that ``eval`` will hold out (same
    ratio and seed) keep their purchase edges but contribute no review text,
    so no topic or word edge can leak a test interaction.
    """
    out = Path(out)
    items = parse_item_metadata(metadata)
    revs = parse_reviews(reviews)
    stop = load_stopwords(cfg.stopwords) if cfg.variant == "large" else None
    m = variant_metagraph(load_standard(cfg.metagraph), cfg.variant)
    built = build_base_graph(
        items.records,
        revs.records,
        m,
        cfg.variant,
        stopwords=stop,
        max_reviews_per_item=cfg.max_reviews_per_item,
        holdout=(cfg.ratio, cfg.seed) if holdout else None,
    )
    _check(built.kg)
    K.save_graph(built.kg, out)
    built.context.save(out / CONTEXT_FILE)
    with open(out / TYPE_TREE_FILE, "w", encoding="utf-8") as f:
        json.dump(build_type_tree(items.records).to_dict(), f, indent=1, ensure_ascii=False)
        f.write("\n")
    write_manifest(
        out, "ingest", [Path(metadata), Path(reviews)], cfg.to_dict(),
        malformed={"metadata": items.malformed, "reviews": revs.malformed},
        holdout={"ratio": cfg.ratio, "seed": cfg.seed, "protocol": SPLIT_PROTOCOL} if holdout else None,
    )
    return built.kg


def extract_general(
    graph_dir: str | Path, out: str | Path, cfg: PipelineConfig,
    checkpoint: str | Path | None = None, backend: TopicBackend | None = None,
) -> K.KnowledgeGraph:
    graph_dir, out = Path(graph_dir), Path(out)
    kg = K.load_graph(graph_dir)
    context = ContextStore.load(graph_dir / CONTEXT_FILE)
    tree = TypeTree.from_dict(json.loads((graph_dir / TYPE_TREE_FILE).read_text("utf-8")))
    backend = backend or cfg.make_backend()
    trees = extract_subtypes(
        kg, tree, context, backend,
        checkpoint=Checkpoint(checkpoint, fingerprint([graph_dir], model=backend.model)),
        parallelism=cfg.backend_config.parallelism,
    )
    _check(kg)
    K.save_graph(kg, out)
    _carry(graph_dir, out, CONTEXT_FILE, TYPE_TREE_FILE)
    save_category_trees(trees, out / "category_trees.json")
    write_manifest(out, "extract-general", [graph_dir], cfg.to_dict())
    return kg


def extract_specific(
    graph_dir: str | Path, out: str | Path, cfg: PipelineConfig,
    context_path: str | Path | None = None, checkpoint: str | Path | None = None,
    backend: TopicBackend | None = None,
):
    graph_dir, out = Path(graph_dir), Path(out)
    kg = K.load_graph(graph_dir)
    context_path = Path(context_path) if context_path else graph_dir / CONTEXT_FILE
    context = ContextStore.load(context_path)
    backend = backend or cfg.make_backend()
    result = extract_candidate_words(
        kg, context, backend, max_words=cfg.max_words,
        checkpoint=Checkpoint(
            checkpoint,
            fingerprint([graph_dir, context_path], model=backend.model, max_words=cfg.max_words),
        ),
        parallelism=cfg.backend_config.parallelism,
    )
    out.mkdir(parents=True, exist_ok=True)
    result.table.save_tsv(out / "candidates.tsv")
    save_staged_edges(result.edges, out / "staged_edges.tsv")
    write_manifest(out, "extract-specific", [graph_dir, context_path], cfg.to_dict(),
                   skipped_documents=result.skipped)
    return result


def refine(
    staged_dir: str | Path, graph_dir: str | Path, out: str | Path, cfg: PipelineConfig,
    checkpoint: str | Path | None = None, backend: TopicBackend | None = None,
) -> K.KnowledgeGraph:
    staged_dir, graph_dir, out = Path(staged_dir), Path(graph_dir), Path(out)
    kg = K.load_graph(graph_dir)
    table = CandidateWordTable.load_tsv(staged_dir / "candidates.tsv")
    staged = load_staged_edges(staged_dir / "staged_edges.tsv")
    partition = topic_partition(table.labels(), cfg.max_subset)
    backend = backend or cfg.make_backend()
    cmap = refine_topics(
        table, partition, backend,
        checkpoint=Checkpoint(
            checkpoint, fingerprint([staged_dir], model=backend.model, max_subset=cfg.max_subset)
        ),
        parallelism=cfg.backend_config.parallelism,
    )
    if not is_idempotent(cmap):
        raise AssertionError("canonical map is not idempotent")
    apply_canonical_map(staged, cmap, kg)
    _check(kg)
    K.save_graph(kg, out)
    _carry(graph_dir, out, CONTEXT_FILE, TYPE_TREE_FILE, "category_trees.json")
    save_partition(partition, out / "partition.json")
    save_canonical_map(cmap, table, out / "canonical_map.tsv")
    write_manifest(out, "refine", [staged_dir, graph_dir], cfg.to_dict())
    return kg


def evaluate(graph_dir: str | Path, cfg: PipelineConfig) -> dict[str, Any]:
    kg = K.load_graph(graph_dir)
    m = evaluate_graph(kg, k=cfg.k, ratio=cfg.ratio, seed=cfg.seed, backfill=cfg.backfill)
    return {**m.to_dict(), "k": cfg.k, "ratio": cfg.ratio, "seed": cfg.seed,
            "backfill": cfg.backfill, "split_protocol": SPLIT_PROTOCOL}


def run_all(
    metadata: str | Path, reviews: str | Path, out: str | Path, cfg: PipelineConfig,
    backend: TopicBackend | None = None,
) -> dict[str, Any]:
    """Every stage in order under ``out``; returns the stats and eval summaries."""
    out = Path(out)
    backend = backend or cfg.make_backend()
    base, general, staged, final = (out / d for d in ("base", "general", "staged", "final"))
    ingest(metadata, reviews, base, cfg, holdout=True)
    extract_general(base, general, cfg, out / "checkpoint-general.json", backend)
    extract_specific(general, staged, cfg, checkpoint=out / "checkpoint-specific.json", backend=backend)
    kg = refine(staged, general, final, cfg, out / "checkpoint-refine.json", backend)
    summary = {
        "stats_base": K.stats(K.load_graph(base)).to_dict(),
        "stats": K.stats(kg).to_dict(),
        "eval_base": evaluate(base, cfg),
        "eval": evaluate(final, cfg),
    }
    with open(out / "summary.json", "w", encoding="utf-8") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
        f.write("\n")
    write_manifest(out, "run-all", [Path(metadata), Path(reviews)], cfg.to_dict())
    return summary


__all__ = [
    "PipelineConfig", "ValidationFailed", "ingest", "extract_general", "extract_specific",
    "refine", "evaluate", "run_all", "write_manifest", "split_interactions",
]
