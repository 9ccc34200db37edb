import pytest

from topickg import kg as K
from topickg.backend import BackendError, MockBackend
from topickg.checkpoint import Checkpoint
from topickg.general import CategoryTree, extract_subtypes
from topickg.ingest import ItemRecord, build_base_graph, build_type_tree, parse_item_metadata, variant_metagraph
from topickg.synthetic import serum_items

LEAF = ("Beauty", "Skin Care", "Serum")


def serum_setup(ids="ABC"):
    items = parse_item_metadata([__import__("json").dumps(r) for r in serum_items() if r["asin"] in ids]).records
    built = build_base_graph(items, [], variant_metagraph(K.default_metagraph()))
    return built.kg, build_type_tree(items), built.context


def test_serum_tree():
    kg, tree, ctx = serum_setup("AB")
    trees = extract_subtypes(kg, tree, ctx, MockBackend())
    assert trees[LEAF].subtypes == ["Hydrating Serum", "Plumping Serum"]
    assert len(kg.by_relation(K.RELATED_TO)) == 2
    assert K.validate_graph(kg) == []


def test_duplicate_subtype_suppressed():
    kg, tree, ctx = serum_setup("ABC")
    trees = extract_subtypes(kg, tree, ctx, MockBackend())
    assert trees[LEAF].subtypes == ["Hydrating Serum", "Plumping Serum"]
    edges = kg.by_relation(K.RELATED_TO)
    assert len(edges) == 3
    hydrating = kg.lookup("Hydrating Serum", K.SUBTYPE)
    assert {t.head for t in edges if t.tail == hydrating} == {kg.lookup("A", K.ITEM), kg.lookup("C", K.ITEM)}
    assert len(kg.entities(K.SUBTYPE)) == 2


def test_current_tree_is_passed():
    seen = []

    class Spy(MockBackend):
        def complete(self, kind, request):
            seen.append(list(request["current_tree"]))
            return super().complete(kind, request)

    kg, tree, ctx = serum_setup("ABC")
    extract_subtypes(kg, tree, ctx, Spy())
    assert seen == [[], ["Hydrating Serum"], ["Hydrating Serum", "Plumping Serum"]]


def test_empty_tree_no_calls():
    kg = K.KnowledgeGraph(variant_metagraph(K.default_metagraph()))
    b = MockBackend()
    assert extract_subtypes(kg, build_type_tree([]), None, b) == {}
    assert sum(b.calls.values()) == 0 and kg.num_triplets == 0


def test_category_tree_dedup():
    t = CategoryTree(LEAF)
    assert t.add("Hydrating  Serum") and not t.add("hydrating serum") and not t.add("  ")
    assert t.subtypes == ["Hydrating Serum"]


def test_resume_after_failure(tmp_path):
    class Flaky(MockBackend):
        def __init__(self, fail_on):
            super().__init__()
            self.fail_on = fail_on

        def complete(self, kind, request):
            if request["item_title"] == self.fail_on:
                raise BackendError("down")
            return super().complete(kind, request)

    ck = tmp_path / "ck.json"
    kg, tree, ctx = serum_setup("ABC")
    with pytest.raises(BackendError):
        extract_subtypes(kg, tree, ctx, Flaky("Deep Hydrating Serum"), checkpoint=Checkpoint(ck, "x"))
    kg, tree, ctx = serum_setup("ABC")
    second = Flaky(None)
    trees = extract_subtypes(kg, tree, ctx, second, checkpoint=Checkpoint(ck, "x"))
    assert second.calls["general"] == 1
    assert trees[LEAF].subtypes == ["Hydrating Serum", "Plumping Serum"]
    assert len(kg.by_relation(K.RELATED_TO)) == 3


def test_missing_description_still_works():
    items = [ItemRecord("A", "Ultra Hydrating Face Serum", category_paths=[list(LEAF)])]
    built = build_base_graph(items, [], variant_metagraph(K.default_metagraph()))
    trees = extract_subtypes(built.kg, build_type_tree(items), built.context, MockBackend())
    assert trees[LEAF].subtypes == ["Hydrating Serum"]
