import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from topickg import kg as K
from topickg.kg import EntityClass, Metagraph, Triplet


def small_graph(m):
    g = K.KnowledgeGraph(m)
    u = g.register_entity("U1", K.USER)
    i = g.register_entity("I1", K.ITEM)
    w = g.register_entity("hydrating", K.WORD)
    return g, u, i, w


# -- register_entity ---------------------------------------------------------------


def test_register_is_idempotent(standard):
    g = K.KnowledgeGraph(standard)
    a = g.register_entity("L'Oreal", K.BRAND)
    b = g.register_entity("L'Oreal", K.BRAND)
    assert a == b and g.num_entities == 1


def test_register_new_subtype(topic_mg):
    g = K.KnowledgeGraph(topic_mg)
    before = g.num_entities
    eid = g.register_entity("Hydrating Serum", K.SUBTYPE)
    assert g.num_entities == before + 1
    assert g.entity(eid).label == "hydrating serum"


def test_register_blank_label(standard):
    g = K.KnowledgeGraph(standard)
    with pytest.raises(K.EmptyLabel):
        g.register_entity("  ", K.BRAND)


def test_register_undeclared_type(standard):
    g = K.KnowledgeGraph(standard)
    with pytest.raises(K.UndeclaredType):
        g.register_entity("x", "Performer")


def test_label_normalization(topic_mg):
    g = K.KnowledgeGraph(topic_mg)
    # side labels keep display case but match case-insensitively
    a = g.register_entity("  L'Oreal   Paris ", K.BRAND)
    assert g.entity(a).label == "L'Oreal Paris"
    assert g.register_entity("l'oreal paris", K.BRAND) == a
    # NFC: decomposed e + combining acute equals precomposed é
    w = g.register_entity("Créme", K.WORD)
    assert g.register_entity("CRÈME".replace("È", "É"), K.WORD) == w
    assert g.entity(w).label == "crème".replace("è", "é")
    # user/item keys are exact
    assert g.register_entity("ab", K.USER) != g.register_entity("AB", K.USER)


# -- conforms / add_triplet ----------------------------------------------------------


def test_conforms_direction(topic_mg):
    g, u, i, w = small_graph(topic_mg)
    assert g.conforms(Triplet(u, K.MENTION, w))
    assert not g.conforms(Triplet(w, K.MENTION, u))
    assert g.conforms(Triplet(i, K.TAGGED, g.register_entity("vegan", K.WORD)))
    assert K.conforms(Triplet(u, K.MENTION, w), topic_mg, g)


def test_conforms_unknown_entity(topic_mg):
    g, u, _, _ = small_graph(topic_mg)
    with pytest.raises(K.UnknownEntity):
        g.conforms(Triplet(u, K.MENTION, 999))


def test_add_triplet_set_semantics(topic_mg):
    g, u, i, w = small_graph(topic_mg)
    assert g.add_triplet(Triplet(u, K.MENTION, w)) is K.AddResult.INSERTED
    assert g.add_triplet(Triplet(u, K.MENTION, w)) is K.AddResult.DUPLICATE
    assert g.num_triplets == 1
    assert g.by_head(u) == {Triplet(u, K.MENTION, w)}
    assert g.by_tail(w) == {Triplet(u, K.MENTION, w)}
    assert g.by_relation(K.MENTION) == {Triplet(u, K.MENTION, w)}


def test_add_triplet_rejects_wrong_head(topic_mg):
    g, u, i, w = small_graph(topic_mg)
    with pytest.raises(K.NonConformingTriplet) as exc:
        g.add_triplet(Triplet(u, K.TAGGED, w))
    assert exc.value.triplet_type == K.TripletType(K.USER, K.TAGGED, K.WORD)
    assert g.num_triplets == 0


# -- metagraph algebra --------------------------------------------------------------------


def test_base_metagraph_drops_context(standard):
    ctx = standard.types_of_class(EntityClass.CONTEXT)
    base = K.build_base_metagraph(standard, ctx)
    assert K.TripletType(K.ITEM, "has_description", K.DESCRIPTION) in standard.triplet_types
    assert not any("has_description" == t.relation for t in base.triplet_types)
    assert not base.types_of_class(EntityClass.CONTEXT)
    assert not ({"has_description", "reviewed", "about"} & base.relation_types)
    assert (len(base.entity_types), len(base.relation_types)) == (5, 6)


def test_base_metagraph_no_context_is_identity(standard):
    assert K.build_base_metagraph(standard, set()) == standard


def test_base_metagraph_only_context():
    m = Metagraph.from_parts(
        [("Item", "item"), ("Description", "context")], [("Item", "has_description", "Description")]
    )
    assert K.build_base_metagraph(m, {"Description"}).triplet_types == frozenset()


def test_base_metagraph_rejects_side_type(standard):
    with pytest.raises(K.NotContextType):
        K.build_base_metagraph(standard, {K.BRAND})


def test_topic_metagraph():
    m = K.build_topic_metagraph()
    assert len(m.triplet_types) == 4
    assert {t.head for t in m.triplet_types} <= {K.USER, K.ITEM}
    assert {t.tail for t in m.triplet_types} <= {K.SUBTYPE, K.WORD}


def test_merge_laws_examples(standard):
    base = K.build_base_metagraph(standard, standard.types_of_class(EntityClass.CONTEXT))
    merged = K.merge_metagraphs(base, K.build_topic_metagraph())
    assert merged == K.topic_aware_metagraph(standard)
    assert K.merge_metagraphs(merged, Metagraph()) == merged
    assert K.merge_metagraphs(merged, merged) == merged
    assert not merged.types_of_class(EntityClass.CONTEXT)


def test_merge_conflict():
    a = Metagraph.from_parts([("Word", "topic")], [])
    b = Metagraph.from_parts([("Word", "side")], [])
    with pytest.raises(K.ConflictingDeclaration):
        K.merge_metagraphs(a, b)


def test_metagraph_rejects_undeclared_component():
    with pytest.raises(K.UndeclaredType):
        Metagraph.from_parts([("User", "user")], [("User", "purchase", "Item")])


NAMES = ["User", "Item", "Brand", "Type", "Word", "Subtype", "Review"]
CLASSES = dict(zip(NAMES, ["user", "item", "side", "side", "topic", "topic", "context"]))


@st.composite
def metagraphs(draw):
    names = draw(st.sets(st.sampled_from(NAMES), min_size=1))
    rels = ["r1", "r2", "r3"]
    tts = draw(st.sets(st.tuples(st.sampled_from(sorted(names)), st.sampled_from(rels), st.sampled_from(sorted(names)))))
    return Metagraph.from_parts([(n, CLASSES[n]) for n in names], tts)


@settings(max_examples=200)
@given(metagraphs(), metagraphs(), metagraphs())
def test_merge_union_laws(a, b, c):
    assert K.merge_metagraphs(a, b) == K.merge_metagraphs(b, a)
    assert K.merge_metagraphs(K.merge_metagraphs(a, b), c) == K.merge_metagraphs(a, K.merge_metagraphs(b, c))
    assert K.merge_metagraphs(a, a) == a


def test_metagraph_json_roundtrip(tmp_path, topic_mg):
    topic_mg.dump(tmp_path / "m.json")
    assert Metagraph.load(tmp_path / "m.json") == topic_mg


# -- validate / stats / io ------------------------------------------------------------------


def test_validate_graph(topic_mg):
    g, u, i, w = small_graph(topic_mg)
    assert K.validate_graph(K.KnowledgeGraph(topic_mg)) == []
    g.add(u, K.MENTION, w)
    assert K.validate_graph(g) == []
    g._insert(Triplet(w, K.MENTION, u))
    report = K.validate_graph(g)
    assert len(report) == 1
    assert report[0].triplet_type == K.TripletType(K.WORD, K.MENTION, K.USER)


def test_stats_counts(topic_mg):
    g, u, i, w = small_graph(topic_mg)
    g.add(u, K.PURCHASE, i)
    g.add(u, K.MENTION, w)
    g.add(i, K.DESCRIBED_AS, w)
    g.add(i, K.RELATED_TO, g.register_entity("Hydrating Serum", K.SUBTYPE))
    s = K.stats(g)
    assert (s.user_count, s.item_count, s.entity_count) == (1, 1, 4)
    assert (s.general_topic_count, s.specific_topic_count) == (1, 1)
    assert (s.user_entity_relation_count, s.item_entity_relation_count) == (2, 2)
    # type counts come from the configured metagraph
    assert (s.entity_type_count, s.relation_type_count) == (7, 10)
    assert s.entity_count >= s.user_count + s.item_count


def test_stats_empty_graph(standard):
    base = K.build_base_metagraph(standard, standard.types_of_class(EntityClass.CONTEXT))
    s = K.stats(K.KnowledgeGraph(base)).to_dict()
    assert s.pop("entity_type_count") == 5 and s.pop("relation_type_count") == 6
    assert set(s.values()) == {0}


def test_graph_roundtrip(tmp_path, topic_mg):
    g, u, i, w = small_graph(topic_mg)
    g.add(u, K.MENTION, w)
    g.add(i, K.TAGGED, g.register_entity("non-greasy", K.WORD))
    K.save_graph(g, tmp_path)
    h = K.load_graph(tmp_path)
    assert h.entities() == g.entities() and h.triplets() == g.triplets()
    assert h.register_entity("hydrating", K.WORD) == w
    assert h.register_entity("new", K.WORD) == g.num_entities
    lines = (tmp_path / "entities.tsv").read_text("utf-8").splitlines()
    assert lines[0].split("\t") == [str(u), "User", "U1"]


def test_load_nonstrict_keeps_bad_edges(tmp_path, topic_mg):
    g, u, i, w = small_graph(topic_mg)
    g._insert(Triplet(w, K.MENTION, u))
    K.save_graph(g, tmp_path)
    with pytest.raises(K.NonConformingTriplet):
        K.load_graph(tmp_path)
    assert len(K.validate_graph(K.load_graph(tmp_path, strict=False))) == 1


def test_duplicate_insertion_sequence(topic_mg):
    rng = random.Random(3)
    g = K.KnowledgeGraph(topic_mg)
    users = [g.register_entity(f"U{n}", K.USER) for n in range(5)]
    words = [g.register_entity(f"w{n}", K.WORD) for n in range(5)]
    seq = [Triplet(rng.choice(users), K.MENTION, rng.choice(words)) for _ in range(40)]
    for t in seq:
        g.add_triplet(t)
    once = g.num_triplets
    for t in seq:
        g.add_triplet(t)
    assert g.num_triplets == once == len(set(seq))
