"""Typed knowledge-graph store, metagraph algebra and conformance checks.

A :class:`Metagraph` is a set of allowed ``(head type, relation, tail type)``
triplet types.  A :class:`KnowledgeGraph` refuses any triplet whose typed
signature is not in its metagraph, so validity holds by construction; the
:func:`validate_graph` audit exists for graphs imported from disk or
modified through the private insertion path.
"""

from __future__ import annotations

import json
from collections import defaultdict
from collections.abc import Iterable, Iterator
from dataclasses import asdict, dataclass
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Any, NamedTuple

from .normalize import clean_label, match_key

# Entity and relation type names used by the pipeline stages.
USER = "User"
ITEM = "Item"
BRAND = "Brand"
TYPE = "Type"
RELATED_ITEM = "RelatedItem"
DESCRIPTION = "Description"
REVIEW = "Review"
SUBTYPE = "Subtype"
WORD = "Word"

PURCHASE = "purchase"
PRODUCED_BY = "produced_by"
BELONGS_TO = "belongs_to"
RELATED_RELATIONS = ("also_bought", "also_viewed", "bought_together")
RELATED_TO = "related_to"
MENTION = "mention"
DESCRIBED_AS = "described_as"
TAGGED = "tagged"
TOPIC_RELATIONS = (RELATED_TO, MENTION, DESCRIBED_AS, TAGGED)


class KGError(Exception):
    """Base class for knowledge-graph errors."""


class UndeclaredType(KGError, KeyError):
    """An entity type or relation is not declared in the metagraph."""


class EmptyLabel(KGError, ValueError):
    """A label is empty after normalization."""


class UnknownEntity(KGError, KeyError):
    """A triplet references an entity id that was never registered."""


class ConflictingDeclaration(KGError, ValueError):
    """Two metagraphs declare the same entity type name with different classes."""


class NotContextType(KGError, ValueError):
    """A type passed as context information is not tagged ``context``."""


class NonConformingTriplet(KGError, ValueError):
    """A triplet's typed signature is not allowed by the metagraph."""

    def __init__(self, triplet: Triplet, triplet_type: TripletType):
        super().__init__(f"{triplet_type} not in metagraph (triplet {tuple(triplet)})")
        self.triplet = triplet
        self.triplet_type = triplet_type


class EntityClass(str, Enum):
    USER = "user"
    ITEM = "item"
    SIDE = "side"
    CONTEXT = "context"
    TOPIC = "topic"


@dataclass(frozen=True, slots=True)
class EntityType:
    name: str
    klass: EntityClass


class TripletType(NamedTuple):
    head: str
    relation: str
    tail: str


@dataclass(frozen=True)
class Metagraph:
    """Entity types, relation types and the triplet types they may form."""

    entity_types: frozenset[EntityType] = frozenset()
    relation_types: frozenset[str] = frozenset()
    triplet_types: frozenset[TripletType] = frozenset()

    def __post_init__(self) -> None:
        seen: dict[str, EntityClass] = {}
        for et in self.entity_types:
            if seen.setdefault(et.name, et.klass) != et.klass:
                raise ConflictingDeclaration(f"entity type {et.name!r} declared twice")
        for tt in self.triplet_types:
            for name in (tt.head, tt.tail):
                if name not in seen:
                    raise UndeclaredType(f"{tt}: entity type {name!r} not declared")
            if tt.relation not in self.relation_types:
                raise UndeclaredType(f"{tt}: relation {tt.relation!r} not declared")

    @classmethod
    def from_parts(
        cls,
        entity_types: Iterable[tuple[str, EntityClass | str]],
        triplet_types: Iterable[tuple[str, str, str]],
        relation_types: Iterable[str] = (),
    ) -> Metagraph:
        """Build from plain tuples; relations used by triplet types are declared implicitly."""
        tts = frozenset(TripletType(*t) for t in triplet_types)
        return cls(
            frozenset(EntityType(n, EntityClass(k)) for n, k in entity_types),
            frozenset(relation_types) | {t.relation for t in tts},
            tts,
        )

    @property
    def type_names(self) -> frozenset[str]:
        return frozenset(et.name for et in self.entity_types)

    def entity_type(self, name: str) -> EntityType:
        for et in self.entity_types:
            if et.name == name:
                return et
        raise UndeclaredType(f"entity type {name!r} not declared")

    def class_of(self, name: str) -> EntityClass:
        return self.entity_type(name).klass

    def types_of_class(self, klass: EntityClass) -> frozenset[str]:
        return frozenset(et.name for et in self.entity_types if et.klass == klass)

    def allows(self, head: str, relation: str, tail: str) -> bool:
        return TripletType(head, relation, tail) in self.triplet_types

    def to_dict(self) -> dict[str, Any]:
        return {
            "entity_types": [
                {"name": et.name, "class": et.klass.value}
                for et in sorted(self.entity_types, key=lambda e: e.name)
            ],
            "relation_types": sorted(self.relation_types),
            "triplet_types": [list(t) for t in sorted(self.triplet_types)],
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> Metagraph:
        return cls.from_parts(
            [(e["name"], e["class"]) for e in d["entity_types"]],
            [tuple(t) for t in d["triplet_types"]],
            d.get("relation_types", ()),
        )

    @classmethod
    def load(cls, path: str | Path) -> Metagraph:
        with open(path, encoding="utf-8") as f:
            return cls.from_dict(json.load(f))

    def dump(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2, ensure_ascii=False)
            f.write("\n")


def default_metagraph() -> Metagraph:
    """The bundled standardized metagraph (users, items, side and context types)."""
    text = resources.files("topickg").joinpath("data/metagraph_default.json").read_text("utf-8")
    return Metagraph.from_dict(json.loads(text))


def build_base_metagraph(standard: Metagraph, context_types: Iterable[str]) -> Metagraph:
    """Drop context entity types, their relations and every triplet type touching them.

    A relation is a context relation if some triplet type of ``standard`` has a
    context type as its tail.  Relations that only ever appeared in removed
    triplet types are removed too; relations declared but never used stay.
    """
    ctx = frozenset(context_types)
    for name in ctx:
        if standard.class_of(name) != EntityClass.CONTEXT:
            raise NotContextType(f"{name!r} is not a context entity type")
    ctx_relations = {t.relation for t in standard.triplet_types if t.tail in ctx}
    kept = frozenset(
        t
        for t in standard.triplet_types
        if t.head not in ctx and t.tail not in ctx and t.relation not in ctx_relations
    )
    used = {t.relation for t in standard.triplet_types}
    relations = frozenset(
        r
        for r in standard.relation_types
        if r not in ctx_relations and (r not in used or any(t.relation == r for t in kept))
    )
    return Metagraph(
        frozenset(et for et in standard.entity_types if et.name not in ctx), relations, kept
    )


def build_topic_metagraph() -> Metagraph:
    """The four topic triplet types: subtypes on items, words on users and items."""
    return Metagraph.from_parts(
        [(USER, "user"), (ITEM, "item"), (SUBTYPE, "topic"), (WORD, "topic")],
        [
            (ITEM, RELATED_TO, SUBTYPE),
            (USER, MENTION, WORD),
            (ITEM, DESCRIBED_AS, WORD),
            (ITEM, TAGGED, WORD),
        ],
    )


def merge_metagraphs(a: Metagraph, b: Metagraph) -> Metagraph:
    for et in b.entity_types:
        if et.name in a.type_names and a.class_of(et.name) != et.klass:
            raise ConflictingDeclaration(
                f"entity type {et.name!r}: {a.class_of(et.name).value} vs {et.klass.value}"
            )
    return Metagraph(
        a.entity_types | b.entity_types,
        a.relation_types | b.relation_types,
        a.triplet_types | b.triplet_types,
    )


def topic_aware_metagraph(standard: Metagraph | None = None) -> Metagraph:
    """Base metagraph of ``standard`` with context types replaced by topic types."""
    standard = standard or default_metagraph()
    base = build_base_metagraph(standard, standard.types_of_class(EntityClass.CONTEXT))
    return merge_metagraphs(base, build_topic_metagraph())


@dataclass(frozen=True, slots=True)
class Entity:
    id: int
    entity_type: str
    label: str


class Triplet(NamedTuple):
    head: int
    relation: str
    tail: int


class AddResult(str, Enum):
    INSERTED = "inserted"
    DUPLICATE = "duplicate"


@dataclass(frozen=True)
class Violation:
    triplet: Triplet
    triplet_type: TripletType


class KnowledgeGraph:
    """Entity table plus a deduplicated triplet set indexed by head, tail and relation."""

    def __init__(self, metagraph: Metagraph):
        self.metagraph = metagraph
        self._entities: dict[int, Entity] = {}
        self._keys: dict[tuple[str, str], int] = {}
        self._next_id = 0
        self._triplets: set[Triplet] = set()
        self._by_head: dict[int, set[Triplet]] = defaultdict(set)
        self._by_tail: dict[int, set[Triplet]] = defaultdict(set)
        self._by_relation: dict[str, set[Triplet]] = defaultdict(set)

    # -- entities -----------------------------------------------------------

    def _label_and_key(self, label: str, entity_type: str) -> tuple[str, str]:
        klass = self.metagraph.class_of(entity_type)
        text = clean_label(label)
        if not text:
            raise EmptyLabel(f"empty {entity_type} label: {label!r}")
        if klass == EntityClass.TOPIC:
            text = match_key(text)
            return text, text
        if klass in (EntityClass.USER, EntityClass.ITEM):
            return text, text
        return text, match_key(text)

    def register_entity(self, label: str, entity_type: str) -> int:
        """Return the id for ``(entity_type, label)``, creating the entity if new."""
        text, key = self._label_and_key(label, entity_type)
        eid = self._keys.get((entity_type, key))
        if eid is None:
            eid = self._next_id
            self._next_id += 1
            self._entities[eid] = Entity(eid, entity_type, text)
            self._keys[(entity_type, key)] = eid
        return eid

    def lookup(self, label: str, entity_type: str) -> int | None:
        try:
            _, key = self._label_and_key(label, entity_type)
        except EmptyLabel:
            return None
        return self._keys.get((entity_type, key))

    def entity(self, eid: int) -> Entity:
        try:
            return self._entities[eid]
        except KeyError:
            raise UnknownEntity(eid) from None

    def entities(self, entity_type: str | None = None) -> list[Entity]:
        """Entities in id order, optionally restricted to one type."""
        return [
            e
            for _, e in sorted(self._entities.items())
            if entity_type is None or e.entity_type == entity_type
        ]

    def class_of_entity(self, eid: int) -> EntityClass:
        return self.metagraph.class_of(self.entity(eid).entity_type)

    @property
    def num_entities(self) -> int:
        return len(self._entities)

    # -- triplets -----------------------------------------------------------

    @property
    def num_triplets(self) -> int:
        return len(self._triplets)

    def __contains__(self, t: object) -> bool:
        return t in self._triplets

    def triplets(self) -> list[Triplet]:
        return sorted(self._triplets)

    def by_head(self, eid: int) -> set[Triplet]:
        return set(self._by_head.get(eid, ()))

    def by_tail(self, eid: int) -> set[Triplet]:
        return set(self._by_tail.get(eid, ()))

    def by_relation(self, relation: str) -> set[Triplet]:
        return set(self._by_relation.get(relation, ()))

    def triplet_type(self, t: Triplet) -> TripletType:
        return TripletType(self.entity(t.head).entity_type, t.relation, self.entity(t.tail).entity_type)

    def conforms(self, t: Triplet, metagraph: Metagraph | None = None) -> bool:
        m = self.metagraph if metagraph is None else metagraph
        return self.triplet_type(t) in m.triplet_types

    def add_triplet(self, t: Triplet) -> AddResult:
        t = Triplet(*t)
        tt = self.triplet_type(t)
        if tt not in self.metagraph.triplet_types:
            raise NonConformingTriplet(t, tt)
        return self._insert(t)

    def add(self, head: int, relation: str, tail: int) -> AddResult:
        return self.add_triplet(Triplet(head, relation, tail))

    def _insert(self, t: Triplet) -> AddResult:
        # No conformance check; used by import in non-strict mode and by tests.
        if t in self._triplets:
            return AddResult.DUPLICATE
        self.entity(t.head), self.entity(t.tail)
        self._triplets.add(t)
        self._by_head[t.head].add(t)
        self._by_tail[t.tail].add(t)
        self._by_relation[t.relation].add(t)
        return AddResult.INSERTED

    def extend_metagraph(self, other: Metagraph) -> None:
        self.metagraph = merge_metagraphs(self.metagraph, other)

    def copy(self) -> KnowledgeGraph:
        g = KnowledgeGraph(self.metagraph)
        g._entities = dict(self._entities)
        g._keys = dict(self._keys)
        g._next_id = self._next_id
        for t in self._triplets:
            g._insert(t)
        return g

    def _restore_entity(self, e: Entity) -> None:
        _, key = self._label_and_key(e.label, e.entity_type)
        self._entities[e.id] = e
        self._keys[(e.entity_type, key)] = e.id
        self._next_id = max(self._next_id, e.id + 1)


# Module-level spellings of the core operations.


def register_entity(label: str, entity_type: str, kg: KnowledgeGraph) -> int:
    return kg.register_entity(label, entity_type)


def add_triplet(t: Triplet, kg: KnowledgeGraph) -> AddResult:
    return kg.add_triplet(t)


def conforms(t: Triplet, m: Metagraph, kg: KnowledgeGraph) -> bool:
    return kg.conforms(t, m)


def validate_graph(kg: KnowledgeGraph) -> list[Violation]:
    """Every stored triplet whose typed signature is missing from the metagraph."""
    out = []
    for t in kg.triplets():
        tt = kg.triplet_type(t)
        if tt not in kg.metagraph.triplet_types:
            out.append(Violation(t, tt))
    return out


@dataclass(frozen=True)
class GraphStats:
    user_count: int
    item_count: int
    entity_count: int
    general_topic_count: int
    specific_topic_count: int
    entity_type_count: int
    relation_type_count: int
    user_entity_relation_count: int
    item_entity_relation_count: int

    def to_dict(self) -> dict[str, int]:
        return asdict(self)


def stats(kg: KnowledgeGraph) -> GraphStats:
    """Size summary of a graph; type counts are those declared by its metagraph."""
    m = kg.metagraph
    users = m.types_of_class(EntityClass.USER)
    items = m.types_of_class(EntityClass.ITEM)
    by_type: dict[str, int] = defaultdict(int)
    for e in kg.entities():
        by_type[e.entity_type] += 1
    user_rel = item_rel = 0
    for t in kg.triplets():
        head_type = kg.entity(t.head).entity_type
        if head_type in users:
            user_rel += 1
        elif head_type in items:
            item_rel += 1
    return GraphStats(
        user_count=sum(by_type[n] for n in users),
        item_count=sum(by_type[n] for n in items),
        entity_count=kg.num_entities,
        general_topic_count=by_type[SUBTYPE],
        specific_topic_count=by_type[WORD],
        entity_type_count=len(m.entity_types),
        relation_type_count=len(m.relation_types),
        user_entity_relation_count=user_rel,
        item_entity_relation_count=item_rel,
    )


# -- flat-file import/export ---------------------------------------------------


def _rows(path: Path) -> Iterator[list[str]]:
    with open(path, encoding="utf-8", newline="") as f:
        for line in f:
            line = line.rstrip("\n")
            if line:
                yield line.split("\t")


def save_graph(kg: KnowledgeGraph, directory: str | Path) -> None:
    """Write ``entities.tsv``, ``triplets.tsv`` and ``metagraph.json`` to ``directory``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    # Labels are whitespace-collapsed, so they never contain tabs or newlines.
    with open(d / "entities.tsv", "w", encoding="utf-8", newline="\n") as f:
        f.writelines(f"{e.id}\t{e.entity_type}\t{e.label}\n" for e in kg.entities())
    with open(d / "triplets.tsv", "w", encoding="utf-8", newline="\n") as f:
        f.writelines(f"{t.head}\t{t.relation}\t{t.tail}\n" for t in kg.triplets())
    kg.metagraph.dump(d / "metagraph.json")


def load_graph(
    directory: str | Path, metagraph: Metagraph | None = None, *, strict: bool = True
) -> KnowledgeGraph:
    """Read a graph written by :func:`save_graph`.

    ``metagraph`` defaults to the ``metagraph.json`` stored alongside.  With
    ``strict=False`` non-conforming triplets are kept so :func:`validate_graph`
    can report them.
    """
    d = Path(directory)
    if metagraph is None:
        metagraph = Metagraph.load(d / "metagraph.json")
    kg = KnowledgeGraph(metagraph)
    for eid, etype, label in _rows(d / "entities.tsv"):
        kg._restore_entity(Entity(int(eid), etype, label))
    for head, rel, tail in _rows(d / "triplets.tsv"):
        t = Triplet(int(head), rel, int(tail))
        if strict:
            kg.add_triplet(t)
        else:
            kg._insert(t)
    return kg
