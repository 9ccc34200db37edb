"""Parse Amazon-style item metadata and reviews, and assemble the base graph.

Item descriptions and review bodies are not graph entities: they are kept in
a :class:`ContextStore` side table that the topic-extraction stages read.
"""

from __future__ import annotations

import ast
import json
import logging
import re
from collections import defaultdict
from collections.abc import Iterable, Iterator
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import IO, Any, Literal, NamedTuple

from . import kg as K
from .evaluate import purchases, split_interactions
from .normalize import clean_label

log = logging.getLogger(__name__)

Variant = Literal["base", "large"]
UNCATEGORIZED = "(uncategorized)"

# Field aliases: 2014 metadata uses ``related``/``categories``, 2018 uses flat keys.
_RELATED_ALIASES = {
    "also_bought": ("also_bought", "also_buy"),
    "also_viewed": ("also_viewed", "also_view"),
    "bought_together": ("bought_together",),
}


@dataclass
class ItemRecord:
    item_id: str
    title: str = ""
    brand: str | None = None
    category_paths: list[list[str]] = field(default_factory=list)
    price: float | None = None
    description: str | None = None
    related: dict[str, list[str]] = field(default_factory=dict)


@dataclass
class ReviewRecord:
    user_id: str
    item_id: str
    text: str = ""
    rating: float | None = None
    timestamp: int | None = None


class ParseResult(NamedTuple):
    records: list
    malformed: int


def _lines(stream: str | Path | IO[str] | Iterable[str]) -> Iterator[str]:
    if isinstance(stream, (str, Path)):
        with open(stream, encoding="utf-8") as f:
            yield from f
    else:
        yield from stream


def _decode(line: str) -> Any:
    try:
        return json.loads(line)
    except json.JSONDecodeError:
        # The 2014 metadata dump is written as Python dict literals.
        return ast.literal_eval(line)


def _text(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, list):
        return " ".join(str(v) for v in value)
    return str(value)


def _price(value: Any) -> float | None:
    if value in (None, ""):
        return None
    try:
        return float(str(value).replace("$", "").replace(",", ""))
    except ValueError:
        return None


def _item_from(obj: dict[str, Any]) -> ItemRecord:
    asin = clean_label(_text(obj.get("asin")))
    if not asin:
        raise ValueError("missing asin")
    raw_paths = obj.get("categories")
    if raw_paths is None and obj.get("category"):
        raw_paths = [obj["category"]]
    paths = []
    for p in raw_paths or []:
        path = [clean_label(str(c)) for c in p]
        path = [c for c in path if c]
        if path:
            paths.append(path)
    related_src = obj.get("related") or obj
    related = {}
    for rel, keys in _RELATED_ALIASES.items():
        for key in keys:
            if related_src.get(key):
                related[rel] = [str(a) for a in related_src[key]]
                break
    brand = clean_label(_text(obj.get("brand"))) or None
    description = clean_label(_text(obj.get("description"))) or None
    return ItemRecord(
        item_id=asin,
        title=clean_label(_text(obj.get("title"))),
        brand=brand,
        category_paths=paths,
        price=_price(obj.get("price")),
        description=description,
        related=related,
    )


def _review_from(obj: dict[str, Any]) -> ReviewRecord:
    user = clean_label(_text(obj.get("reviewerID")))
    item = clean_label(_text(obj.get("asin")))
    if not user or not item:
        raise ValueError("missing reviewerID or asin")
    rating = obj.get("overall")
    ts = obj.get("unixReviewTime")
    return ReviewRecord(
        user_id=user,
        item_id=item,
        text=_text(obj.get("reviewText")),
        rating=None if rating is None else float(rating),
        timestamp=None if ts is None else int(ts),
    )


def _parse(stream, build) -> ParseResult:
    records, bad = [], 0
    for lineno, line in enumerate(_lines(stream), 1):
        if not line.strip():
            continue
        try:
            obj = _decode(line)
            if not isinstance(obj, dict):
                raise ValueError("not an object")
            records.append(build(obj))
        except (ValueError, SyntaxError, TypeError, MemoryError, RecursionError) as exc:
            bad += 1
            log.debug("skipping line %d: %s", lineno, exc)
    if bad:
        log.warning("skipped %d malformed line(s)", bad)
    return ParseResult(records, bad)


def parse_item_metadata(stream) -> ParseResult:
    """Parse one metadata record per line; malformed lines are skipped and counted."""
    return _parse(stream, _item_from)


def parse_reviews(stream) -> ParseResult:
    return _parse(stream, _review_from)


# -- stopwords / tokenizer -------------------------------------------------------

_TOKEN = re.compile(r"[^\W_]+")


def load_stopwords(path: str | Path | None = None) -> frozenset[str]:
    """Bundled English list, or one word per line from ``path``."""
    if path is None:
        text = resources.files("topickg").joinpath("data/stopwords.txt").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    return frozenset(w.strip().casefold() for w in text.split() if w.strip())


def tokenize(text: str, stopwords: frozenset[str]) -> list[str]:
    """Case-folded alphanumeric runs of length >= 3 that are not stopwords."""
    return [t for t in _TOKEN.findall(text.casefold()) if len(t) >= 3 and t not in stopwords]


# -- type tree --------------------------------------------------------------------


class TypeTree:
    """Forest of category paths; path endpoints ("leaves") carry member item ids."""

    def __init__(self) -> None:
        self.children: dict[tuple[str, ...], set[tuple[str, ...]]] = defaultdict(set)
        self.roots: set[tuple[str, ...]] = set()
        self._members: dict[tuple[str, ...], set[str]] = {}

    def add_path(self, path: Iterable[str], item_id: str | None = None) -> tuple[str, ...]:
        path = tuple(path)
        if not path:
            raise ValueError("empty category path")
        self.roots.add(path[:1])
        for i in range(1, len(path)):
            self.children[path[:i]].add(path[: i + 1])
        members = self._members.setdefault(path, set())
        if item_id is not None:
            members.add(item_id)
        return path

    def nodes(self) -> list[tuple[str, ...]]:
        out = set(self.roots) | set(self._members)
        for kids in self.children.values():
            out |= kids
        return sorted(out)

    def leaves(self) -> list[tuple[str, ...]]:
        return sorted(self._members)

    def members(self, leaf: tuple[str, ...]) -> list[str]:
        return sorted(self._members.get(tuple(leaf), ()))

    def to_dict(self) -> dict[str, Any]:
        return {"leaves": [{"path": list(p), "items": self.members(p)} for p in self.leaves()]}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> TypeTree:
        tree = cls()
        for leaf in d["leaves"]:
            path = tree.add_path(leaf["path"])
            tree._members[path].update(leaf["items"])
        return tree


def build_type_tree(items: Iterable[ItemRecord]) -> TypeTree:
    tree = TypeTree()
    for item in items:
        for path in item.category_paths or [[UNCATEGORIZED]]:
            tree.add_path(path, item.item_id)
    return tree


# -- context side table -------------------------------------------------------------


@dataclass
class ContextStore:
    """Titles, descriptions and review bodies keyed by external ids."""

    titles: dict[str, str] = field(default_factory=dict)
    descriptions: dict[str, str] = field(default_factory=dict)
    reviews: list[ReviewRecord] = field(default_factory=list)

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            for item_id in sorted(self.titles.keys() | self.descriptions.keys()):
                rec = {"kind": "item", "item_id": item_id, "title": self.titles.get(item_id, "")}
                if item_id in self.descriptions:
                    rec["description"] = self.descriptions[item_id]
                f.write(json.dumps(rec, ensure_ascii=False) + "\n")
            for r in self.reviews:
                f.write(json.dumps({"kind": "review", **asdict(r)}, ensure_ascii=False) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> ContextStore:
        store = cls()
        for line in _lines(path):
            if not line.strip():
                continue
            rec = json.loads(line)
            if rec.pop("kind") == "item":
                store.titles[rec["item_id"]] = rec.get("title", "")
                if "description" in rec:
                    store.descriptions[rec["item_id"]] = rec["description"]
            else:
                store.reviews.append(ReviewRecord(**rec))
        return store


# -- graph assembly -----------------------------------------------------------------


def variant_metagraph(standard: K.Metagraph, variant: Variant = "base") -> K.Metagraph:
    """Metagraph for the untopiced base graph: the standard minus context types.

    ``large`` additionally allows the raw review-word triplet types.
    """
    base = K.build_base_metagraph(standard, standard.types_of_class(K.EntityClass.CONTEXT))
    if variant == "large":
        words = K.Metagraph.from_parts(
            [(K.USER, "user"), (K.ITEM, "item"), (K.WORD, "topic")],
            [(K.USER, K.MENTION, K.WORD), (K.ITEM, K.DESCRIBED_AS, K.WORD)],
        )
        base = K.merge_metagraphs(base, words)
    elif variant != "base":
        raise ValueError(f"unknown variant {variant!r}")
    return base


def cap_reviews(reviews: Iterable[ReviewRecord], per_item: int | None) -> list[ReviewRecord]:
    """Keep at most ``per_item`` reviews of each item, in input order."""
    if per_item is None:
        return list(reviews)
    seen: dict[str, int] = defaultdict(int)
    out = []
    for r in reviews:
        if seen[r.item_id] < per_item:
            seen[r.item_id] += 1
            out.append(r)
    return out


class BaseGraph(NamedTuple):
    kg: K.KnowledgeGraph
    context: ContextStore
    held_out: frozenset[tuple[int, int]] = frozenset()


def build_base_graph(
    items: list[ItemRecord],
    reviews: list[ReviewRecord],
    metagraph: K.Metagraph,
    variant: Variant = "base",
    *,
    stopwords: frozenset[str] | None = None,
    max_reviews_per_item: int | None = None,
    holdout: tuple[float, int] | None = None,
) -> BaseGraph:
    """Build the side-information graph and its context side table.

    Reviews count as purchases regardless of rating.  Related products that
    are in the catalog link to their ``Item`` entity, others to a standalone
    ``RelatedItem``.  Items get one ``belongs_to`` edge per category path, to
    the leaf type of that path.

    ``holdout=(ratio, seed)`` splits the purchases as the evaluation will;
    held-out ``(user, item)`` pairs keep their purchase edge but their review
    text is left out of the side table and of the word edges.
    """
    if variant not in ("base", "large"):
        raise ValueError(f"unknown variant {variant!r}")
    g = K.KnowledgeGraph(metagraph)
    ctx = ContextStore()
    catalog = {it.item_id: g.register_entity(it.item_id, K.ITEM) for it in items}

    for it in items:
        iid = catalog[it.item_id]
        ctx.titles[it.item_id] = it.title
        if it.description:
            ctx.descriptions[it.item_id] = it.description
        if it.brand:
            g.add(iid, K.PRODUCED_BY, g.register_entity(it.brand, K.BRAND))
        for path in it.category_paths:
            g.add(iid, K.BELONGS_TO, g.register_entity(path[-1], K.TYPE))
        for rel in K.RELATED_RELATIONS:
            for other in it.related.get(rel, ()):
                if other == it.item_id or not clean_label(other):
                    continue
                if other in catalog:
                    g.add(iid, rel, catalog[other])
                else:
                    g.add(iid, rel, g.register_entity(other, K.RELATED_ITEM))

    kept = cap_reviews(reviews, max_reviews_per_item)
    pairs = []
    for r in kept:
        uid = g.register_entity(r.user_id, K.USER)
        iid = catalog.get(r.item_id)
        if iid is None:
            iid = catalog[r.item_id] = g.register_entity(r.item_id, K.ITEM)
        g.add(uid, K.PURCHASE, iid)
        pairs.append((uid, iid))

    held_out: frozenset[tuple[int, int]] = frozenset()
    if holdout is not None:
        held_out = split_interactions(purchases(g), *holdout).test

    if variant == "large" and stopwords is None:
        stopwords = load_stopwords()
    for r, (uid, iid) in zip(kept, pairs):
        if (uid, iid) in held_out:
            continue
        ctx.reviews.append(r)
        if variant == "large":
            for tok in tokenize(r.text, stopwords):
                wid = g.register_entity(tok, K.WORD)
                g.add(uid, K.MENTION, wid)
                g.add(iid, K.DESCRIBED_AS, wid)
    return BaseGraph(g, ctx, held_out)
