"""Synthetic Amazon-style corpora for tests and demos.

Every item has two hidden attributes that its description states, and every
user has two preferred attributes.  Users mostly buy items sharing one of
their preferences and say so in their reviews, while brands, categories and
"also bought" links are assigned independently of the attributes.  Topic
words extracted from the text therefore connect users to items they will
like, which the side information alone does not.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

# attribute -> surface variants (spelling variants feed synonym refinement)
ATTRIBUTES = {
    "moisturizing": ["moisturizing", "moisturising"],
    "fragrance": ["fragrance", "fragrances"],
    "vegan": ["vegan"],
    "lightweight": ["lightweight"],
    "organic": ["organic"],
    "colour": ["colour", "color"],
    "sensitive": ["sensitive"],
    "matte": ["matte"],
    "shimmer": ["shimmer", "shimmering"],
    "sunscreen": ["sunscreen", "sunscreens"],
    "glossy": ["glossy"],
    "volumizing": ["volumizing", "volumising"],
}

CATEGORIES = [
    ["Beauty", "Skin Care", "Serum"],
    ["Beauty", "Skin Care", "Moisturizer"],
    ["Beauty", "Skin Care", "Cleanser"],
    ["Beauty", "Hair Care", "Shampoo"],
    ["Beauty", "Hair Care", "Conditioner"],
    ["Beauty", "Makeup", "Lipstick"],
    ["Beauty", "Makeup", "Foundation"],
]

TITLE_WORDS = ["Hydrating", "Plumping", "Brightening", "Soothing", "Firming", "Clarifying",
               "Nourishing", "Repairing", "Smoothing", "Radiant"]
GENERIC = ["Face", "Ultra", "Deep", "Daily", ""]
BRANDS = ["Lumina", "Verdant", "Aurelle", "Mosswood", "Kiri", "Solenne", "Brisa", "Okra",
          "Palomar", "Thistle", "Nacre", "Umbra"]
FILLER = ["arrived quickly", "nice packaging", "would buy again", "decent value",
          "works as expected", "my sister recommended it", "bottle is small"]


def serum_items() -> list[dict]:
    """Three serums under one leaf: two distinct subtypes, then a repeat of the first."""
    path = [["Beauty", "Skin Care", "Serum"]]
    return [
        {"asin": "A", "title": "Ultra Hydrating Face Serum", "categories": path, "brand": "Lumina"},
        {"asin": "B", "title": "Collagen Plumping Serum", "categories": path, "brand": "Lumina"},
        {"asin": "C", "title": "Deep Hydrating Serum", "categories": path, "brand": "Verdant"},
    ]


def make_corpus(
    n_items: int = 200,
    n_users: int = 150,
    reviews_per_user: int = 7,
    seed: int = 0,
    affinity: float = 12.0,
) -> tuple[list[dict], list[dict]]:
    """Return ``(metadata, reviews)`` as lists of JSON-ready dicts."""
    rng = np.random.default_rng(seed)
    attrs = list(ATTRIBUTES)
    items, item_attrs = [], []
    for n in range(n_items):
        asin = f"B{n:05d}"
        a = rng.choice(len(attrs), size=2, replace=False)
        chosen = [attrs[j] for j in a]
        item_attrs.append(set(chosen))
        cat = CATEGORIES[int(rng.integers(len(CATEGORIES)))]
        words = [str(rng.choice(TITLE_WORDS)), str(rng.choice(GENERIC)), cat[-1]]
        title = " ".join([str(rng.choice(BRANDS))] + [w for w in words if w])
        variants = [str(rng.choice(ATTRIBUTES[c])) for c in chosen]
        rec = {
            "asin": asin,
            "title": title,
            "categories": [cat],
            "brand": str(rng.choice(BRANDS)),
            "price": round(float(rng.uniform(5, 60)), 2),
            "description": f"A {variants[0]} and {variants[1]} {cat[-1].lower()} for everyday use.",
        }
        if n % 17 == 5:
            del rec["categories"]
        if n % 23 == 7:
            del rec["description"]
        related = {}
        for rel in ("also_bought", "also_viewed"):
            k = int(rng.integers(0, 4))
            picks = [f"B{int(j):05d}" for j in rng.choice(n_items, size=k, replace=False)]
            picks.append(f"X{int(rng.integers(10**6)):07d}")  # out-of-catalog product
            related[rel] = picks
        rec["related"] = related
        items.append(rec)

    reviews = []
    for u in range(n_users):
        user = f"U{u:04d}"
        prefs = {attrs[j] for j in rng.choice(len(attrs), size=2, replace=False)}
        weight = np.array([1.0 + affinity * len(prefs & ia) for ia in item_attrs])
        picks = rng.choice(n_items, size=reviews_per_user, replace=False, p=weight / weight.sum())
        for i in picks:
            shared = sorted(prefs & item_attrs[int(i)])
            parts = [f"really {rng.choice(ATTRIBUTES[c])}" for c in shared] or ["okay overall"]
            text = "Love it, " + ", ".join(parts) + f", {rng.choice(FILLER)}."
            reviews.append({
                "reviewerID": user,
                "asin": items[int(i)]["asin"],
                "reviewText": text,
                "overall": int(rng.integers(3, 6)),
                "unixReviewTime": 1_400_000_000 + int(rng.integers(10**7)),
            })
    return items, reviews


def write_jsonl(records: list[dict], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for rec in records:
            f.write(json.dumps(rec, ensure_ascii=False) + "\n")
    return path


def write_corpus(directory: str | Path, **kwargs) -> tuple[Path, Path]:
    """Write ``metadata.jsonl`` and ``reviews.jsonl`` from :func:`make_corpus`."""
    items, reviews = make_corpus(**kwargs)
    d = Path(directory)
    return write_jsonl(items, d / "metadata.jsonl"), write_jsonl(reviews, d / "reviews.jsonl")
