"""Label normalization shared by every stage that creates or matches entities."""

from __future__ import annotations

import re
import unicodedata

_WS = re.compile(r"\s+")


def clean_label(text: str) -> str:
    """NFC-normalize, trim, and collapse internal whitespace runs to one space."""
    return _WS.sub(" ", unicodedata.normalize("NFC", text)).strip()


def match_key(text: str) -> str:
    """Case-folded form of :func:`clean_label`, used for dedup and lookup."""
    return unicodedata.normalize("NFC", clean_label(text).casefold())
