"""Pluggable text-understanding backends for topic extraction.

Every backend answers three kinds of request with a single JSON value:

* ``general``   -> a string (the item's subtype)
* ``specific``  -> an array of strings (topic words of one document)
* ``synonyms``  -> an array of arrays of strings (a partition of the words)

Backends implement :meth:`TopicBackend.complete`, returning the decoded JSON
value.  The typed methods on the base class validate and normalize it.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import tempfile
import threading
import time
from collections import Counter
from collections.abc import Callable, Iterable, Sequence
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from string import Template
from typing import Any, Literal, TypeVar

import httpx

from .normalize import clean_label, match_key

log = logging.getLogger(__name__)

Kind = Literal["general", "specific", "synonyms"]
KINDS = ("general", "specific", "synonyms")


class BackendError(Exception):
    """Base class for backend failures."""


class BackendUnavailable(BackendError):
    """The backend could not be reached, or kept failing after retries."""


class MalformedResponse(BackendError):
    """The backend answered with something other than the agreed JSON shape."""


class PartitionViolation(BackendError):
    """Synonym groups do not partition the input; ``repaired`` is the fixed grouping."""

    def __init__(self, message: str, repaired: list[list[str]]):
        super().__init__(message)
        self.repaired = repaired


class EmptyText(ValueError):
    """A specific-topic request whose text is empty after normalization."""


# -- requests -----------------------------------------------------------------------


@dataclass(frozen=True)
class GeneralTopicRequest:
    item_title: str
    type_path: tuple[str, ...]
    description: str | None = None
    current_tree: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "type_path", tuple(self.type_path))
        object.__setattr__(self, "current_tree", tuple(self.current_tree))
        if not self.type_path:
            raise ValueError("type_path must be non-empty")

    def to_dict(self) -> dict[str, Any]:
        return {
            "item_title": self.item_title,
            "type_path": list(self.type_path),
            "description": self.description,
            "current_tree": list(self.current_tree),
        }


@dataclass(frozen=True)
class SpecificTopicRequest:
    text: str
    source_kind: Literal["description", "review"]
    max_words: int = 10

    def __post_init__(self) -> None:
        if self.source_kind not in ("description", "review"):
            raise ValueError(f"bad source_kind {self.source_kind!r}")
        if not clean_label(self.text):
            raise EmptyText("text is empty after normalization")
        if self.max_words < 1:
            raise ValueError("max_words must be >= 1")

    def to_dict(self) -> dict[str, Any]:
        return {"text": self.text, "source_kind": self.source_kind, "max_words": self.max_words}


@dataclass(frozen=True)
class SynonymGroupRequest:
    words: tuple[tuple[str, int], ...]

    def __post_init__(self) -> None:
        words = tuple((str(w), int(f)) for w, f in self.words)
        object.__setattr__(self, "words", words)
        if not words:
            raise ValueError("at least one word is required")
        labels = [w for w, _ in words]
        if len(set(labels)) != len(labels):
            raise ValueError("word labels must be distinct")
        if any(f < 1 for _, f in words):
            raise ValueError("frequencies must be positive")

    @property
    def labels(self) -> list[str]:
        return [w for w, _ in self.words]

    def to_dict(self) -> dict[str, Any]:
        return {"words": [[w, f] for w, f in self.words]}


# -- response contract ----------------------------------------------------------------


def check_shape(kind: str, raw: Any) -> Any:
    """Raise :class:`MalformedResponse` unless ``raw`` has the JSON shape for ``kind``."""
    if kind == "general":
        ok = isinstance(raw, str) and bool(clean_label(raw))
    elif kind == "specific":
        ok = isinstance(raw, list) and all(isinstance(w, str) for w in raw)
    elif kind == "synonyms":
        ok = isinstance(raw, list) and all(
            isinstance(g, list) and all(isinstance(w, str) for w in g) for g in raw
        )
    else:
        raise ValueError(f"unknown request kind {kind!r}")
    if not ok:
        raise MalformedResponse(f"{kind}: unexpected response {raw!r:.200}")
    return raw


def repair_partition(
    groups: Iterable[Iterable[str]], labels: Sequence[str]
) -> tuple[list[list[str]], list[str]]:
    """Force ``groups`` into a partition of ``labels``.

    Returned labels are matched to inputs by normalized form.  Unknown labels
    are dropped, repeated labels keep their first occurrence, and labels never
    returned become singleton groups.  Returns the groups and a list of
    problems found (empty when the input was already a partition).
    """
    by_key = {match_key(lab): lab for lab in labels}
    placed: set[str] = set()
    problems = []
    out = []
    for group in groups:
        kept = []
        for w in group:
            lab = by_key.get(match_key(w))
            if lab is None:
                problems.append(f"unknown label {w!r}")
            elif lab in placed:
                problems.append(f"duplicate label {w!r}")
            else:
                placed.add(lab)
                kept.append(lab)
        if kept:
            out.append(kept)
    for lab in labels:
        if lab not in placed:
            problems.append(f"missing label {lab!r}")
            out.append([lab])
    return out, problems


# -- backend interface ------------------------------------------------------------------


class TopicBackend:
    """Base class; subclasses implement :meth:`complete`."""

    model: str = "unknown"

    def complete(self, kind: str, request: dict[str, Any]) -> Any:
        raise NotImplementedError

    def extract_general_topic(self, req: GeneralTopicRequest) -> str:
        raw = check_shape("general", self.complete("general", req.to_dict()))
        return clean_label(raw)

    def extract_specific_topics(self, req: SpecificTopicRequest) -> list[str]:
        raw = check_shape("specific", self.complete("specific", req.to_dict()))
        out: list[str] = []
        for w in raw:
            key = match_key(w)
            if key and key not in out:
                out.append(key)
        return out[: req.max_words]

    def group_synonyms(
        self, req: SynonymGroupRequest, *, max_size: int | None = None, strict: bool = False
    ) -> list[list[str]]:
        """Partition ``req``'s labels into synonym groups.

        A response that is not a partition raises :class:`PartitionViolation`
        when ``strict``; otherwise it is repaired and the repair is logged.
        """
        if max_size is not None and len(req.words) > max_size:
            raise ValueError(f"{len(req.words)} words exceed subset bound {max_size}")
        raw = check_shape("synonyms", self.complete("synonyms", req.to_dict()))
        groups, problems = repair_partition(raw, req.labels)
        if problems:
            msg = f"synonym groups repaired: {'; '.join(problems)}"
            if strict:
                raise PartitionViolation(msg, groups)
            log.warning(msg)
        return groups


# -- deterministic mock -------------------------------------------------------------------

_TOKEN = re.compile(r"[^\W_]+")

# Title words that say where a product is used rather than what it is.
GENERIC_TITLE_WORDS = frozenset(
    """face facial skin body hair lip lips eye eyes hand hands foot feet nail nails
    ultra super extra deep daily new professional pro formula""".split()
)

# British -> American spellings, whole words.
SPELLING = {
    "colour": "color", "colours": "colors", "coloured": "colored", "flavour": "flavor",
    "flavours": "flavors", "odour": "odor", "odours": "odors", "favourite": "favorite",
    "grey": "gray", "centre": "center", "fibre": "fiber", "humour": "humor",
    "aluminium": "aluminum", "ageing": "aging", "travelling": "traveling",
}
# British -> American suffixes, applied when no whole-word entry matches.
SPELLING_SUFFIXES = (
    ("isation", "ization"), ("ising", "izing"), ("ised", "ized"),
    ("iser", "izer"), ("ises", "izes"), ("ise", "ize"), ("yse", "yze"),
)


def _us_spelling(word: str) -> str:
    if word in SPELLING:
        return SPELLING[word]
    for uk, us in SPELLING_SUFFIXES:
        if word.endswith(uk) and len(word) > len(uk) + 2:
            return word[: -len(uk)] + us
    return word


def synonym_key(label: str) -> str:
    """Mock grouping key: US spelling, then drop a final "ing" or "s" per word."""
    words = []
    for w in match_key(label).split(" "):
        w = _us_spelling(w)
        if w.endswith("ing") and len(w) > 5:
            w = w[:-3]
        elif w.endswith("s") and not w.endswith("ss") and len(w) > 3:
            w = w[:-1]
        words.append(w)
    return " ".join(words)


def _load_stopwords() -> frozenset[str]:
    text = resources.files("topickg").joinpath("data/stopwords.txt").read_text("utf-8")
    return frozenset(text.split())


class MockBackend(TopicBackend):
    """Rule-based backend whose answers are pure functions of the request.

    * general: the last two content words of the title, title-cased
      (content = not a stopword, not a generic body-part/marketing word);
      falls back to the leaf type when the title has no content word.
    * specific: the ``k`` most frequent non-stopword tokens (ties by first
      position), or, with a ``lexicon`` mapping phrases to topics, the ``k``
      most frequent lexicon phrases found in the text.
    * synonyms: labels with equal :func:`synonym_key` share a group.
    """

    model = "mock"

    def __init__(
        self,
        *,
        k: int = 5,
        lexicon: dict[str, str] | None = None,
        stopwords: frozenset[str] | None = None,
    ):
        self.k = k
        self.lexicon = {match_key(p): t for p, t in (lexicon or {}).items()}
        self.stopwords = _load_stopwords() if stopwords is None else stopwords
        self.calls: Counter[str] = Counter()
        self._lock = threading.Lock()

    def complete(self, kind: str, request: dict[str, Any]) -> Any:
        with self._lock:
            self.calls[kind] += 1
        if kind == "general":
            return self._general(request)
        if kind == "specific":
            return self._specific(request)
        if kind == "synonyms":
            return self._synonyms(request)
        raise ValueError(f"unknown request kind {kind!r}")

    def _tokens(self, text: str) -> list[str]:
        return [t for t in _TOKEN.findall(text.casefold()) if t not in self.stopwords]

    def _general(self, req: dict[str, Any]) -> str:
        words = [
            t for t in self._tokens(req["item_title"]) if t not in GENERIC_TITLE_WORDS and not t.isdigit()
        ]
        if not words:
            return clean_label(req["type_path"][-1])
        return " ".join(words[-2:]).title()

    def _specific(self, req: dict[str, Any]) -> list[str]:
        k = min(self.k, req.get("max_words", self.k))
        text = req["text"].casefold()
        first: dict[str, int] = {}
        counts: Counter[str] = Counter()
        if self.lexicon:
            for phrase, topic in self.lexicon.items():
                for m in re.finditer(rf"(?<!\w){re.escape(phrase)}(?!\w)", text):
                    counts[topic] += 1
                    first[topic] = min(first.get(topic, m.start()), m.start())
        else:
            for pos, tok in enumerate(self._tokens(text)):
                if len(tok) < 3:
                    continue
                counts[tok] += 1
                first.setdefault(tok, pos)
        ranked = sorted(counts, key=lambda w: (-counts[w], first[w], w))
        return ranked[:k]

    def _synonyms(self, req: dict[str, Any]) -> list[list[str]]:
        groups: dict[str, list[str]] = {}
        for label, _ in req["words"]:
            groups.setdefault(synonym_key(label), []).append(label)
        return sorted((sorted(g) for g in groups.values()), key=lambda g: g[0])


# -- HTTP chat-completions client ---------------------------------------------------------


@dataclass
class BackendConfig:
    endpoint: str = "https://api.openai.com/v1/chat/completions"
    model: str = "gpt-4o-mini"
    api_key_env: str = "TOPIC_BACKEND_API_KEY"
    timeout: float = 60.0
    max_retries: int = 3
    parallelism: int = 8
    cache_dir: str | None = None
    prompt_dir: str | None = None

    def __post_init__(self) -> None:
        if self.timeout <= 0:
            raise ValueError("timeout must be > 0")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.parallelism < 1:
            raise ValueError("parallelism must be >= 1")


SYSTEM_PROMPT = (
    "You are a data-extraction component. Answer with exactly one JSON value "
    "as instructed. Never add explanations, markdown or code fences."
)


class PromptTemplates:
    """``string.Template`` prompt files, from ``directory`` or the bundled defaults."""

    NAMES = ("general", "specific", "synonyms", "repair")

    def __init__(self, directory: str | Path | None = None):
        self.templates = {}
        for name in self.NAMES:
            if directory is not None and (Path(directory) / f"{name}.txt").exists():
                text = (Path(directory) / f"{name}.txt").read_text("utf-8")
            else:
                text = resources.files("topickg").joinpath(f"data/prompts/{name}.txt").read_text("utf-8")
            self.templates[name] = Template(text)

    def render(self, kind: str, request: dict[str, Any]) -> str:
        if kind == "general":
            tree = request["current_tree"]
            values = {
                "title": request["item_title"],
                "type_path": " > ".join(request["type_path"]),
                "description": request.get("description") or "(none)",
                "current_tree": "\n".join(f"- {s}" for s in tree) if tree else "(empty)",
            }
        elif kind == "specific":
            values = {
                "text": request["text"],
                "source_kind": request["source_kind"],
                "max_words": request["max_words"],
            }
        elif kind == "synonyms":
            values = {"words": "\n".join(f"{w} ({f})" for w, f in request["words"])}
        elif kind == "repair":
            values = request
        else:
            raise ValueError(f"unknown request kind {kind!r}")
        return self.templates[kind].substitute(values)


class HttpBackend(TopicBackend):
    """Client for an OpenAI-compatible ``/chat/completions`` endpoint.

    Transport errors, HTTP 429 and 5xx are retried with exponential backoff
    (1 s, 2 s, 4 s, ...) up to ``max_retries`` times.  A reply that is not
    the expected JSON shape is retried once with a repair instruction.
    """

    def __init__(
        self,
        config: BackendConfig | None = None,
        *,
        client: httpx.Client | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.config = config or BackendConfig()
        self.model = self.config.model
        self.prompts = PromptTemplates(self.config.prompt_dir)
        self._client = client or httpx.Client(timeout=self.config.timeout)
        self._sleep = sleep

    def _headers(self) -> dict[str, str]:
        key = os.environ.get(self.config.api_key_env)
        return {"Authorization": f"Bearer {key}"} if key else {}

    def _post(self, messages: list[dict[str, str]]) -> str:
        payload = {"model": self.config.model, "messages": messages, "temperature": 0}
        last: Exception | None = None
        for attempt in range(self.config.max_retries + 1):
            if attempt:
                self._sleep(2.0 ** (attempt - 1))
            try:
                resp = self._client.post(self.config.endpoint, json=payload, headers=self._headers())
            except httpx.HTTPError as exc:
                last = exc
                continue
            if resp.status_code == 429 or resp.status_code >= 500:
                last = BackendUnavailable(f"HTTP {resp.status_code}")
                continue
            if resp.status_code >= 400:
                raise BackendUnavailable(f"HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                return resp.json()["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise MalformedResponse(f"not a chat-completions reply: {resp.text[:200]}") from exc
        raise BackendUnavailable(f"gave up after {self.config.max_retries} retries: {last}")

    def complete(self, kind: str, request: dict[str, Any]) -> Any:
        messages = [
            {"role": "system", "content": SYSTEM_PROMPT},
            {"role": "user", "content": self.prompts.render(kind, request)},
        ]
        for repair in (False, True):
            content = self._post(messages)
            try:
                return check_shape(kind, json.loads(content))
            except (json.JSONDecodeError, MalformedResponse) as exc:
                if repair:
                    raise MalformedResponse(f"{kind}: {exc}") from exc
                messages += [
                    {"role": "assistant", "content": content},
                    {"role": "user", "content": self.prompts.render("repair", {"problem": str(exc)})},
                ]
        raise AssertionError("unreachable")


# -- cache -------------------------------------------------------------------------------


def cache_key(kind: str, request: dict[str, Any], model: str) -> str:
    blob = json.dumps(
        {"kind": kind, "request": request, "model": model},
        sort_keys=True,
        ensure_ascii=False,
        separators=(",", ":"),
    )
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


class CachedBackend(TopicBackend):
    """Wraps a backend with a one-file-per-request response cache."""

    def __init__(self, inner: TopicBackend, cache_dir: str | Path):
        self.inner = inner
        self.model = inner.model
        self.cache_dir = Path(cache_dir)
        self.cache_dir.mkdir(parents=True, exist_ok=True)
        self.hits = 0
        self.misses = 0

    def cached_call(self, kind: str, request: dict[str, Any]) -> Any:
        path = self.cache_dir / cache_key(kind, request, self.model)
        try:
            raw = check_shape(kind, json.loads(path.read_text("utf-8")))
            self.hits += 1
            return raw
        except (OSError, ValueError, MalformedResponse):
            pass
        self.misses += 1
        raw = check_shape(kind, self.inner.complete(kind, request))
        fd, tmp = tempfile.mkstemp(dir=self.cache_dir, prefix=".tmp-")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as f:
                json.dump(raw, f, ensure_ascii=False)
            os.replace(tmp, path)
        except BaseException:
            Path(tmp).unlink(missing_ok=True)
            raise
        return raw

    complete = cached_call


def make_backend(
    kind: Literal["mock", "http"] = "mock",
    config: BackendConfig | None = None,
    **mock_options: Any,
) -> TopicBackend:
    config = config or BackendConfig()
    backend: TopicBackend
    if kind == "mock":
        backend = MockBackend(**mock_options)
    elif kind == "http":
        backend = HttpBackend(config)
    else:
        raise ValueError(f"unknown backend {kind!r}")
    if config.cache_dir:
        backend = CachedBackend(backend, config.cache_dir)
    return backend


# -- bounded parallel map ------------------------------------------------------------------

T = TypeVar("T")
R = TypeVar("R")


def run_bounded(
    fn: Callable[[T], R],
    items: Sequence[T],
    parallelism: int = 8,
    on_done: Callable[[T, R], None] | None = None,
) -> list[R]:
    """Apply ``fn`` to ``items`` with at most ``parallelism`` calls in flight.

    Results come back in input order.  ``on_done`` runs in the calling thread
    as each call finishes (used for checkpointing).  If any call fails, the
    rest still run to completion and the first failure is then re-raised.
    """
    results: dict[int, R] = {}
    error: BaseException | None = None
    if parallelism <= 1 or len(items) <= 1:
        for i, it in enumerate(items):
            try:
                results[i] = fn(it)
            except Exception as exc:
                error = error or exc
                continue
            if on_done:
                on_done(it, results[i])
    else:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            futures = {pool.submit(fn, it): i for i, it in enumerate(items)}
            for fut in as_completed(futures):
                i = futures[fut]
                try:
                    results[i] = fut.result()
                except Exception as exc:
                    error = error or exc
                    continue
                if on_done:
                    on_done(items[i], results[i])
    if error is not None:
        raise error
    return [results[i] for i in range(len(items))]
