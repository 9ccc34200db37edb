import json
import threading

import httpx
import pytest
from hypothesis import given
from hypothesis import strategies as st

from topickg.backend import (
    BackendConfig,
    BackendUnavailable,
    CachedBackend,
    EmptyText,
    GeneralTopicRequest,
    HttpBackend,
    MalformedResponse,
    MockBackend,
    PartitionViolation,
    PromptTemplates,
    SpecificTopicRequest,
    SynonymGroupRequest,
    TopicBackend,
    cache_key,
    make_backend,
    repair_partition,
    run_bounded,
    synonym_key,
)

SERUM = ("Beauty", "Skin Care", "Serum")
LEXICON = {"hydrated": "hydrating", "not greasy": "non-greasy", "subtle scent": "subtle scent"}


# -- mock rules --------------------------------------------------------------------


def test_general_examples():
    b = MockBackend()
    assert b.extract_general_topic(GeneralTopicRequest("Ultra Hydrating Face Serum", SERUM)) == "Hydrating Serum"
    req = GeneralTopicRequest("Collagen Plumping Serum", SERUM, current_tree=("Hydrating Serum",))
    assert b.extract_general_topic(req) == "Plumping Serum"
    assert b.extract_general_topic(req) == b.extract_general_topic(req)
    assert b.extract_general_topic(GeneralTopicRequest("The Face", SERUM)) == "Serum"


def test_specific_lexicon_example():
    b = MockBackend(lexicon=LEXICON)
    req = SpecificTopicRequest("Leaves my skin hydrated, not greasy, subtle scent", "review")
    assert b.extract_specific_topics(req) == ["hydrating", "non-greasy", "subtle scent"]


def test_specific_keyword_rule():
    b = MockBackend(k=3)
    req = SpecificTopicRequest("Vegan, lightweight and vegan again. Lightweight! Ok matte", "description")
    assert b.extract_specific_topics(req) == ["vegan", "lightweight", "matte"]  # "again" is a stopword
    assert b.extract_specific_topics(SpecificTopicRequest("vegan vegan matte", "review", max_words=1)) == ["vegan"]


def test_empty_text():
    with pytest.raises(EmptyText):
        SpecificTopicRequest("   \n", "review")
    with pytest.raises(ValueError):
        SpecificTopicRequest("x", "tweet")


def test_synonym_examples():
    b = MockBackend()
    req = SynonymGroupRequest((("moisturizing", 5), ("moisturising", 2), ("vegan", 3)))
    assert b.group_synonyms(req) == [["moisturising", "moisturizing"], ["vegan"]]
    assert b.group_synonyms(SynonymGroupRequest((("vegan", 1),))) == [["vegan"]]
    distinct = SynonymGroupRequest((("matte", 1), ("glossy", 1), ("vegan", 1)))
    assert sorted(map(len, b.group_synonyms(distinct))) == [1, 1, 1]


def test_synonym_key():
    assert synonym_key("Colour") == synonym_key("color")
    assert synonym_key("shimmering") == synonym_key("shimmer")
    assert synonym_key("sunscreens") == synonym_key("sunscreen")
    assert synonym_key("glass") == "glass"
    assert synonym_key("sing") == "sing"


def test_synonym_request_validation():
    with pytest.raises(ValueError):
        SynonymGroupRequest(())
    with pytest.raises(ValueError):
        SynonymGroupRequest((("a", 1), ("a", 2)))
    with pytest.raises(ValueError):
        SynonymGroupRequest((("a", 0),))
    with pytest.raises(ValueError):
        MockBackend().group_synonyms(SynonymGroupRequest((("a", 1), ("b", 1))), max_size=1)


# -- partition repair ------------------------------------------------------------------


class Scripted(TopicBackend):
    model = "scripted"

    def __init__(self, reply):
        self.reply = reply

    def complete(self, kind, request):
        return self.reply


def test_repair_adversarial():
    labels = ["a", "b", "c", "d"]
    groups, problems = repair_partition([["a", "zzz"], ["A", "b"], []], labels)
    assert groups == [["a"], ["b"], ["c"], ["d"]]
    assert len(problems) == 4
    req = SynonymGroupRequest(tuple((w, 1) for w in labels))
    assert Scripted([["a", "b", "c", "d"]]).group_synonyms(req) == [["a", "b", "c", "d"]]
    with pytest.raises(PartitionViolation) as exc:
        Scripted([["a", "a"]]).group_synonyms(req, strict=True)
    assert exc.value.repaired == [["a"], ["b"], ["c"], ["d"]]
    with pytest.raises(MalformedResponse):
        Scripted({"groups": []}).group_synonyms(req)


@given(
    st.lists(st.text(min_size=1, max_size=4), min_size=1, max_size=12, unique=True),
    st.lists(st.lists(st.text(max_size=4), max_size=5), max_size=6),
)
def test_repair_always_partitions(labels, groups):
    out, problems = repair_partition(groups, labels)
    flat = [w for g in out for w in g]
    assert sorted(flat) == sorted(labels) and all(out)
    if not problems:
        assert len(flat) == len(set(flat))


# -- cache -------------------------------------------------------------------------------


class Counting(MockBackend):
    def __init__(self, model="mock"):
        super().__init__()
        self.model = model


def test_cache_hit_miss(tmp_path):
    inner = Counting()
    cached = CachedBackend(inner, tmp_path)
    req = GeneralTopicRequest("Ultra Hydrating Face Serum", SERUM)
    first = cached.extract_general_topic(req)
    assert cached.extract_general_topic(req) == first
    assert (cached.hits, cached.misses, inner.calls["general"]) == (1, 1, 1)
    for f in tmp_path.iterdir():
        f.unlink()
    cached.extract_general_topic(req)
    assert inner.calls["general"] == 2


def test_cache_corruption_is_miss(tmp_path):
    inner = Counting()
    cached = CachedBackend(inner, tmp_path)
    req = GeneralTopicRequest("Deep Hydrating Serum", SERUM)
    cached.extract_general_topic(req)
    (path,) = tmp_path.iterdir()
    path.write_text("{not json")
    assert cached.extract_general_topic(req) == "Hydrating Serum"
    assert inner.calls["general"] == 2


def test_cache_key_model():
    r = {"item_title": "x"}
    assert cache_key("general", r, "m1") != cache_key("general", r, "m2")
    assert cache_key("general", r, "m1") == cache_key("general", dict(r), "m1")
    assert cache_key("general", r, "m1") != cache_key("specific", r, "m1")


def test_make_backend(tmp_path):
    assert isinstance(make_backend("mock"), MockBackend)
    assert isinstance(make_backend("mock", BackendConfig(cache_dir=str(tmp_path))), CachedBackend)
    with pytest.raises(ValueError):
        make_backend("oracle")
    with pytest.raises(ValueError):
        BackendConfig(parallelism=0)


# -- http client ------------------------------------------------------------------------------


def chat(content):
    return httpx.Response(200, json={"choices": [{"message": {"content": content}}]})


def http_backend(handler, **cfg):
    sleeps = []
    client = httpx.Client(transport=httpx.MockTransport(handler))
    b = HttpBackend(BackendConfig(endpoint="http://test/v1/chat/completions", **cfg), client=client,
                    sleep=sleeps.append)
    return b, sleeps


def test_http_success_and_prompt(monkeypatch):
    monkeypatch.setenv("TOPIC_BACKEND_API_KEY", "sk-test")
    seen = []

    def handler(request):
        seen.append(json.loads(request.content))
        assert request.headers["authorization"] == "Bearer sk-test"
        return chat('"Hydrating Serum"')

    b, sleeps = http_backend(handler)
    req = GeneralTopicRequest("Ultra Hydrating Face Serum", SERUM, current_tree=("Plumping Serum",))
    assert b.extract_general_topic(req) == "Hydrating Serum"
    prompt = seen[0]["messages"][1]["content"]
    assert "Ultra Hydrating Face Serum" in prompt and "Beauty > Skin Care > Serum" in prompt
    assert "- Plumping Serum" in prompt
    assert seen[0]["model"] == "gpt-4o-mini" and seen[0]["temperature"] == 0
    assert sleeps == []


def test_http_retries_with_backoff():
    replies = iter([httpx.Response(503), httpx.Response(429), chat('["vegan"]')])
    b, sleeps = http_backend(lambda r: next(replies))
    assert b.extract_specific_topics(SpecificTopicRequest("vegan", "review")) == ["vegan"]
    assert sleeps == [1.0, 2.0]


def test_http_gives_up():
    calls = []

    def handler(request):
        calls.append(1)
        raise httpx.ConnectError("down")

    b, sleeps = http_backend(handler, max_retries=2)
    with pytest.raises(BackendUnavailable):
        b.complete("general", GeneralTopicRequest("x", SERUM).to_dict())
    assert len(calls) == 3 and sleeps == [1.0, 2.0]


def test_http_client_error_not_retried():
    b, sleeps = http_backend(lambda r: httpx.Response(401, text="bad key"))
    with pytest.raises(BackendUnavailable):
        b.complete("general", GeneralTopicRequest("x", SERUM).to_dict())
    assert sleeps == []


def test_http_repair_retry():
    replies = iter([chat("Sure! Here it is: vegan"), chat('[["vegan"]]')])
    seen = []

    def handler(request):
        seen.append(json.loads(request.content))
        return next(replies)

    b, _ = http_backend(handler)
    assert b.group_synonyms(SynonymGroupRequest((("vegan", 1),))) == [["vegan"]]
    assert len(seen[1]["messages"]) == 4
    replies = iter([chat("no"), chat("still no")])
    with pytest.raises(MalformedResponse):
        b.complete("general", GeneralTopicRequest("x", SERUM).to_dict())


def test_prompt_override(tmp_path):
    (tmp_path / "general.txt").write_text("T=$title")
    p = PromptTemplates(tmp_path)
    assert p.render("general", GeneralTopicRequest("Gel", SERUM).to_dict()) == "T=Gel"
    assert "$" not in p.render("specific", SpecificTopicRequest("a b", "review").to_dict())


# -- bounded parallelism ------------------------------------------------------------------------


def test_run_bounded_order_and_limit():
    active, peak, lock = [0], [0], threading.Lock()

    def fn(x):
        with lock:
            active[0] += 1
            peak[0] = max(peak[0], active[0])
        threading.Event().wait(0.005)
        with lock:
            active[0] -= 1
        return x * x

    done = []
    assert run_bounded(fn, list(range(20)), 3, on_done=lambda x, r: done.append(x)) == [x * x for x in range(20)]
    assert peak[0] <= 3 and sorted(done) == list(range(20))


def test_run_bounded_error_after_rest():
    done = []

    def fn(x):
        if x == 2:
            raise RuntimeError("boom")
        return x

    with pytest.raises(RuntimeError):
        run_bounded(fn, [1, 2, 3, 4], 2, on_done=lambda x, r: done.append(x))
    assert sorted(done) == [1, 3, 4]
