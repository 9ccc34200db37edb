from pathlib import Path

import pytest

from topickg import kg as K

DATA = Path(__file__).parent / "data"
CORPUS = DATA / "corpus"


@pytest.fixture
def standard():
    return K.default_metagraph()


@pytest.fixture
def topic_mg(standard):
    return K.topic_aware_metagraph(standard)


@pytest.fixture
def corpus_paths():
    return CORPUS / "metadata.jsonl", CORPUS / "reviews.jsonl"
