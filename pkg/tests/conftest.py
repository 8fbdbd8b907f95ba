from pathlib import Path

import pytest

from csqe.corpus import Document
from csqe.index import build_index

REPO_ROOT = Path(__file__).resolve().parent.parent
TOY_DIR = REPO_ROOT / "data" / "toy"
DATA_DIR = Path(__file__).resolve().parent / "data"


@pytest.fixture(scope="session")
def toy_paths():
    return {
        "corpus": TOY_DIR / "corpus.jsonl",
        "queries": TOY_DIR / "queries.tsv",
        "qrels": TOY_DIR / "qrels.txt",
        "fixtures": TOY_DIR / "fixtures.json",
    }


# 3-document corpus whose texts tokenize to themselves: shark/warm/cold are
# Porter fixed points and none is a stopword. Session-scoped: the index is
# immutable and hypothesis tests draw many examples against it.
@pytest.fixture(scope="session")
def shark_docs():
    return [
        Document("d1", "shark shark"),
        Document("d2", "shark warm"),
        Document("d3", "cold"),
    ]


@pytest.fixture(scope="session")
def shark_index(shark_docs):
    return build_index(shark_docs)
