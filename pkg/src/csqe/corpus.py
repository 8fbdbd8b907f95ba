"""Corpus, query and token handling.

File formats:
    corpus   JSONL, one object per line with string fields "id" and
             "contents" and an optional "title" (prepended with one space)
    queries  TSV, ``qid<TAB>query text``

Tokenization is lowercase, split on runs of non-alphanumeric characters,
stopword removal (bundled English list), then Porter stemming.
"""

import json
import re
from dataclasses import dataclass
from importlib import resources
from typing import IO, Iterable, Union

from .errors import DataFormatError
from .stemmer import stem

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


@dataclass(frozen=True)
class Document:
    """A corpus unit: stable external id plus raw text."""

    id: str
    text: str


@dataclass(frozen=True)
class Query:
    id: str
    text: str


def _load_stopwords() -> frozenset:
    data = resources.files("csqe").joinpath("data/stopwords.txt").read_text("utf-8")
    return frozenset(line.strip() for line in data.splitlines() if line.strip())


STOPWORDS = _load_stopwords()


def tokenize(text: str) -> list[str]:
    """Normalize raw text into index terms.

    Lowercases, splits on any maximal run of non-alphanumeric characters,
    drops stopwords, and Porter-stems each surviving token. Empty input
    yields an empty list.
    """
    return [stem(tok) for tok in _TOKEN_RE.findall(text.lower()) if tok not in STOPWORDS]


def truncate_whitespace_tokens(text: str, max_tokens: int) -> str:
    """Keep at most ``max_tokens`` whitespace-separated pieces.

    Pieces are rejoined with single spaces, so runs of whitespace are
    normalized even when the text is under budget.
    """
    if max_tokens < 1:
        raise ValueError("max_tokens must be >= 1")
    return " ".join(text.split()[:max_tokens])


def _iter_lines(stream: Union[IO, Iterable]) -> Iterable[str]:
    for raw in stream:
        yield raw.decode("utf-8") if isinstance(raw, bytes) else raw


def parse_jsonl_corpus(stream: Union[IO, Iterable]) -> list[Document]:
    """Parse a JSONL corpus stream into documents, preserving input order.

    Raises:
        DataFormatError: on malformed JSON, a missing/invalid field, or a
            duplicate document id (the message carries the line number).
    """
    docs: list[Document] = []
    seen: set[str] = set()
    for lineno, line in enumerate(_iter_lines(stream), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"corpus line {lineno}: invalid JSON ({exc.msg})") from exc
        if not isinstance(obj, dict):
            raise DataFormatError(f"corpus line {lineno}: expected a JSON object")
        doc_id = obj.get("id")
        contents = obj.get("contents")
        if not isinstance(doc_id, str) or not doc_id:
            raise DataFormatError(f"corpus line {lineno}: missing or empty string field 'id'")
        if not isinstance(contents, str):
            raise DataFormatError(f"corpus line {lineno}: missing string field 'contents'")
        if doc_id in seen:
            raise DataFormatError(f"corpus line {lineno}: duplicate document id '{doc_id}'")
        seen.add(doc_id)
        title = obj.get("title")
        if title is not None and not isinstance(title, str):
            raise DataFormatError(f"corpus line {lineno}: field 'title' must be a string")
        text = f"{title} {contents}" if title else contents
        docs.append(Document(id=doc_id, text=text))
    return docs


def write_jsonl_corpus(docs: Iterable[Document]) -> str:
    """Serialize documents back to the corpus JSONL format."""
    lines = [
        json.dumps({"id": d.id, "contents": d.text}, ensure_ascii=False)
        for d in docs
    ]
    return "\n".join(lines) + ("\n" if lines else "")


def parse_queries_tsv(stream: Union[IO, Iterable]) -> list[Query]:
    """Parse ``qid<TAB>text`` lines into queries.

    Raises:
        DataFormatError: on a line without a tab, an empty id or text, or a
            duplicate query id.
    """
    queries: list[Query] = []
    seen: set[str] = set()
    for lineno, line in enumerate(_iter_lines(stream), start=1):
        line = line.rstrip("\r\n")
        if not line.strip():
            continue
        if "\t" not in line:
            raise DataFormatError(f"queries line {lineno}: expected 'qid<TAB>text'")
        qid, text = line.split("\t", 1)
        qid = qid.strip()
        text = text.strip()
        if not qid:
            raise DataFormatError(f"queries line {lineno}: empty query id")
        if not text:
            raise DataFormatError(f"queries line {lineno}: empty query text")
        if qid in seen:
            raise DataFormatError(f"queries line {lineno}: duplicate query id '{qid}'")
        seen.add(qid)
        queries.append(Query(id=qid, text=text))
    return queries
