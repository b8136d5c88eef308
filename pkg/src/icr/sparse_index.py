"""Embedded BM25 inverted index with exact top-K search.

Scoring follows the classic formulation with smoothed idf:

    score(q, d) = sum over query tokens t of
                  idf(t) * tf * (k1 + 1) / (tf + k1 * (1 - b + b * len(d) / avglen))
    idf(t)      = ln(1 + (N - df + 0.5) / (df + 0.5))

Repeated query tokens contribute once per occurrence. Only passages
matching at least one query term are returned. The tokenizer is
deliberately simple (lowercase, split on non-alphanumeric runs, no
stemming or stopwords) so independent scorers can reproduce results
exactly. Indexes are immutable after build; concurrent searches over a
shared index are safe.
"""

from __future__ import annotations

import gzip
import json
import math
import re
from collections import Counter
from dataclasses import dataclass
from typing import Iterable

from .corpus import Passage
from .errors import DataError, DuplicateId, EmptyCollection
from .ranking import RankedList, ranked_from_scores

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)

INDEX_FORMAT = "icr-sparse-index"
INDEX_VERSION = 1


def tokenize(text: str) -> list[str]:
    """Lowercase and split on non-alphanumeric runs; drops empty tokens."""
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class Bm25Params:
    k1: float = 0.9
    b: float = 0.4

    def __post_init__(self) -> None:
        if self.k1 < 0:
            raise ValueError(f"k1 must be >= 0, got {self.k1}")
        if not 0.0 <= self.b <= 1.0:
            raise ValueError(f"b must be in [0, 1], got {self.b}")


#: Per-dataset parameter profiles.
BM25_PROFILES = {
    "topiocqa": Bm25Params(k1=0.9, b=0.4),
    "qrecc": Bm25Params(k1=0.82, b=0.68),
}


@dataclass
class SparseIndex:
    params: Bm25Params
    postings: dict[str, list[tuple[int, int]]]  # term -> [(ordinal, tf)], ordinal-sorted
    doc_lengths: list[int]
    avg_doc_length: float
    ids: list[str]  # ordinal -> passage id
    ordinals: dict[str, int]  # passage id -> ordinal

    @property
    def doc_count(self) -> int:
        return len(self.ids)

    def __contains__(self, passage_id: str) -> bool:
        return passage_id in self.ordinals


def build_sparse_index(collection: Iterable[Passage], params: Bm25Params | None = None) -> SparseIndex:
    """Build an inverted index over a passage collection.

    Deterministic for a given input order. Raises EmptyCollection when the
    collection yields no passages and DuplicateId on repeated ids.
    """
    params = params or Bm25Params()
    postings: dict[str, list[tuple[int, int]]] = {}
    doc_lengths: list[int] = []
    ids: list[str] = []
    ordinals: dict[str, int] = {}
    for passage in collection:
        if passage.id in ordinals:
            raise DuplicateId(passage.id)
        ordinal = len(ids)
        ordinals[passage.id] = ordinal
        ids.append(passage.id)
        tokens = tokenize(passage.text)
        doc_lengths.append(len(tokens))
        for term, tf in Counter(tokens).items():
            postings.setdefault(term, []).append((ordinal, tf))
    if not ids:
        raise EmptyCollection("cannot build an index over an empty collection")
    avg = sum(doc_lengths) / len(doc_lengths)
    return SparseIndex(params, postings, doc_lengths, avg, ids, ordinals)


def search_sparse(index: SparseIndex, query: str, k: int, tag: str | None = None) -> RankedList:
    """BM25 top-k search; an unknown-terms query yields an empty list."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    k1, b = index.params.k1, index.params.b
    n = index.doc_count
    scores: dict[int, float] = {}
    for term in tokenize(query):
        plist = index.postings.get(term)
        if not plist:
            continue
        df = len(plist)
        idf = math.log(1.0 + (n - df + 0.5) / (df + 0.5))
        for ordinal, tf in plist:
            norm = tf + k1 * (1.0 - b + b * index.doc_lengths[ordinal] / index.avg_doc_length)
            scores[ordinal] = scores.get(ordinal, 0.0) + idf * tf * (k1 + 1.0) / norm
    by_id = {index.ids[ordinal]: s for ordinal, s in scores.items()}
    return ranked_from_scores(tag if tag is not None else query, by_id, k)


def save_sparse_index(index: SparseIndex, path: str) -> None:
    """Persist the index as a gzipped JSON artifact with a version header.

    Byte-identical for identical inputs (fixed gzip mtime, sorted keys).
    """
    payload = {
        "format": INDEX_FORMAT,
        "version": INDEX_VERSION,
        "params": {"k1": index.params.k1, "b": index.params.b},
        "ids": index.ids,
        "doc_lengths": index.doc_lengths,
        "postings": {t: [[o, tf] for o, tf in pl] for t, pl in index.postings.items()},
    }
    data = json.dumps(payload, ensure_ascii=False, sort_keys=True, separators=(",", ":"))
    with open(path, "wb") as fh:
        with gzip.GzipFile(filename="", fileobj=fh, mode="wb", mtime=0) as gz:
            gz.write(data.encode("utf-8"))


def load_sparse_index(path: str) -> SparseIndex:
    with gzip.open(path, "rt", encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format") != INDEX_FORMAT:
        raise DataError(f"{path}: not a sparse index artifact")
    if payload.get("version") != INDEX_VERSION:
        raise DataError(f"{path}: unsupported index version {payload.get('version')}")
    ids = [str(i) for i in payload["ids"]]
    doc_lengths = [int(x) for x in payload["doc_lengths"]]
    postings = {
        t: [(int(o), int(tf)) for o, tf in pl] for t, pl in payload["postings"].items()
    }
    avg = sum(doc_lengths) / len(doc_lengths) if doc_lengths else 0.0
    return SparseIndex(
        Bm25Params(**payload["params"]),
        postings,
        doc_lengths,
        avg,
        ids,
        {pid: i for i, pid in enumerate(ids)},
    )
