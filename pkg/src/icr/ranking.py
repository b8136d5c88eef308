"""Ranked retrieval results and TREC run-file round-tripping.

A RankedList is the unit passed between retrieval, fusion, and evaluation:
entries sorted by score descending with ties broken by passage id
ascending, no duplicate ids, truncated to the requested depth.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .errors import MalformedRecord


@dataclass
class RankedList:
    query_tag: str
    entries: list[tuple[str, float]] = field(default_factory=list)

    def ids(self) -> list[str]:
        return [pid for pid, _ in self.entries]

    def rank_of(self, passage_id: str) -> int | None:
        """1-based rank of a passage, or None if not retrieved."""
        for rank, (pid, _) in enumerate(self.entries, 1):
            if pid == passage_id:
                return rank
        return None

    def __len__(self) -> int:
        return len(self.entries)


def ranked_from_scores(query_tag: str, scores: Mapping[str, float], k: int) -> RankedList:
    """Top-k of a score map under the canonical (score desc, id asc) order."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    ordered = sorted(scores.items(), key=lambda e: (-e[1], e[0]))
    return RankedList(query_tag, ordered[:k])


def write_run(lists: Iterable[RankedList], path: str, tag: str = "ICR") -> int:
    """Write ranked lists as TREC run lines: ``qid Q0 docid rank score tag``.

    Scores are written with full repr precision so a reloaded run reproduces
    the in-memory ordering exactly. Returns the number of empty lists
    encountered (they produce no lines).
    """
    empty = 0
    with open(path, "w", encoding="utf-8") as fh:
        for rl in lists:
            if not rl.entries:
                empty += 1
                continue
            for rank, (pid, score) in enumerate(rl.entries, 1):
                fh.write(f"{rl.query_tag} Q0 {pid} {rank} {score!r} {tag}\n")
    return empty


def read_run(path: str) -> dict[str, RankedList]:
    """Read a TREC run file into per-query RankedLists, keyed by query id.

    Entries follow the file's rank column; queries keep first-seen order.
    """
    per_query: dict[str, list[tuple[int, str, float]]] = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 6:
                raise MalformedRecord(path, line_no, "expected 6 columns: qid Q0 docid rank score tag")
            qid, _, pid, rank_s, score_s, _ = parts
            try:
                rank = int(rank_s)
                score = float(score_s)
            except ValueError as e:
                raise MalformedRecord(path, line_no, f"bad rank/score: {e}") from e
            per_query.setdefault(qid, []).append((rank, pid, score))
    out: dict[str, RankedList] = {}
    for qid, rows in per_query.items():
        rows.sort(key=lambda r: r[0])
        out[qid] = RankedList(qid, [(pid, score) for _, pid, score in rows])
    return out
