"""Passage collections, conversational datasets, and relevance judgments.

On-disk formats:
  collection:  TSV (``id<TAB>text``) or JSONL (``{"id": ..., "text": ...}``)
  CQR dataset: JSONL with ``sample_id``, ``history`` (list of
               ``{"query", "answer"}``), ``query``, ``gold_passage_ids``
  qrels:       4-column TREC text (``qid 0 docid grade``)

All text is treated as opaque UTF-8; tokenization and any normalization
happen in the index modules. Loaded values are not mutated after
construction and are safe to share across threads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

from .errors import DuplicateId, MalformedRecord, MissingField


@dataclass(frozen=True)
class Passage:
    id: str
    text: str


@dataclass(frozen=True)
class Turn:
    query: str
    answer: str


@dataclass
class CQRSample:
    """One conversational test/train instance.

    ``history`` is the prior dialogue in turn order and may be empty (first
    turn). ``gold_passage_ids`` is the set of passages relevant to the
    current query; it must be non-empty for samples fed to trajectory
    construction, but load-time samples may carry an empty set.
    """

    sample_id: str
    history: list[Turn]
    query: str
    gold_passage_ids: set[str]


class Qrels:
    """Relevance grades keyed by (sample_id, passage_id).

    Later duplicate lines overwrite earlier ones; ``overwrites`` counts how
    often that happened during loading.
    """

    def __init__(self) -> None:
        self.grades: dict[tuple[str, str], int] = {}
        self.overwrites = 0

    def set(self, sample_id: str, passage_id: str, grade: int) -> None:
        if grade < 0:
            raise ValueError(f"relevance grade must be >= 0, got {grade}")
        key = (sample_id, passage_id)
        if key in self.grades:
            self.overwrites += 1
        self.grades[key] = grade

    def grade(self, sample_id: str, passage_id: str) -> int:
        return self.grades.get((sample_id, passage_id), 0)

    def for_sample(self, sample_id: str) -> dict[str, int]:
        return {
            pid: g for (sid, pid), g in self.grades.items() if sid == sample_id
        }

    def relevant_ids(self, sample_id: str) -> set[str]:
        return {
            pid
            for (sid, pid), g in self.grades.items()
            if sid == sample_id and g >= 1
        }

    def sample_ids(self) -> list[str]:
        seen: dict[str, None] = {}
        for sid, _ in self.grades:
            seen.setdefault(sid)
        return list(seen)

    def __len__(self) -> int:
        return len(self.grades)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Qrels):
            return NotImplemented
        return self.grades == other.grades


def _infer_format(path: str) -> str:
    if str(path).endswith(".jsonl"):
        return "jsonl"
    return "tsv"


def load_collection(path: str, format: str | None = None) -> Iterator[Passage]:
    """Stream passages from a TSV or JSONL collection file.

    Yields passages in file order. Memory use is bounded by one record plus
    the set of ids seen so far (kept for duplicate detection).

    Raises:
        MalformedRecord: unparseable line, or empty id.
        DuplicateId: the same id appears twice.
    """
    fmt = format or _infer_format(path)
    if fmt not in ("tsv", "jsonl"):
        raise ValueError(f"unknown collection format {fmt!r}")
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            if fmt == "tsv":
                if "\t" not in line:
                    raise MalformedRecord(path, line_no, "expected id<TAB>text")
                pid, text = line.split("\t", 1)
            else:
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as e:
                    raise MalformedRecord(path, line_no, f"invalid JSON: {e}") from e
                if not isinstance(obj, dict) or "id" not in obj or "text" not in obj:
                    raise MalformedRecord(path, line_no, "record needs id and text fields")
                pid, text = str(obj["id"]), str(obj["text"])
            if not pid:
                raise MalformedRecord(path, line_no, "empty passage id")
            if pid in seen:
                raise DuplicateId(pid)
            seen.add(pid)
            yield Passage(pid, text)


def write_collection(passages: Iterable[Passage], path: str, format: str | None = None) -> None:
    fmt = format or _infer_format(path)
    with open(path, "w", encoding="utf-8") as fh:
        for p in passages:
            if fmt == "tsv":
                fh.write(f"{p.id}\t{p.text}\n")
            else:
                fh.write(json.dumps({"id": p.id, "text": p.text}, ensure_ascii=False) + "\n")


def _require(obj: dict, name: str, path: str, line_no: int):
    if name not in obj:
        raise MissingField(name, path, line_no)
    return obj[name]


def load_cqr_dataset(path: str) -> list[CQRSample]:
    """Load a conversational query-rewriting dataset from JSONL.

    Samples are returned in file order with history order preserved.

    Raises:
        MalformedRecord: unparseable JSON or invalid turn content.
        MissingField: a required field is absent.
    """
    samples: list[CQRSample] = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise MalformedRecord(path, line_no, f"invalid JSON: {e}") from e
            sample_id = str(_require(obj, "sample_id", path, line_no))
            raw_history = _require(obj, "history", path, line_no)
            query = str(_require(obj, "query", path, line_no))
            gold = _require(obj, "gold_passage_ids", path, line_no)
            history: list[Turn] = []
            for i, t in enumerate(raw_history):
                if "query" not in t:
                    raise MissingField(f"history[{i}].query", path, line_no)
                if "answer" not in t:
                    raise MissingField(f"history[{i}].answer", path, line_no)
                if not t["query"]:
                    raise MalformedRecord(path, line_no, f"history[{i}].query is empty")
                history.append(Turn(str(t["query"]), str(t["answer"])))
            if not query:
                raise MalformedRecord(path, line_no, "query is empty")
            samples.append(CQRSample(sample_id, history, query, {str(g) for g in gold}))
    return samples


def write_cqr_dataset(samples: Sequence[CQRSample], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in samples:
            rec = {
                "sample_id": s.sample_id,
                "history": [{"query": t.query, "answer": t.answer} for t in s.history],
                "query": s.query,
                "gold_passage_ids": sorted(s.gold_passage_ids),
            }
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


def load_qrels(path: str) -> Qrels:
    """Load TREC-format qrels (``qid 0 docid grade``, whitespace-separated).

    Duplicate (qid, docid) lines overwrite earlier grades and bump
    ``Qrels.overwrites`` instead of failing, matching common IR tooling.
    """
    qrels = Qrels()
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 4:
                raise MalformedRecord(path, line_no, "expected 4 columns: qid 0 docid grade")
            sid, _, pid, grade_s = parts
            try:
                grade = int(grade_s)
            except ValueError as e:
                raise MalformedRecord(path, line_no, f"grade {grade_s!r} is not an integer") from e
            if grade < 0:
                raise MalformedRecord(path, line_no, f"grade must be >= 0, got {grade}")
            qrels.set(sid, pid, grade)
    return qrels


def write_qrels(qrels: Qrels, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for (sid, pid), grade in sorted(qrels.grades.items()):
            fh.write(f"{sid} 0 {pid} {grade}\n")
