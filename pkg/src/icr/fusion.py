"""Reciprocal rank fusion over per-iteration ranked lists.

Two rank-based schemes plus a passthrough:

  rrf        score(d) = sum over lists i of 1 / (rank_i(d) + k)
  prrf       score(d) = sum over lists i of i / (rank_i(d) + k)
  final_only the last list, untouched apart from depth truncation

``i`` is the 1-based iteration index of the list, so prrf weights later
rewrites more heavily; a passage absent from a list contributes 0 from it.
Ranks are 1-based. Output is sorted score-descending with ties broken by
passage id ascending and truncated to the configured depth.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .errors import EmptyInput
from .ranking import RankedList, ranked_from_scores

FUSION_MODES = ("rrf", "prrf", "final_only")


@dataclass
class FusionConfig:
    k: float = 60.0
    mode: str = "prrf"
    depth: int = 100

    def __post_init__(self) -> None:
        if self.k <= 0:
            raise ValueError(f"fusion k must be > 0, got {self.k}")
        if self.depth < 1:
            raise ValueError(f"fusion depth must be >= 1, got {self.depth}")
        if self.mode not in FUSION_MODES:
            raise ValueError(f"unknown fusion mode {self.mode!r}")


def fuse(lists: Sequence[RankedList], config: FusionConfig, tag: str | None = None) -> RankedList:
    """Fuse per-iteration ranked lists, ordered by iteration index.

    Deterministic and idempotent; raises EmptyInput when no lists are given.
    """
    if not lists:
        raise EmptyInput("fuse requires at least one ranked list")
    out_tag = tag if tag is not None else lists[-1].query_tag
    if config.mode == "final_only":
        return RankedList(out_tag, list(lists[-1].entries[: config.depth]))
    scores: dict[str, float] = {}
    for i, ranked in enumerate(lists, 1):
        weight = float(i) if config.mode == "prrf" else 1.0
        for rank, (pid, _) in enumerate(ranked.entries, 1):
            scores[pid] = scores.get(pid, 0.0) + weight / (rank + config.k)
    return ranked_from_scores(out_tag, scores, config.depth)
