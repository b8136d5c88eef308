"""Preference-pair construction for process alignment.

Rejected trajectories are derived from accepted ones along three
dimensions:

  ot  overthinking: extra redundant steps are sampled after the last
      accepted rewrite and kept only if quality does not improve
      (optionally several consecutive redundant steps, quality
      non-increasing across them);
  ut  underthinking: the trajectory is truncated at a random position
      strictly before its end;
  id  insufficient decomposition: two adjacent steps are merged into one
      whose clarification is the concatenation of both and whose rewrite
      is the later step's.

Truncation and merging need at least two steps, so shorter trajectories
yield no ut/id pairs; a transform that cannot be built returns None.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from typing import Sequence

from .corpus import CQRSample
from .crdg import CrdgConfig, Trajectory, TrajectoryStep, serialize_trajectory
from .dense_index import DenseIndex, EmbeddingProvider
from .errors import DataError, EmptyResponse, ProviderError
from .evaluation import f_score
from .genclient import generate_clarification, generate_rewrite, render_conversation
from .sparse_index import SparseIndex

DIMENSIONS = ("ot", "ut", "id")


@dataclass
class PreferencePair:
    sample_id: str
    context: str
    chosen: str
    rejected: str
    dimension: str
    meta: dict
    f_chosen_last: float
    f_rejected_last: float

    def as_dict(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "context": self.context,
            "chosen": self.chosen,
            "rejected": self.rejected,
            "dimension": self.dimension,
            "meta": self.meta,
            "f_chosen_last": self.f_chosen_last,
            "f_rejected_last": self.f_rejected_last,
        }


def make_overthinking(
    trajectory: Trajectory,
    sample: CQRSample,
    client,
    sparse: SparseIndex | None,
    dense: DenseIndex | None,
    provider: EmbeddingProvider | None,
    config: CrdgConfig,
    multi: bool = False,
    rng: random.Random | None = None,
) -> Trajectory | None:
    """Extend a trajectory with redundant steps; None if not constructible.

    Each appended step is resampled up to the configured budget until its
    quality does not exceed the previous step's. With ``multi`` the number
    of redundant steps is drawn uniformly from {1, 2, 3, 4}.
    """
    if not trajectory.steps:
        return None
    rng = rng or random.Random()
    k = rng.choice([1, 2, 3, 4]) if multi else 1
    current = trajectory.steps[-1].rewrite
    bound = trajectory.steps[-1].f_score.f
    appended: list[TrajectoryStep] = []
    for _ in range(k):
        step = None
        for attempt in range(config.resample_budget + 1):
            try:
                clarification = generate_clarification(client, current, attempt)
                rewrite = generate_rewrite(client, sample.history, current, clarification, attempt)
            except EmptyResponse:
                continue
            quality = f_score(rewrite, sample, sparse, dense, provider, config.f_mode)
            if quality.f <= bound:
                step = TrajectoryStep(clarification, rewrite, quality, attempt + 1)
                break
        if step is None:
            return None
        appended.append(step)
        current = step.rewrite
        bound = step.f_score.f
    return Trajectory(
        sample_id=trajectory.sample_id,
        original_query=trajectory.original_query,
        f0=trajectory.f0,
        steps=trajectory.steps + appended,
        stop_reason=trajectory.stop_reason,
    )


def make_underthinking(trajectory: Trajectory, rng: random.Random) -> tuple[Trajectory, int] | None:
    """Truncate at a random position in [1, n-1]; None when n < 2."""
    n = len(trajectory.steps)
    if n < 2:
        return None
    e = rng.randint(1, n - 1)
    truncated = Trajectory(
        sample_id=trajectory.sample_id,
        original_query=trajectory.original_query,
        f0=trajectory.f0,
        steps=trajectory.steps[:e],
        stop_reason=trajectory.stop_reason,
    )
    return truncated, e


def make_insufficient_decomposition(
    trajectory: Trajectory, rng: random.Random
) -> tuple[Trajectory, int] | None:
    """Merge steps j and j+1 (j drawn from [1, n-1]); None when n < 2.

    The merged step carries both clarifications joined by a single space
    and the later step's rewrite and quality.
    """
    n = len(trajectory.steps)
    if n < 2:
        return None
    j = rng.randint(1, n - 1)
    left = trajectory.steps[j - 1]
    right = trajectory.steps[j]
    merged = TrajectoryStep(
        clarification=f"{left.clarification} {right.clarification}",
        rewrite=right.rewrite,
        f_score=right.f_score,
        attempt_count=right.attempt_count,
    )
    steps = trajectory.steps[: j - 1] + [merged] + trajectory.steps[j + 1 :]
    out = Trajectory(
        sample_id=trajectory.sample_id,
        original_query=trajectory.original_query,
        f0=trajectory.f0,
        steps=steps,
        stop_reason=trajectory.stop_reason,
    )
    return out, j


def _pair(
    trajectory: Trajectory,
    context: str,
    rejected: Trajectory,
    dimension: str,
    meta: dict,
) -> PreferencePair:
    return PreferencePair(
        sample_id=trajectory.sample_id,
        context=context,
        chosen=serialize_trajectory(trajectory),
        rejected=serialize_trajectory(rejected),
        dimension=dimension,
        meta=meta,
        f_chosen_last=trajectory.steps[-1].f_score.f,
        f_rejected_last=rejected.steps[-1].f_score.f,
    )


@dataclass
class PrefStats:
    ot: int = 0
    ut: int = 0
    id: int = 0
    not_constructible: int = 0
    errors: int = 0

    @property
    def total(self) -> int:
        return self.ot + self.ut + self.id


def build_pref_dataset(
    trajectories: Sequence[Trajectory],
    samples: Sequence[CQRSample],
    client,
    sparse: SparseIndex | None,
    dense: DenseIndex | None,
    provider: EmbeddingProvider | None,
    config: CrdgConfig,
    out_path: str,
    seed: int = 0,
    multi_ot: bool = False,
) -> PrefStats:
    """Emit preference pairs as JSONL, one ot per trajectory with steps
    (when constructible) and one ut and id per trajectory with >= 2 steps.

    Per-record failures become JSONL records with an ``error`` field and
    the run continues. Deterministic for a fixed seed and client.
    """
    by_id = {s.sample_id: s for s in samples}
    rng = random.Random(seed)
    stats = PrefStats()
    with open(out_path, "w", encoding="utf-8") as fh:

        def emit(obj: dict) -> None:
            fh.write(json.dumps(obj, ensure_ascii=False, separators=(",", ":")) + "\n")

        for trajectory in trajectories:
            sample = by_id.get(trajectory.sample_id)
            if sample is None:
                emit({"sample_id": trajectory.sample_id, "error": "sample not found in dataset"})
                stats.errors += 1
                continue
            context = render_conversation(sample.history, sample.query)
            if trajectory.steps:
                try:
                    ot = make_overthinking(
                        trajectory, sample, client, sparse, dense, provider, config,
                        multi=multi_ot, rng=rng,
                    )
                except (DataError, ProviderError) as e:
                    emit({"sample_id": trajectory.sample_id, "dimension": "ot", "error": str(e)})
                    stats.errors += 1
                    ot = None
                if ot is not None:
                    extra = len(ot.steps) - len(trajectory.steps)
                    emit(_pair(trajectory, context, ot, "ot", {"k": extra}).as_dict())
                    stats.ot += 1
                else:
                    stats.not_constructible += 1
            ut = make_underthinking(trajectory, rng)
            if ut is not None:
                rejected, e = ut
                emit(_pair(trajectory, context, rejected, "ut", {"e": e}).as_dict())
                stats.ut += 1
            ins = make_insufficient_decomposition(trajectory, rng)
            if ins is not None:
                rejected, j = ins
                emit(_pair(trajectory, context, rejected, "id", {"j": j}).as_dict())
                stats.id += 1
    return stats
