"""Checkpoint tables and Monte Carlo averages built from iteration logs."""

from __future__ import annotations

import math
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from typing import Iterable, Optional, Sequence

from .core import PolicyId

CHECKPOINTS_KM: tuple[float, ...] = (5.0, 10.0, 15.0, 20.0)


@dataclass(frozen=True)
class CheckpointTable:
    """Cumulative tracked-AV lane changes at each odometer checkpoint.

    ``counts[i]`` is the number of counted lane changes made within the first
    ``checkpoints[i]`` km of the vehicle's own travel, summed over all
    tracked AVs.  Means produced by :func:`average_trials` are floats.
    """

    counts: tuple[float, ...]
    checkpoints: tuple[float, ...] = CHECKPOINTS_KM

    def __post_init__(self) -> None:
        if len(self.counts) != len(self.checkpoints):
            raise ValueError("one count per checkpoint is required")
        if any(b < a for a, b in zip(self.counts, self.counts[1:])):
            raise ValueError(f"checkpoint counts must be nondecreasing: {self.counts}")

    @property
    def total(self) -> float:
        return self.counts[-1]

    def rounded(self) -> tuple[int, ...]:
        return tuple(round_half_up(c) for c in self.counts)


def round_half_up(x: float) -> int:
    """Round to the nearest integer with .5 going up (not banker's rounding)."""
    return int(Decimal(repr(x)).quantize(Decimal(1), rounding=ROUND_HALF_UP))


def _odometer_km(event) -> float:
    return event.odometer / 1000.0


def aggregate_checkpoints(log, tracked_ids: Optional[Iterable[int]] = None,
                          checkpoints: Sequence[float] = CHECKPOINTS_KM) -> CheckpointTable:
    """Bin the counted lane changes of ``tracked_ids`` into cumulative checkpoints.

    An event counts toward checkpoint ``c`` iff the changer's odometer at the
    event is ``<= c`` km.  ``log`` is an :class:`~mlcasim.engine.IterationLog`
    (its ``counted_lane_changes`` are used) or any iterable of lane-change
    events.  ``tracked_ids=None`` takes the ids recorded in the log.
    """
    if hasattr(log, "counted_lane_changes"):
        events = log.counted_lane_changes()
        if tracked_ids is None:
            tracked_ids = log.tracked_ids
    else:
        events = list(log)
    ids = None if tracked_ids is None else set(tracked_ids)
    kms = sorted(_odometer_km(e) for e in events if ids is None or e.vehicle in ids)
    counts = []
    i = 0
    for c in checkpoints:
        while i < len(kms) and kms[i] <= c:
            i += 1
        counts.append(i)
    return CheckpointTable(tuple(counts), tuple(checkpoints))


@dataclass(frozen=True)
class TrialSummary:
    policy: Optional[PolicyId]
    n_tracked: int
    seed: int
    table: CheckpointTable
    collisions: int

    def __post_init__(self) -> None:
        if self.collisions < 0:
            raise ValueError("collision count must be >= 0")

    @classmethod
    def from_log(cls, log) -> "TrialSummary":
        return cls(log.policy, log.n_tracked, log.seed, aggregate_checkpoints(log), len(log.collisions))

    def csv_row(self) -> list:
        return [self.seed, *self.table.counts, self.collisions]


@dataclass(frozen=True)
class TrialAverage:
    """Means over a batch of trials plus the integer presentation copy."""

    n_trials: int
    table: CheckpointTable
    collisions: float
    presented: tuple[int, ...]
    presented_collisions: int

    @property
    def collisions_per_100(self) -> float:
        return 100.0 * self.collisions


def average_trials(summaries: Sequence[TrialSummary]) -> TrialAverage:
    """Arithmetic means per checkpoint and for collisions.

    Raises:
        ValueError: if ``summaries`` is empty or mixes checkpoint layouts.
    """
    if not summaries:
        raise ValueError("average_trials needs at least one summary")
    cps = summaries[0].table.checkpoints
    if any(s.table.checkpoints != cps for s in summaries):
        raise ValueError("summaries use different checkpoints")
    n = len(summaries)
    # fsum keeps the mean independent of input order
    means = tuple(math.fsum(s.table.counts[i] for s in summaries) / n for i in range(len(cps)))
    table = CheckpointTable(means, cps)
    col = math.fsum(s.collisions for s in summaries) / n
    return TrialAverage(n, table, col, table.rounded(), round_half_up(col))


__all__ = [
    "CHECKPOINTS_KM", "CheckpointTable", "TrialSummary", "TrialAverage",
    "aggregate_checkpoints", "average_trials", "round_half_up",
]
