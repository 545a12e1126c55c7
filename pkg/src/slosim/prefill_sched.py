"""Prefill-side scheduling policies.

The urgency policy predicts every queued request's finish time under a
serial FCFS walk, scores each one by how much of its TTFT budget would
survive that schedule, and packs the chunk budget in score order. FCFS and
shortest-job-first baselines share the same packing rules.
"""

from __future__ import annotations

from dataclasses import dataclass

from .costmodel import PrefillThroughputEstimator
from .domain import Request, SLOConfig, SimTime


@dataclass
class PrefillBatch:
    """Chunks selected for one prefill step: (request id, chunk tokens) pairs.

    Total tokens never exceed the chunk budget; at most the last entry is a
    partial chunk.
    """

    entries: list[tuple[str, int]]

    @property
    def total_tokens(self) -> int:
        return sum(tokens for _, tokens in self.entries)

    def __bool__(self) -> bool:
        return bool(self.entries)


def _fcfs_order(queue: list[Request]) -> list[Request]:
    return sorted(queue, key=lambda r: (r.arrival_time, r.id))


def predict_finish_times(
    queue: list[Request], t_now: SimTime, est: PrefillThroughputEstimator
) -> dict[str, SimTime]:
    """Predicted prefill finish time of every queued request under FCFS.

    One serial walk: the cursor starts at ``t_now`` and, for each request in
    FCFS order, jumps to its arrival if the pool would sit idle, then
    advances by its estimated remaining prefill duration. The cursor value
    as each request completes is its predicted finish.
    """
    finishes: dict[str, SimTime] = {}
    cursor = t_now
    for r in _fcfs_order(queue):
        cursor = max(cursor, r.arrival_time) + est.estimate_duration_us(
            r.remaining_prefill_tokens
        )
        finishes[r.id] = cursor
    return finishes


def predict_prefill_finish_time(
    queue: list[Request], r: Request, t_now: SimTime, est: PrefillThroughputEstimator
) -> SimTime:
    finishes = predict_finish_times(queue, t_now, est)
    if r.id not in finishes:
        raise ValueError(f"request {r.id!r} is not in the queue")
    return finishes[r.id]


def urgency(r: Request, predicted_finish: SimTime, slo: SLOConfig) -> float:
    """Fraction of the TTFT budget left if the request finished as predicted.

    Negative once the predicted finish already blows the deadline.
    """
    slack = slo.ttft_slo_us - (predicted_finish - r.arrival_time)
    return slack / slo.ttft_slo_us


def normalized_urgency(r: Request, predicted_finish: SimTime, slo: SLOConfig) -> float:
    """Urgency per prompt token; shorter requests score higher at equal slack."""
    return urgency(r, predicted_finish, slo) / r.input_len


def _selection_score(r: Request, predicted_finish: SimTime, slo: SLOConfig) -> float:
    # Per-token normalization flips sign-ordering for late requests (dividing
    # a negative slack by a large length pulls it toward zero, so an
    # already-late long request would outrank an almost-on-time short one and
    # monopolize the pool). Scale by length instead of dividing when the
    # budget is already blown: short requests stay preferred on both sides of
    # zero, and every positive score still beats every negative one.
    u = urgency(r, predicted_finish, slo)
    return u / r.input_len if u >= 0 else u * r.input_len


def _pack(candidates: list[Request], budget: int) -> PrefillBatch:
    if budget < 1:
        raise ValueError("chunk budget must be >= 1")
    entries: list[tuple[str, int]] = []
    left = budget
    for r in candidates:
        if left == 0:
            break
        take = min(r.remaining_prefill_tokens, left)
        if take <= 0:
            continue
        entries.append((r.id, take))
        left -= take
    return PrefillBatch(entries)


def select_prefill_batch(
    queue: list[Request],
    budget: int,
    t_now: SimTime,
    est: PrefillThroughputEstimator,
    slo: SLOConfig,
) -> PrefillBatch:
    """Fill the chunk budget in descending urgency-score order.

    Finish times and scores are recomputed from scratch at every call; ties
    break by earlier arrival, then id. The entry that exhausts the budget may
    be a partial chunk and ends the batch.
    """
    finishes = predict_finish_times(queue, t_now, est)
    candidates = sorted(
        queue,
        key=lambda r: (-_selection_score(r, finishes[r.id], slo), r.arrival_time, r.id),
    )
    return _pack(candidates, budget)


def fcfs_select_prefill(queue: list[Request], budget: int) -> PrefillBatch:
    return _pack(_fcfs_order(queue), budget)


def sjf_select_prefill(queue: list[Request], budget: int) -> PrefillBatch:
    candidates = sorted(
        queue, key=lambda r: (r.remaining_prefill_tokens, r.arrival_time, r.id)
    )
    return _pack(candidates, budget)


PREFILL_POLICIES = {
    "kairos-urgency": select_prefill_batch,
    "fcfs": lambda queue, budget, t_now, est, slo: fcfs_select_prefill(queue, budget),
    "sjf": lambda queue, budget, t_now, est, slo: sjf_select_prefill(queue, budget),
}
