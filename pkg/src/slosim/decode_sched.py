"""Decode-side scheduling policies.

The slack-guided policy measures how much of each request's per-token budget
remains after reserving time for the step that would serve everyone, then
greedily packs short requests whose own step time fits inside the tightest
slack, provided each addition raises batch throughput. When no slack can be
exploited, every active request decodes together.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .costmodel import DecodeStepLUT
from .domain import Request, SLOConfig, SimTime


@dataclass
class DecodeSelection:
    """Outcome of one decode scheduling decision.

    ``batch`` lists admitted ids in admission (ascending seq_len) order;
    ``delayed`` holds the ids withheld this step. ``admission_step_times_us``
    records the incremental step time accepted at each admission, for audit.
    """

    batch: list[str]
    delayed: list[str]
    predicted_step_time_us: float
    s_min_us: float
    fallback: bool = False
    admission_step_times_us: list[float] = field(default_factory=list)


def compute_slack(
    r: Request,
    t_now: SimTime,
    slo: SLOConfig,
    lut: DecodeStepLUT,
    *,
    step_cost_us: float | None = None,
) -> float:
    """Time to spare before the next token must ship, minus the step reserve.

    The budget for token N+1 is (N+1) * TPOT measured from the first token.
    By default the reserve is the request's own single-request step time;
    callers that know the step everyone would share pass it explicitly.
    May be negative.
    """
    if r.t_first_token is None:
        raise ValueError(f"{r.id}: slack undefined before the first token")
    if step_cost_us is None:
        step_cost_us = lut.lookup(1, r.seq_len)
    budget = slo.tpot_slo_us * (r.n_gen + 1)
    elapsed = t_now - r.t_first_token
    return budget - elapsed - step_cost_us


def select_decode_batch(
    active: list[Request], t_now: SimTime, slo: SLOConfig, lut: DecodeStepLUT
) -> DecodeSelection:
    """Slack-guided greedy packing over the active decode set.

    Slack is computed against the cost of decoding the whole active set (the
    step that actually runs when nothing can be deferred), so any admitted
    cheaper step provably leaves every delayed request a timely way out. A
    candidate joins the batch iff its step time fits within the minimum slack
    and adding it increases tokens-per-second; otherwise it is delayed. An
    empty batch falls back to decoding everyone.
    """
    if not active:
        raise ValueError("active set must be non-empty")
    order = sorted(active, key=lambda r: (r.seq_len, r.id))
    max_seq = order[-1].seq_len
    fallback_cost = lut.lookup(len(order), max_seq)
    s_min = min(
        compute_slack(r, t_now, slo, lut, step_cost_us=fallback_cost) for r in order
    )

    batch: list[str] = []
    delayed: list[str] = []
    admitted_times: list[float] = []
    t_cur = 0.0
    for r in order:
        t_step = lut.lookup(len(batch) + 1, r.seq_len)
        if t_step <= s_min and (
            not batch or (len(batch) + 1) / t_step > len(batch) / t_cur
        ):
            batch.append(r.id)
            t_cur = t_step
            admitted_times.append(t_step)
        else:
            delayed.append(r.id)

    if not batch:
        # No slack to exploit; decode everyone.
        return DecodeSelection(
            batch=[r.id for r in order],
            delayed=[],
            predicted_step_time_us=fallback_cost,
            s_min_us=s_min,
            fallback=True,
        )
    return DecodeSelection(
        batch=batch,
        delayed=delayed,
        predicted_step_time_us=t_cur,
        s_min_us=s_min,
        admission_step_times_us=admitted_times,
    )


def continuous_batching_select(active: list[Request], lut: DecodeStepLUT) -> DecodeSelection:
    """Baseline: decode every active request each step."""
    if not active:
        raise ValueError("active set must be non-empty")
    order = sorted(active, key=lambda r: (r.seq_len, r.id))
    return DecodeSelection(
        batch=[r.id for r in order],
        delayed=[],
        predicted_step_time_us=lut.lookup(len(order), order[-1].seq_len),
        s_min_us=math.inf,
    )


DECODE_POLICIES = {
    "kairos-slack": select_decode_batch,
    "continuous": lambda active, t_now, slo, lut: continuous_batching_select(active, lut),
}
