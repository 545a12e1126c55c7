"""Core value types shared across the simulator.

All timestamps are integer microseconds (``SimTime``) since simulation start;
seconds appear only at I/O boundaries. Python integers never wrap, so time
arithmetic cannot silently overflow; negative times are rejected where they
would be constructed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

US_PER_S = 1_000_000

# Integer microseconds since simulation start.
SimTime = int


def seconds_to_us(seconds: float) -> SimTime:
    """Convert seconds to integer microseconds (round to nearest)."""
    us = round(seconds * US_PER_S)
    if us < 0:
        raise ValueError(f"negative time: {seconds}s")
    return us


def us_to_seconds(us: SimTime) -> float:
    return us / US_PER_S


class ConfigurationError(ValueError):
    """A simulation is configured so that it could never run correctly."""


class Phase(IntEnum):
    """Request lifecycle states; transitions are forward-only."""

    QUEUED = 0
    PREFILLING = 1
    TRANSFERRING = 2
    DECODE_WAITING = 3
    DECODING = 4
    FINISHED = 5


@dataclass
class SLOConfig:
    """Latency targets: time-to-first-token and time-per-output-token."""

    ttft_slo_us: SimTime = 8 * US_PER_S
    tpot_slo_us: SimTime = 50_000

    def __post_init__(self) -> None:
        if self.ttft_slo_us <= 0 or self.tpot_slo_us <= 0:
            raise ValueError("SLO targets must be strictly positive")


@dataclass
class Request:
    """One inference job moving through the prefill/transfer/decode lifecycle.

    ``output_len`` is ground truth from the trace. It is visible to the
    engine (for retirement and KV reservations) but never read by any
    scheduling policy; schedulers learn a request is done only when its
    final token has been produced.
    """

    id: str
    arrival_time: SimTime
    input_len: int
    output_len: int
    prefix_hit_len: int = 0
    prefill_done_tokens: int = 0
    n_gen: int = 0
    t_prefill_finish: SimTime | None = None
    t_first_token: SimTime | None = None
    token_timestamps: list[SimTime] = field(default_factory=list)
    phase: Phase = Phase.QUEUED

    def __post_init__(self) -> None:
        if self.arrival_time < 0:
            raise ValueError(f"{self.id}: negative arrival_time")
        if self.input_len < 1:
            raise ValueError(f"{self.id}: input_len must be >= 1")
        if self.output_len < 1:
            raise ValueError(f"{self.id}: output_len must be >= 1")
        if not 0 <= self.prefix_hit_len < self.input_len:
            raise ValueError(f"{self.id}: prefix_hit_len must be in [0, input_len)")
        if not 0 <= self.prefill_done_tokens <= self.input_len - self.prefix_hit_len:
            raise ValueError(f"{self.id}: prefill_done_tokens out of range")
        if not 0 <= self.n_gen <= self.output_len - 1:
            raise ValueError(f"{self.id}: n_gen out of range")

    @property
    def remaining_prefill_tokens(self) -> int:
        """Prompt tokens still to be prefilled (prefix-cache hits excluded)."""
        return self.input_len - self.prefix_hit_len - self.prefill_done_tokens

    @property
    def seq_len(self) -> int:
        """Current KV-cache footprint in tokens: prompt plus generated."""
        return self.input_len + self.n_gen

    @property
    def ttft_us(self) -> SimTime | None:
        if self.t_first_token is None:
            return None
        return self.t_first_token - self.arrival_time

    def advance_phase(self, new_phase: Phase) -> None:
        if new_phase < self.phase:
            raise ValueError(
                f"{self.id}: phase cannot go backwards ({self.phase.name} -> {new_phase.name})"
            )
        self.phase = new_phase

    def record_first_token(self, t: SimTime) -> None:
        if self.token_timestamps:
            raise ValueError(f"{self.id}: first token already recorded")
        self.t_first_token = t
        self.token_timestamps.append(t)

    def record_decode_token(self, t: SimTime) -> None:
        if not self.token_timestamps:
            raise ValueError(f"{self.id}: decode token before first token")
        if t <= self.token_timestamps[-1]:
            raise ValueError(f"{self.id}: token timestamps must be strictly increasing")
        self.token_timestamps.append(t)
        self.n_gen += 1
