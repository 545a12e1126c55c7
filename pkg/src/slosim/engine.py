"""Deterministic discrete-event simulator for a disaggregated serving cluster.

One prefill pool and one decode pool run independently. Arrivals queue for
chunked prefill; completed prefills transfer their KV state and wait for
decode admission under a token-capacity budget; admitted requests decode in
back-to-back steps chosen by the decode policy.

Events at the same instant apply in a fixed order (arrivals, transfer
completions, prefill completion, decode completion); pools restart and
admissions run only after the whole instant has been absorbed, so same-time
completions are visible to the next scheduling decision. Two runs with the
same config and workload produce identical event logs.
"""

from __future__ import annotations

import copy
import heapq
import json
from dataclasses import dataclass, field, asdict
from enum import IntEnum

import numpy as np

from . import metrics as metrics_mod
from .costmodel import (
    DEFAULT_BATCH_GROWTH,
    DEFAULT_PRIOR_WEIGHT,
    DecodeStepLUT,
    PrefillThroughputEstimator,
    decode_step_formula,
    load_profile,
    synth_profile_from_anchors,
)
from .decode_sched import DECODE_POLICIES
from .domain import ConfigurationError, Phase, Request, SLOConfig, SimTime
from .metrics import MetricsReport
from .prefill_sched import PREFILL_POLICIES


class EventKind(IntEnum):
    """Tie-break priority for events at the same instant."""

    ARRIVAL = 0
    TRANSFER_DONE = 1
    PREFILL_STEP_DONE = 2
    DECODE_STEP_DONE = 3


DEFAULT_DECODE_ANCHORS = [(1, 8192, 11_000), (1, 131072, 40_300)]
DEFAULT_PREFILL_ANCHOR = (131072, 8_800_000)


@dataclass
class CostProfile:
    """Where the scheduler's cost models and the engine's ground truth come from.

    By default both sides share the same generating formulas, so the
    scheduler starts with a perfect model; ``decode_noise_eps`` adds seeded
    multiplicative noise to ground-truth decode steps to exercise the online
    LUT updates. ``prefill_gt_curve`` optionally makes the true prefill cost
    piecewise-linear in tokens (the predictor stays linear), stressing the
    finish-time estimator; by default the true cost is linear through
    ``prefill_anchor``.
    """

    decode_anchors: list[tuple[int, int, int]] = field(
        default_factory=lambda: [tuple(a) for a in DEFAULT_DECODE_ANCHORS]
    )
    batch_growth: float = DEFAULT_BATCH_GROWTH
    prior_weight: int = DEFAULT_PRIOR_WEIGHT
    bsz_buckets: list[int] | None = None
    seq_buckets: list[int] | None = None
    prefill_anchor: tuple[int, int] = DEFAULT_PREFILL_ANCHOR
    prefill_gt_curve: list[tuple[int, int]] | None = None
    decode_noise_eps: float = 0.0
    profile_path: str | None = None

    def __post_init__(self) -> None:
        if self.decode_noise_eps < 0 or self.decode_noise_eps >= 1:
            raise ValueError("decode_noise_eps must be in [0, 1)")
        if self.prefill_anchor[0] <= 0 or self.prefill_anchor[1] <= 0:
            raise ValueError("prefill_anchor must be positive")

    def build_lut(self) -> DecodeStepLUT:
        if self.profile_path is not None:
            lut, _ = load_profile(self.profile_path)
            return lut
        return synth_profile_from_anchors(
            self.decode_anchors,
            self.batch_growth,
            bsz_buckets=self.bsz_buckets,
            seq_buckets=self.seq_buckets,
            prior_weight=self.prior_weight,
        )

    def build_estimator(self) -> PrefillThroughputEstimator:
        if self.profile_path is not None:
            _, anchor = load_profile(self.profile_path)
            return PrefillThroughputEstimator.seeded(*anchor)
        return PrefillThroughputEstimator.seeded(*self.prefill_anchor)


@dataclass
class ClusterConfig:
    """Everything a single simulation needs besides the workload."""

    chunk_budget: int = 8192
    kv_capacity_tokens: int = 2_000_000
    transfer_base_us: SimTime = 0
    transfer_per_token_us: float = 0.0
    prefill_policy: str = "kairos-urgency"
    decode_policy: str = "kairos-slack"
    slo: SLOConfig = field(default_factory=SLOConfig)
    profile: CostProfile = field(default_factory=CostProfile)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.chunk_budget < 1:
            raise ConfigurationError("chunk_budget must be >= 1")
        if self.kv_capacity_tokens < 1:
            raise ConfigurationError("kv_capacity_tokens must be >= 1")
        if self.transfer_base_us < 0 or self.transfer_per_token_us < 0:
            raise ConfigurationError("transfer delays must be >= 0")
        if self.prefill_policy not in PREFILL_POLICIES:
            raise ConfigurationError(f"unknown prefill policy {self.prefill_policy!r}")
        if self.decode_policy not in DECODE_POLICIES:
            raise ConfigurationError(f"unknown decode policy {self.decode_policy!r}")

    def to_echo_dict(self) -> dict:
        # canonicalize through JSON so reports round-trip losslessly
        return json.loads(json.dumps(asdict(self)))


class _GroundTruth:
    """True execution costs, independent of what the schedulers believe."""

    def __init__(self, profile: CostProfile) -> None:
        self._frozen_lut: DecodeStepLUT | None = None
        prefill_anchor = profile.prefill_anchor
        if profile.profile_path is not None:
            self._frozen_lut, prefill_anchor = load_profile(profile.profile_path)
        if profile.prefill_gt_curve is not None:
            pts = sorted((int(t), int(d)) for t, d in profile.prefill_gt_curve)
            if not pts or any(t <= 0 or d <= 0 for t, d in pts):
                raise ConfigurationError("prefill_gt_curve points must be positive")
        else:
            pts = [prefill_anchor]
        self._curve = [(0, 0)] + pts
        if profile.profile_path is not None:
            self._base = None
        else:
            self._base = sorted(
                (seq, float(us)) for bsz, seq, us in profile.decode_anchors if bsz == 1
            )
            if not self._base:
                raise ConfigurationError("decode anchors need at least one bsz=1 entry")
        self._gamma = profile.batch_growth
        self._eps = profile.decode_noise_eps

    def _curve_at(self, tokens: int) -> float:
        pts = self._curve
        if tokens >= pts[-1][0]:
            # extrapolate with the final segment's slope
            x0, y0 = pts[-2]
            x1, y1 = pts[-1]
            return y1 + (y1 - y0) * (tokens - x1) / (x1 - x0)
        for k in range(len(pts) - 1):
            if tokens <= pts[k + 1][0]:
                x0, y0 = pts[k]
                x1, y1 = pts[k + 1]
                return y0 + (y1 - y0) * (tokens - x0) / (x1 - x0)
        raise AssertionError("unreachable")

    def prefill_batch_us(self, chunks: list[tuple[int, int]]) -> SimTime:
        """True duration of a prefill step: sum of per-chunk curve increments.

        ``chunks`` holds (tokens already prefilled, chunk tokens) per entry.
        """
        total = 0.0
        for done_before, take in chunks:
            total += self._curve_at(done_before + take) - self._curve_at(done_before)
        return max(1, round(total))

    def decode_step_us(self, bsz: int, max_seq: int, rng: np.random.Generator) -> SimTime:
        if self._frozen_lut is not None:
            value = self._frozen_lut.lookup(bsz, max_seq)
        else:
            value = decode_step_formula(self._base, self._gamma, bsz, max_seq)
        if self._eps > 0:
            value *= rng.uniform(1.0 - self._eps, 1.0 + self._eps)
        return max(1, round(value))


class Simulation:
    """One deterministic run of a workload against a cluster configuration."""

    def __init__(
        self,
        config: ClusterConfig,
        workload: list[Request],
        *,
        collect_events: bool = False,
    ) -> None:
        self.config = config
        for a, b in zip(workload, workload[1:]):
            if b.arrival_time < a.arrival_time:
                raise ValueError("workload must be sorted by arrival_time")
        ids = [r.id for r in workload]
        if len(set(ids)) != len(ids):
            raise ValueError("workload ids must be unique")
        for r in workload:
            if r.phase != Phase.QUEUED or r.prefill_done_tokens or r.n_gen or r.token_timestamps:
                raise ValueError(f"workload request {r.id!r} is not pristine")
        # The run mutates request lifecycle state; keep the caller's objects intact.
        self.requests: list[Request] = copy.deepcopy(workload)

        self.lut = config.profile.build_lut()
        if self.lut.is_empty:
            raise ConfigurationError("decode LUT has no populated entries")
        self.estimator = config.profile.build_estimator()
        self._gt = _GroundTruth(config.profile)
        self._prefill_policy = PREFILL_POLICIES[config.prefill_policy]
        self._decode_policy = DECODE_POLICIES[config.decode_policy]
        self._rng = np.random.default_rng(config.seed)

        worst = max((r.input_len + r.output_len for r in self.requests), default=0)
        if worst > config.kv_capacity_tokens:
            raise ConfigurationError(
                f"kv_capacity_tokens={config.kv_capacity_tokens} cannot hold the "
                f"largest request reservation ({worst} tokens)"
            )

        self.events: list[dict] | None = [] if collect_events else None
        self._heap: list[tuple[int, int, int, tuple]] = []
        self._seq = 0
        self._by_id = {r.id: r for r in self.requests}
        self._queue: list[Request] = []
        self._prefill_inflight: list[tuple[Request, int]] | None = None
        self._pending_decode: list[tuple[int, str, int]] = []  # (t_prefill_finish, id, t_transfer)
        self._active: dict[str, Request] = {}
        self._decode_inflight: list[str] | None = None
        self._kv_used = 0
        self._first_sched: dict[str, SimTime] = {}
        self._finished = 0
        self._tokens_emitted = 0

    # ------------------------------------------------------------------
    # event plumbing

    def _push(self, t: SimTime, kind: EventKind, payload: tuple) -> None:
        self._seq += 1
        heapq.heappush(self._heap, (t, int(kind), self._seq, payload))

    def _log(self, t: SimTime, kind: str, req: str | None, detail: dict | None = None) -> None:
        if self.events is not None:
            self.events.append({"t_us": t, "kind": kind, "req": req, "detail": detail or {}})

    # ------------------------------------------------------------------

    def run(self) -> MetricsReport:
        for r in self.requests:
            self._push(r.arrival_time, EventKind.ARRIVAL, ("arrival", r))
        while self._heap:
            t = self._heap[0][0]
            while self._heap and self._heap[0][0] == t:
                _, _, _, payload = heapq.heappop(self._heap)
                self._dispatch(t, payload)
            self._admit(t)
            self._start_prefill(t)
            self._start_decode(t)
        if self._finished != len(self.requests):
            raise AssertionError("simulation quiesced with unfinished requests")
        rows = [metrics_mod.request_metrics(r, self.config.slo) for r in self.requests]
        worst_wait = max(
            (self._first_sched[r.id] - r.arrival_time for r in self.requests),
            default=0,
        )
        return metrics_mod.aggregate(
            rows,
            worst_queue_wait_us=worst_wait,
            config=self.config.to_echo_dict(),
            seed=self.config.seed,
        )

    def _dispatch(self, t: SimTime, payload: tuple) -> None:
        kind = payload[0]
        if kind == "arrival":
            r: Request = payload[1]
            self._queue.append(r)
            self._log(t, "Arrival", r.id)
        elif kind == "prefill_done":
            self._finish_prefill_step(t, payload[1], payload[2])
        elif kind == "transfer_done":
            r = payload[1]
            r.advance_phase(Phase.DECODE_WAITING)
            self._pending_decode.append((r.t_prefill_finish, r.id, t))
            self._log(t, "TransferDone", r.id)
        elif kind == "decode_done":
            self._finish_decode_step(t, payload[1], payload[2], payload[3], payload[4])
        else:  # pragma: no cover - defensive
            raise AssertionError(f"unknown event {kind!r}")

    # ------------------------------------------------------------------
    # prefill pool

    def _start_prefill(self, t: SimTime) -> None:
        if self._prefill_inflight is not None or not self._queue:
            return
        batch = self._prefill_policy(
            self._queue, self.config.chunk_budget, t, self.estimator, self.config.slo
        )
        if not batch:
            return
        chunks: list[tuple[Request, int]] = []
        gt_chunks: list[tuple[int, int]] = []
        for rid, take in batch.entries:
            r = self._by_id[rid]
            chunks.append((r, take))
            gt_chunks.append((r.prefill_done_tokens, take))
            r.advance_phase(Phase.PREFILLING)
            self._first_sched.setdefault(rid, t)
        duration = self._gt.prefill_batch_us(gt_chunks)
        self._prefill_inflight = chunks
        self._push(t + duration, EventKind.PREFILL_STEP_DONE, ("prefill_done", chunks, duration))

    def _finish_prefill_step(
        self, t: SimTime, chunks: list[tuple[Request, int]], duration: SimTime
    ) -> None:
        total_tokens = 0
        for r, take in chunks:
            r.prefill_done_tokens += take
            total_tokens += take
        self.estimator.update(total_tokens, duration)
        self._log(
            t,
            "PrefillStepDone",
            None,
            {"batch": [[r.id, take] for r, take in chunks], "duration_us": duration},
        )
        for r, _ in chunks:
            if r.remaining_prefill_tokens == 0 and r.phase == Phase.PREFILLING:
                r.t_prefill_finish = t
                r.advance_phase(Phase.TRANSFERRING)
                self._queue.remove(r)
                delay = self.config.transfer_base_us + round(
                    r.input_len * self.config.transfer_per_token_us
                )
                self._push(t + delay, EventKind.TRANSFER_DONE, ("transfer_done", r))
        self._prefill_inflight = None

    # ------------------------------------------------------------------
    # decode pool

    def _admit(self, t: SimTime) -> None:
        # Strict admission order by prefill completion: the head waits for
        # capacity rather than being skipped.
        self._pending_decode.sort(key=lambda item: (item[0], item[1]))
        while self._pending_decode:
            _, rid, t_transfer = self._pending_decode[0]
            r = self._by_id[rid]
            need = r.input_len + r.output_len
            if self._kv_used + need > self.config.kv_capacity_tokens:
                break
            self._pending_decode.pop(0)
            r.record_first_token(t_transfer)
            r.advance_phase(Phase.DECODING)
            self._tokens_emitted += 1
            self._log(t, "Admit", rid, {"first_token_us": t_transfer})
            if r.output_len == 1:
                r.advance_phase(Phase.FINISHED)
                self._finished += 1
            else:
                self._active[rid] = r
                self._kv_used += need

    def _start_decode(self, t: SimTime) -> None:
        if self._decode_inflight is not None or not self._active:
            return
        selection = self._decode_policy(
            list(self._active.values()), t, self.config.slo, self.lut
        )
        batch_reqs = [self._active[rid] for rid in selection.batch]
        bsz = len(batch_reqs)
        max_seq = max(r.seq_len for r in batch_reqs)
        duration = self._gt.decode_step_us(bsz, max_seq, self._rng)
        self._decode_inflight = selection.batch
        self._push(
            t + duration,
            EventKind.DECODE_STEP_DONE,
            ("decode_done", selection.batch, bsz, max_seq, duration),
        )

    def _finish_decode_step(
        self, t: SimTime, batch: list[str], bsz: int, max_seq: int, duration: SimTime
    ) -> None:
        for rid in batch:
            r = self._active[rid]
            r.record_decode_token(t)
            self._tokens_emitted += 1
            if r.n_gen == r.output_len - 1:
                r.advance_phase(Phase.FINISHED)
                self._finished += 1
                self._kv_used -= r.input_len + r.output_len
                del self._active[rid]
        self.lut.update(bsz, max_seq, duration)
        self._log(
            t,
            "DecodeStepDone",
            None,
            {"batch": list(batch), "bsz": bsz, "max_seq": max_seq, "duration_us": duration},
        )
        self._decode_inflight = None


def run(
    config: ClusterConfig, workload: list[Request], *, collect_events: bool = False
) -> MetricsReport:
    """Run one simulation to quiescence and return its metrics report."""
    return Simulation(config, workload, collect_events=collect_events).run()
