"""Trace ingestion and synthetic long-tail workload generation.

Traces are JSONL, one request per line:

    {"id": "r000001", "arrival_s": 0.42, "input_tokens": 8192,
     "output_tokens": 150, "prefix_hit_tokens": 0}

Synthetic workloads draw Poisson arrivals, a lognormal body of short prompts
with a uniform block of very long ones, and lognormal output lengths.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .domain import Request, seconds_to_us


class TraceError(ValueError):
    """A trace file could not be parsed or violates the schema."""


@dataclass
class TraceRecord:
    id: str
    arrival_s: float
    input_tokens: int
    output_tokens: int
    prefix_hit_tokens: int = 0

    def __post_init__(self) -> None:
        if self.arrival_s < 0:
            raise ValueError(f"{self.id}: arrival_s must be >= 0")
        if self.input_tokens < 1 or self.output_tokens < 1:
            raise ValueError(f"{self.id}: token counts must be >= 1")
        if not 0 <= self.prefix_hit_tokens < self.input_tokens:
            raise ValueError(f"{self.id}: prefix_hit_tokens out of range")

    def to_request(self) -> Request:
        return Request(
            id=self.id,
            arrival_time=seconds_to_us(self.arrival_s),
            input_len=self.input_tokens,
            output_len=self.output_tokens,
            prefix_hit_len=self.prefix_hit_tokens,
        )


@dataclass
class LongTailSpec:
    """Parameters of the synthetic long-tail workload.

    The defaults put the body median near 2K tokens with a 5% uniform block
    of 64K-128K prompts, and output lengths with median near 150 tokens.
    These are calibration choices, not measured values.
    """

    qps: float = 1.0
    n_requests: int = 1000
    short_len_log_mean: float = math.log(2048.0)
    short_len_log_sigma: float = 1.0
    p_long: float = 0.05
    long_len_min: int = 65536
    long_len_max: int = 131072
    out_len_log_mean: float = math.log(150.0)
    out_len_log_sigma: float = 0.7
    seed: int = 2024

    def __post_init__(self) -> None:
        if self.qps <= 0:
            raise ValueError("qps must be positive")
        if self.n_requests < 0:
            raise ValueError("n_requests must be >= 0")
        if not 0.0 <= self.p_long <= 1.0:
            raise ValueError("p_long must be in [0, 1]")
        if self.long_len_min > self.long_len_max:
            raise ValueError("long_len_min must be <= long_len_max")
        if self.long_len_min < 1:
            raise ValueError("long_len_min must be >= 1")
        if self.short_len_log_sigma < 0 or self.out_len_log_sigma < 0:
            raise ValueError("sigmas must be >= 0")


def gen_longtail(spec: LongTailSpec) -> list[Request]:
    """Generate a workload from the spec; identical seeds give identical output."""
    rng = np.random.default_rng(spec.seed)
    n = spec.n_requests
    gaps = rng.exponential(1.0 / spec.qps, size=n)
    arrivals_s = np.cumsum(gaps)
    is_long = rng.random(n) < spec.p_long
    body = rng.lognormal(spec.short_len_log_mean, spec.short_len_log_sigma, size=n)
    tail = rng.integers(spec.long_len_min, spec.long_len_max + 1, size=n)
    outputs = rng.lognormal(spec.out_len_log_mean, spec.out_len_log_sigma, size=n)

    width = max(4, len(str(max(n, 1))))
    requests = []
    for k in range(n):
        input_len = int(tail[k]) if is_long[k] else max(1, int(round(body[k])))
        requests.append(
            Request(
                id=f"r{k:0{width}d}",
                arrival_time=seconds_to_us(float(arrivals_s[k])),
                input_len=input_len,
                output_len=max(1, int(round(outputs[k]))),
            )
        )
    requests.sort(key=lambda r: (r.arrival_time, r.id))
    return requests


def load_trace(path: str) -> list[Request]:
    """Read a JSONL trace; aborts with the offending line number on bad input."""
    records: list[TraceRecord] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                record = TraceRecord(
                    id=str(obj["id"]),
                    arrival_s=float(obj["arrival_s"]),
                    input_tokens=int(obj["input_tokens"]),
                    output_tokens=int(obj["output_tokens"]),
                    prefix_hit_tokens=int(obj.get("prefix_hit_tokens", 0)),
                )
            except (ValueError, KeyError, TypeError) as exc:
                raise TraceError(f"{path}:{lineno}: malformed trace record: {exc}") from exc
            if record.id in seen:
                raise TraceError(f"{path}:{lineno}: duplicate request id {record.id!r}")
            seen.add(record.id)
            records.append(record)
    requests = [rec.to_request() for rec in records]
    requests.sort(key=lambda r: (r.arrival_time, r.id))
    return requests


def save_trace(path: str, requests: list[Request]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for r in requests:
            f.write(
                json.dumps(
                    {
                        "id": r.id,
                        "arrival_s": r.arrival_time / 1e6,
                        "input_tokens": r.input_len,
                        "output_tokens": r.output_len,
                        "prefix_hit_tokens": r.prefix_hit_len,
                    },
                    sort_keys=True,
                )
                + "\n"
            )


def rescale_qps(workload: list[Request], target_qps: float) -> list[Request]:
    """Stretch or compress arrival times to hit a target request rate.

    The observed rate is (n-1)/span; every arrival is multiplied by
    observed/target, preserving order and all length marginals.
    """
    if not workload:
        raise ValueError("workload must be non-empty")
    if target_qps <= 0:
        raise ValueError("target_qps must be positive")
    span_us = workload[-1].arrival_time - workload[0].arrival_time
    if span_us <= 0:
        raise ValueError("workload arrival span must be positive")
    original_qps = (len(workload) - 1) / (span_us / 1e6)
    factor = original_qps / target_qps
    out = []
    for r in workload:
        out.append(
            Request(
                id=r.id,
                arrival_time=round(r.arrival_time * factor),
                input_len=r.input_len,
                output_len=r.output_len,
                prefix_hit_len=r.prefix_hit_len,
            )
        )
    out.sort(key=lambda r: (r.arrival_time, r.id))
    return out
