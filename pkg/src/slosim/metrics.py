"""Per-request and aggregate SLO-attainment metrics, plus serialization.

Both SLO checks use closed inequalities: a value exactly at the target
counts as met. Percentiles use the nearest-rank method for determinism.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field

from .domain import Request, SLOConfig, SimTime


@dataclass
class RequestMetrics:
    id: str
    ttft_us: int
    mean_tpot_us: float
    decode_tps: float | None
    ttft_met: bool
    tpot_met: bool
    e2e_met: bool
    deadline_misses: int


def ttft_metric(r: Request, slo: SLOConfig) -> tuple[SimTime, bool]:
    """Time from arrival to first token, and whether it met the TTFT target."""
    if r.t_first_token is None:
        raise ValueError(f"{r.id}: no first token recorded")
    value = r.t_first_token - r.arrival_time
    return value, value <= slo.ttft_slo_us


def tpot_metric(r: Request, slo: SLOConfig) -> tuple[float, bool]:
    """Mean inter-token latency over the decode phase.

    Single-token requests have no decode phase; they report 0 and count as met.
    """
    if r.output_len == 1:
        return 0.0, True
    value = (r.token_timestamps[-1] - r.token_timestamps[0]) / (r.output_len - 1)
    return value, value <= slo.tpot_slo_us


def decode_throughput(r: Request) -> float | None:
    """Decode speed in tokens/second; None for single-token requests."""
    if r.output_len == 1:
        return None
    span_us = r.token_timestamps[-1] - r.token_timestamps[0]
    return (r.output_len - 1) / (span_us / 1e6)


def deadline_misses(r: Request, slo: SLOConfig) -> int:
    """Count decode tokens delivered after their per-token deadline.

    Token k (k >= 1) is due at t_first_token + k * tpot_slo.
    """
    if r.t_first_token is None:
        raise ValueError(f"{r.id}: no first token recorded")
    base = r.t_first_token
    return sum(
        1
        for k in range(1, len(r.token_timestamps))
        if r.token_timestamps[k] > base + k * slo.tpot_slo_us
    )


def request_metrics(r: Request, slo: SLOConfig) -> RequestMetrics:
    ttft, ttft_met = ttft_metric(r, slo)
    tpot, tpot_met = tpot_metric(r, slo)
    return RequestMetrics(
        id=r.id,
        ttft_us=ttft,
        mean_tpot_us=tpot,
        decode_tps=decode_throughput(r),
        ttft_met=ttft_met,
        tpot_met=tpot_met,
        e2e_met=ttft_met and tpot_met,
        deadline_misses=deadline_misses(r, slo),
    )


def nearest_rank(sorted_values: list[float], pct: float) -> float:
    """Nearest-rank percentile of an ascending list (pct in (0, 100])."""
    if not sorted_values:
        raise ValueError("no values")
    rank = math.ceil(pct / 100.0 * len(sorted_values))
    return sorted_values[max(rank, 1) - 1]


@dataclass
class MetricsReport:
    rows: list[RequestMetrics]
    ttft_attainment: float
    tpot_attainment: float
    e2e_attainment: float
    decode_tps_p50: float | None
    decode_tps_p90: float | None
    worst_queue_wait_us: int
    empty: bool
    config: dict = field(default_factory=dict)
    seed: int = 0


def aggregate(
    rows: list[RequestMetrics],
    *,
    worst_queue_wait_us: int = 0,
    config: dict | None = None,
    seed: int = 0,
) -> MetricsReport:
    """Fold per-request rows into attainment fractions and percentiles."""
    rows = sorted(rows, key=lambda row: row.id)
    if not rows:
        return MetricsReport(
            rows=[],
            ttft_attainment=1.0,
            tpot_attainment=1.0,
            e2e_attainment=1.0,
            decode_tps_p50=None,
            decode_tps_p90=None,
            worst_queue_wait_us=worst_queue_wait_us,
            empty=True,
            config=config or {},
            seed=seed,
        )
    n = len(rows)
    tps = sorted(row.decode_tps for row in rows if row.decode_tps is not None)
    return MetricsReport(
        rows=rows,
        ttft_attainment=sum(row.ttft_met for row in rows) / n,
        tpot_attainment=sum(row.tpot_met for row in rows) / n,
        e2e_attainment=sum(row.e2e_met for row in rows) / n,
        decode_tps_p50=nearest_rank(tps, 50) if tps else None,
        decode_tps_p90=nearest_rank(tps, 90) if tps else None,
        worst_queue_wait_us=worst_queue_wait_us,
        empty=False,
        config=config or {},
        seed=seed,
    )


def report_to_dict(report: MetricsReport) -> dict:
    return {
        "rows": [
            {
                "id": row.id,
                "ttft_us": row.ttft_us,
                "mean_tpot_us": row.mean_tpot_us,
                "decode_tps": row.decode_tps,
                "ttft_met": row.ttft_met,
                "tpot_met": row.tpot_met,
                "e2e_met": row.e2e_met,
                "deadline_misses": row.deadline_misses,
            }
            for row in report.rows
        ],
        "ttft_attainment": report.ttft_attainment,
        "tpot_attainment": report.tpot_attainment,
        "e2e_attainment": report.e2e_attainment,
        "decode_tps_p50": report.decode_tps_p50,
        "decode_tps_p90": report.decode_tps_p90,
        "worst_queue_wait_us": report.worst_queue_wait_us,
        "empty": report.empty,
        "config": report.config,
        "seed": report.seed,
    }


def report_from_dict(data: dict) -> MetricsReport:
    return MetricsReport(
        rows=[RequestMetrics(**row) for row in data["rows"]],
        ttft_attainment=data["ttft_attainment"],
        tpot_attainment=data["tpot_attainment"],
        e2e_attainment=data["e2e_attainment"],
        decode_tps_p50=data["decode_tps_p50"],
        decode_tps_p90=data["decode_tps_p90"],
        worst_queue_wait_us=data["worst_queue_wait_us"],
        empty=data["empty"],
        config=data["config"],
        seed=data["seed"],
    )


def report_to_json(report: MetricsReport) -> str:
    return json.dumps(report_to_dict(report), sort_keys=True, indent=2) + "\n"


def report_from_json(text: str) -> MetricsReport:
    return report_from_dict(json.loads(text))


PER_REQUEST_COLUMNS = [
    "id",
    "ttft_us",
    "mean_tpot_us",
    "decode_tps",
    "ttft_met",
    "tpot_met",
    "e2e_met",
    "deadline_misses",
]

SWEEP_COLUMNS = ["qps", "policy_pair", "ttft_att", "tpot_att", "e2e_att", "decode_tps_p50"]


def _fmt(value: object) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if value is None:
        return ""
    return repr(value) if isinstance(value, float) else str(value)


def write_per_request_csv(path: str, report: MetricsReport) -> None:
    write_csv_atomic(
        path,
        PER_REQUEST_COLUMNS,
        [
            [
                row.id,
                row.ttft_us,
                row.mean_tpot_us,
                row.decode_tps,
                row.ttft_met,
                row.tpot_met,
                row.e2e_met,
                row.deadline_misses,
            ]
            for row in report.rows
        ],
    )


def write_sweep_csv(path: str, rows: list[dict]) -> None:
    write_csv_atomic(path, SWEEP_COLUMNS, [[row[c] for c in SWEEP_COLUMNS] for row in rows])


def write_csv_atomic(path: str, columns: list[str], rows: list[list]) -> None:
    """Write a CSV via a temp file + rename so readers never see partial output."""
    tmp = path + ".tmp"
    with open(tmp, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    os.replace(tmp, path)
