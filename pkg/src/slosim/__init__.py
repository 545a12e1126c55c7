"""Deterministic discrete-event simulator for SLO-aware scheduling in
prefill/decode-disaggregated LLM serving."""

from .costmodel import (
    DecodeStepLUT,
    PrefillThroughputEstimator,
    decode_step_formula,
    load_profile,
    save_profile,
    synth_profile_from_anchors,
)
from .decode_sched import (
    DECODE_POLICIES,
    DecodeSelection,
    compute_slack,
    continuous_batching_select,
    select_decode_batch,
)
from .domain import (
    ConfigurationError,
    Phase,
    Request,
    SLOConfig,
    SimTime,
    seconds_to_us,
    us_to_seconds,
)
from .engine import ClusterConfig, CostProfile, Simulation, run
from .metrics import (
    MetricsReport,
    RequestMetrics,
    aggregate,
    deadline_misses,
    decode_throughput,
    report_from_json,
    report_to_json,
    request_metrics,
    tpot_metric,
    ttft_metric,
)
from .prefill_sched import (
    PREFILL_POLICIES,
    PrefillBatch,
    fcfs_select_prefill,
    normalized_urgency,
    predict_prefill_finish_time,
    select_prefill_batch,
    sjf_select_prefill,
    urgency,
)
from .workload import (
    LongTailSpec,
    TraceRecord,
    gen_longtail,
    load_trace,
    rescale_qps,
    save_trace,
)

__all__ = [
    "ClusterConfig",
    "ConfigurationError",
    "CostProfile",
    "DECODE_POLICIES",
    "DecodeSelection",
    "DecodeStepLUT",
    "LongTailSpec",
    "MetricsReport",
    "PREFILL_POLICIES",
    "Phase",
    "PrefillBatch",
    "PrefillThroughputEstimator",
    "Request",
    "RequestMetrics",
    "SLOConfig",
    "SimTime",
    "Simulation",
    "TraceRecord",
    "aggregate",
    "compute_slack",
    "continuous_batching_select",
    "deadline_misses",
    "decode_step_formula",
    "decode_throughput",
    "fcfs_select_prefill",
    "gen_longtail",
    "load_profile",
    "load_trace",
    "normalized_urgency",
    "predict_prefill_finish_time",
    "report_from_json",
    "report_to_json",
    "request_metrics",
    "rescale_qps",
    "run",
    "save_profile",
    "save_trace",
    "seconds_to_us",
    "select_decode_batch",
    "select_prefill_batch",
    "sjf_select_prefill",
    "synth_profile_from_anchors",
    "tpot_metric",
    "ttft_metric",
    "urgency",
    "us_to_seconds",
]
