"""Command-line interface: experiment runs, trace generation, profile synthesis.

Exit codes: 0 on success, 2 for invalid configuration or input files, 3 when
a simulation refuses to start (e.g. a request that can never fit in KV).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

from .costmodel import save_profile, synth_profile_from_anchors
from .domain import ConfigurationError, SLOConfig
from .engine import ClusterConfig, CostProfile, Simulation
from .metrics import (
    SWEEP_COLUMNS,
    report_to_json,
    write_csv_atomic,
    write_per_request_csv,
    write_sweep_csv,
)
from .workload import LongTailSpec, gen_longtail, load_trace, rescale_qps, save_trace


@dataclasses.dataclass
class ExperimentConfig:
    cluster: ClusterConfig
    trace_path: str | None
    longtail: LongTailSpec | None
    qps_sweep: list[float]
    policies: list[tuple[str, str]]
    output_dir: str

    def __post_init__(self) -> None:
        if not self.qps_sweep:
            raise ValueError("qps_sweep must contain at least one rate")
        if any(q <= 0 for q in self.qps_sweep):
            raise ValueError("qps values must be positive")
        if not self.policies:
            raise ValueError("at least one policy pair is required")
        if (self.trace_path is None) == (self.longtail is None):
            raise ValueError("workload must name exactly one of 'trace' or 'longtail'")


def default_experiment_config() -> ExperimentConfig:
    """Defaults that exercise the head-of-line and straggler regimes out of the box."""
    return ExperimentConfig(
        cluster=ClusterConfig(),
        trace_path=None,
        longtail=LongTailSpec(),
        qps_sweep=[0.4, 0.7, 1.0, 1.3, 1.6, 1.9],
        policies=[("fcfs", "continuous"), ("kairos-urgency", "kairos-slack")],
        output_dir="out",
    )


def _parse_cluster(data: dict) -> ClusterConfig:
    slo = SLOConfig(**data.get("slo", {}))
    profile_data = dict(data.get("profile", {}))
    if "decode_anchors" in profile_data:
        profile_data["decode_anchors"] = [tuple(a) for a in profile_data["decode_anchors"]]
    if "prefill_anchor" in profile_data:
        profile_data["prefill_anchor"] = tuple(profile_data["prefill_anchor"])
    if profile_data.get("prefill_gt_curve") is not None:
        profile_data["prefill_gt_curve"] = [tuple(p) for p in profile_data["prefill_gt_curve"]]
    profile = CostProfile(**profile_data)
    kwargs = {
        k: v for k, v in data.items() if k not in ("slo", "profile")
    }
    return ClusterConfig(slo=slo, profile=profile, **kwargs)


def load_experiment_config(path: str) -> ExperimentConfig:
    with open(path, encoding="utf-8") as f:
        data = json.load(f)
    workload = data.get("workload", {})
    trace_path = workload.get("trace")
    longtail = None
    if "longtail" in workload:
        longtail = LongTailSpec(**workload["longtail"])
    if trace_path is not None and not os.path.exists(trace_path):
        raise ValueError(f"trace file not found: {trace_path}")
    return ExperimentConfig(
        cluster=_parse_cluster(data.get("cluster", {})),
        trace_path=trace_path,
        longtail=longtail,
        qps_sweep=[float(q) for q in data.get("qps_sweep", [])],
        policies=[tuple(p) for p in data.get("policies", [])],
        output_dir=data.get("output_dir", "out"),
    )


def _write_text_atomic(path: str, text: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as f:
        f.write(text)
    os.replace(tmp, path)


def cmd_run(args: argparse.Namespace) -> int:
    try:
        cfg = (
            load_experiment_config(args.config)
            if args.config
            else default_experiment_config()
        )
        if args.seed is not None:
            cfg.cluster = dataclasses.replace(cfg.cluster, seed=args.seed)
            if cfg.longtail is not None:
                cfg.longtail = dataclasses.replace(cfg.longtail, seed=args.seed)
        if args.out:
            cfg.output_dir = args.out
        base = (
            load_trace(cfg.trace_path)
            if cfg.trace_path is not None
            else gen_longtail(cfg.longtail)
        )
        if not base:
            raise ValueError("workload is empty")
    except (ValueError, TypeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    os.makedirs(cfg.output_dir, exist_ok=True)
    sweep_rows = []
    try:
        for qps in cfg.qps_sweep:
            workload = rescale_qps(base, qps)
            for prefill_policy, decode_policy in cfg.policies:
                pair = f"{prefill_policy}+{decode_policy}"
                cluster = dataclasses.replace(
                    cfg.cluster, prefill_policy=prefill_policy, decode_policy=decode_policy
                )
                sim = Simulation(cluster, workload, collect_events=args.events)
                report = sim.run()
                tag = f"q{qps:g}_{pair}"
                write_per_request_csv(
                    os.path.join(cfg.output_dir, f"per_request_{tag}.csv"), report
                )
                _write_text_atomic(
                    os.path.join(cfg.output_dir, f"aggregate_{tag}.json"),
                    report_to_json(report),
                )
                if args.events:
                    lines = "".join(
                        json.dumps(ev, sort_keys=True) + "\n" for ev in sim.events
                    )
                    _write_text_atomic(
                        os.path.join(cfg.output_dir, f"events_{tag}.jsonl"), lines
                    )
                sweep_rows.append(
                    {
                        "qps": qps,
                        "policy_pair": pair,
                        "ttft_att": report.ttft_attainment,
                        "tpot_att": report.tpot_attainment,
                        "e2e_att": report.e2e_attainment,
                        "decode_tps_p50": report.decode_tps_p50,
                    }
                )
                print(
                    f"qps={qps:g} {pair}: ttft={report.ttft_attainment:.4f} "
                    f"tpot={report.tpot_attainment:.4f} e2e={report.e2e_attainment:.4f}"
                )
    except ConfigurationError as exc:
        print(f"simulation configuration error: {exc}", file=sys.stderr)
        return 3
    write_sweep_csv(os.path.join(cfg.output_dir, "sweep.csv"), sweep_rows)
    return 0


def cmd_gen_trace(args: argparse.Namespace) -> int:
    try:
        spec = LongTailSpec(
            qps=args.qps,
            n_requests=args.n,
            short_len_log_mean=args.short_log_mean,
            short_len_log_sigma=args.short_log_sigma,
            p_long=args.p_long,
            long_len_min=args.long_min,
            long_len_max=args.long_max,
            out_len_log_mean=args.out_log_mean,
            out_len_log_sigma=args.out_log_sigma,
            seed=args.seed if args.seed is not None else 2024,
        )
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    requests = gen_longtail(spec)
    tmp = args.out + ".tmp"
    save_trace(tmp, requests)
    os.replace(tmp, args.out)
    print(f"wrote {len(requests)} requests to {args.out}")
    return 0


def _parse_anchor(text: str) -> tuple[int, int, int]:
    parts = text.split(":")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("anchor must be BSZ:SEQ:STEP_US")
    bsz, seq, us = (int(p) for p in parts)
    if bsz < 1 or seq < 1 or us < 1:
        raise argparse.ArgumentTypeError("anchor fields must be >= 1")
    return bsz, seq, us


def _parse_int_list(text: str) -> list[int]:
    return [int(p) for p in text.split(",") if p]


def cmd_profile_synth(args: argparse.Namespace) -> int:
    try:
        lut = synth_profile_from_anchors(
            args.anchor,
            args.gamma,
            bsz_buckets=args.bsz_buckets,
            seq_buckets=args.seq_buckets,
            prior_weight=args.prior_weight,
        )
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    tmp = args.out + ".tmp"
    save_profile(tmp, lut, (args.prefill_tokens, args.prefill_duration_us))
    os.replace(tmp, args.out)
    print(f"wrote profile to {args.out}")
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    import csv as csv_mod

    rows = []
    for path in args.sweeps:
        try:
            with open(path, newline="", encoding="utf-8") as f:
                reader = csv_mod.reader(f)
                header = next(reader, None)
                if header != SWEEP_COLUMNS:
                    raise ValueError(f"{path}: unexpected sweep header {header}")
                for line in reader:
                    rows.append(dict(zip(SWEEP_COLUMNS, line)))
        except OSError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        except ValueError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
    rows.sort(key=lambda row: (float(row["qps"]), row["policy_pair"]))
    write_csv_atomic(args.out, SWEEP_COLUMNS, [[row[c] for c in SWEEP_COLUMNS] for row in rows])
    print(f"merged {len(rows)} rows into {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="slosim",
        description="Discrete-event simulator for SLO-aware disaggregated serving",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a QPS sweep over policy pairs")
    p_run.add_argument("--config", default=None, help="experiment config JSON (default: built-in)")
    p_run.add_argument("--seed", type=int, default=None, help="override config seeds")
    p_run.add_argument("--events", action="store_true", help="dump per-run event logs (JSONL)")
    p_run.add_argument("--out", default=None, help="override output directory")
    p_run.set_defaults(func=cmd_run)

    p_gen = sub.add_parser("gen-trace", help="generate a synthetic long-tail trace")
    p_gen.add_argument("--out", required=True)
    p_gen.add_argument("--qps", type=float, default=1.0)
    p_gen.add_argument("--n", type=int, default=1000)
    p_gen.add_argument("--seed", type=int, default=None)
    p_gen.add_argument("--p-long", type=float, default=0.05)
    p_gen.add_argument("--long-min", type=int, default=65536)
    p_gen.add_argument("--long-max", type=int, default=131072)
    p_gen.add_argument("--short-log-mean", type=float, default=LongTailSpec().short_len_log_mean)
    p_gen.add_argument("--short-log-sigma", type=float, default=1.0)
    p_gen.add_argument("--out-log-mean", type=float, default=LongTailSpec().out_len_log_mean)
    p_gen.add_argument("--out-log-sigma", type=float, default=0.7)
    p_gen.set_defaults(func=cmd_gen_trace)

    p_prof = sub.add_parser("profile-synth", help="synthesize a decode profile from anchors")
    p_prof.add_argument("--anchor", type=_parse_anchor, action="append", required=True,
                        metavar="BSZ:SEQ:STEP_US")
    p_prof.add_argument("--gamma", type=float, default=0.03)
    p_prof.add_argument("--prior-weight", type=int, default=100)
    p_prof.add_argument("--bsz-buckets", type=_parse_int_list, default=None)
    p_prof.add_argument("--seq-buckets", type=_parse_int_list, default=None)
    p_prof.add_argument("--prefill-tokens", type=int, default=131072)
    p_prof.add_argument("--prefill-duration-us", type=int, default=8_800_000)
    p_prof.add_argument("--out", required=True)
    p_prof.set_defaults(func=cmd_profile_synth)

    p_rep = sub.add_parser("report", help="merge sweep CSVs")
    p_rep.add_argument("sweeps", nargs="+")
    p_rep.add_argument("--out", required=True)
    p_rep.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


def entry() -> None:  # console-script shim
    raise SystemExit(main())


if __name__ == "__main__":
    raise SystemExit(main())
