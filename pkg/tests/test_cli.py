import json

from slosim.cli import main
from slosim.costmodel import load_profile
from slosim.workload import load_trace


def base_config(tmp_path, trace, **overrides):
    cfg = {
        "cluster": {
            "chunk_budget": 8192,
            "kv_capacity_tokens": 500_000,
            "profile": {
                "decode_anchors": [[1, 8192, 11000], [1, 131072, 40300]],
                "prefill_anchor": [131072, 8_800_000],
            },
            "seed": 7,
        },
        "workload": {"trace": str(trace)},
        "qps_sweep": [2.0, 3.0],
        "policies": [["fcfs", "continuous"], ["kairos-urgency", "kairos-slack"]],
        "output_dir": str(tmp_path / "out"),
    }
    cfg.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return path


def write_small_trace(tmp_path):
    trace = tmp_path / "trace.jsonl"
    assert main(["gen-trace", "--out", str(trace), "--n", "40", "--qps", "2.0", "--seed", "5"]) == 0
    return trace


def test_gen_trace_deterministic(tmp_path):
    a = tmp_path / "a.jsonl"
    b = tmp_path / "b.jsonl"
    assert main(["gen-trace", "--out", str(a), "--n", "30", "--seed", "11"]) == 0
    assert main(["gen-trace", "--out", str(b), "--n", "30", "--seed", "11"]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert len(load_trace(str(a))) == 30


def test_profile_synth_round_trip(tmp_path):
    out = tmp_path / "profile.json"
    code = main(
        [
            "profile-synth",
            "--anchor", "1:8192:11000",
            "--anchor", "1:131072:40300",
            "--gamma", "0.03",
            "--out", str(out),
        ]
    )
    assert code == 0
    lut, anchor = load_profile(str(out))
    assert lut.lookup(1, 8192) == 11000.0
    assert lut.lookup(2, 131072) == 41509.0
    assert anchor == (131072, 8_800_000)


def test_run_produces_outputs(tmp_path):
    trace = write_small_trace(tmp_path)
    cfg = base_config(tmp_path, trace)
    assert main(["run", "--config", str(cfg)]) == 0
    out = tmp_path / "out"
    sweep = (out / "sweep.csv").read_text().splitlines()
    assert sweep[0] == "qps,policy_pair,ttft_att,tpot_att,e2e_att,decode_tps_p50"
    assert len(sweep) == 1 + 2 * 2  # 2 qps points x 2 policy pairs
    assert (out / "per_request_q2_fcfs+continuous.csv").exists()
    report = json.loads((out / "aggregate_q3_kairos-urgency+kairos-slack.json").read_text())
    assert 0.0 <= report["e2e_attainment"] <= 1.0


def test_run_seed_repeatable(tmp_path):
    trace = write_small_trace(tmp_path)
    cfg = base_config(tmp_path, trace)
    assert main(["run", "--config", str(cfg), "--seed", "99", "--out", str(tmp_path / "o1")]) == 0
    assert main(["run", "--config", str(cfg), "--seed", "99", "--out", str(tmp_path / "o2")]) == 0
    assert (tmp_path / "o1" / "sweep.csv").read_bytes() == (tmp_path / "o2" / "sweep.csv").read_bytes()


def test_run_events_dump(tmp_path):
    trace = write_small_trace(tmp_path)
    cfg = base_config(tmp_path, trace, qps_sweep=[2.0], policies=[["fcfs", "continuous"]])
    assert main(["run", "--config", str(cfg), "--events"]) == 0
    events_file = tmp_path / "out" / "events_q2_fcfs+continuous.jsonl"
    lines = events_file.read_text().splitlines()
    assert lines
    first = json.loads(lines[0])
    assert set(first) == {"t_us", "kind", "req", "detail"}


def test_run_longtail_workload(tmp_path):
    cfg = {
        "cluster": {
            "profile": {
                "decode_anchors": [[1, 8192, 11000]],
                "prefill_anchor": [10000, 1_000_000],
                "batch_growth": 0.0,
            }
        },
        "workload": {"longtail": {"n_requests": 30, "qps": 2.0, "seed": 4}},
        "qps_sweep": [2.0],
        "policies": [["kairos-urgency", "kairos-slack"]],
        "output_dir": str(tmp_path / "out"),
    }
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg))
    assert main(["run", "--config", str(path)]) == 0
    assert (tmp_path / "out" / "sweep.csv").exists()


def test_run_rejects_ambiguous_workload(tmp_path):
    trace = write_small_trace(tmp_path)
    cfg_path = base_config(tmp_path, trace)
    cfg = json.loads(cfg_path.read_text())
    cfg["workload"]["longtail"] = {"n_requests": 5}
    cfg_path.write_text(json.dumps(cfg))
    assert main(["run", "--config", str(cfg_path)]) == 2


def test_run_rejects_unknown_cluster_key(tmp_path):
    trace = write_small_trace(tmp_path)
    cfg_path = base_config(tmp_path, trace)
    cfg = json.loads(cfg_path.read_text())
    cfg["cluster"]["mystery_knob"] = 1
    cfg_path.write_text(json.dumps(cfg))
    assert main(["run", "--config", str(cfg_path)]) == 2


def test_run_missing_trace_exits_2(tmp_path):
    cfg = base_config(tmp_path, tmp_path / "nope.jsonl")
    assert main(["run", "--config", str(cfg)]) == 2


def test_run_invalid_config_exits_2(tmp_path):
    trace = write_small_trace(tmp_path)
    cfg = base_config(tmp_path, trace, policies=[])
    assert main(["run", "--config", str(cfg)]) == 2


def test_run_impossible_capacity_exits_3(tmp_path):
    trace = write_small_trace(tmp_path)
    cfg_path = base_config(tmp_path, trace)
    cfg = json.loads(cfg_path.read_text())
    cfg["cluster"]["kv_capacity_tokens"] = 10
    cfg_path.write_text(json.dumps(cfg))
    assert main(["run", "--config", str(cfg_path)]) == 3


def test_report_merges_sweeps(tmp_path):
    trace = write_small_trace(tmp_path)
    cfg1 = base_config(tmp_path, trace, qps_sweep=[3.0], output_dir=str(tmp_path / "s1"))
    assert main(["run", "--config", str(cfg1)]) == 0
    cfg2 = base_config(tmp_path, trace, qps_sweep=[2.0], output_dir=str(tmp_path / "s2"))
    assert main(["run", "--config", str(cfg2)]) == 0
    merged = tmp_path / "merged.csv"
    assert main(
        ["report", str(tmp_path / "s1" / "sweep.csv"), str(tmp_path / "s2" / "sweep.csv"),
         "--out", str(merged)]
    ) == 0
    lines = merged.read_text().splitlines()
    assert len(lines) == 1 + 4
    qps_column = [line.split(",")[0] for line in lines[1:]]
    assert qps_column == sorted(qps_column, key=float)
