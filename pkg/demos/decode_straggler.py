"""
Straggler mitigation on the decode side
=======================================

An 8K-context request and a 128K-context request decode side by side.
Continuous batching paces every step at the straggler's ~41.5ms, so the
short request idles ~30ms per token. Slack-guided batching notices that the
long request only needs a token every 50ms, squeezes extra short-only steps
into the gap, and still never misses a per-token deadline.
"""

from slosim import Request, SLOConfig, synth_profile_from_anchors
from slosim.decode_sched import DECODE_POLICIES
from slosim.metrics import decode_throughput

SLO = SLOConfig()  # 50ms per output token


def fresh_pair():
    return [
        Request(id="short", arrival_time=0, input_len=8192, output_len=200),
        Request(id="long", arrival_time=0, input_len=131072, output_len=200),
    ]


def decode_until_done(requests, policy_name, lut):
    """Run decode steps back to back; each step costs what the table predicts."""
    policy = DECODE_POLICIES[policy_name]
    by_id = {r.id: r for r in requests}
    for r in requests:
        r.record_first_token(0.0)
    t, cadence = 0.0, []
    while True:
        active = [r for r in requests if r.n_gen < r.output_len - 1]
        if not active:
            return cadence
        sel = policy(active, t, SLO, lut)
        batch = [by_id[rid] for rid in sel.batch]
        t += lut.lookup(len(batch), max(r.seq_len for r in batch))
        for r in batch:
            r.record_decode_token(t)
        cadence.append((t, "+".join(sorted(sel.batch))))


lut = synth_profile_from_anchors([(1, 8192, 11_000), (1, 131072, 40_300)], 0.03)

for policy in ("continuous", "kairos-slack"):
    requests = fresh_pair()
    cadence = decode_until_done(requests, policy, lut)
    print(f"\ndecode_policy = {policy}")
    for r in requests:
        print(f"  {r.id:>5}: {decode_throughput(r):5.1f} tokens/s")
    steps = ", ".join(f"{t / 1000:.1f}ms[{who}]" for t, who in cadence[:8])
    print(f"  first steps: {steps}, ...")
