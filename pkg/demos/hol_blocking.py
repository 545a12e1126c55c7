"""
Head-of-line blocking on the prefill side
=========================================

A single 128K-token prompt arrives just before a stream of ten 8K prompts.
Under FCFS the giant monopolizes the prefill pool for ~8.8 simulated seconds
and every short request blows its 8s first-token target. Urgency-based
selection lets the shorts cut through in chunks while the giant absorbs
the delay it was going to pay anyway.
"""

from slosim import ClusterConfig, CostProfile, Request, run

# True prefill cost is piecewise-linear through two measured points, so the
# giant costs 8.8s while an 8K prompt costs 400.4ms; the scheduler's own
# throughput estimate starts from the blended totals.
profile = CostProfile(
    prefill_anchor=(139264, 9_200_400),
    prefill_gt_curve=[(8192, 400_400), (131072, 8_800_000)],
)

workload = [Request(id="L", arrival_time=0, input_len=131072, output_len=1)]
for k in range(1, 11):
    workload.append(
        Request(id=f"S{k:02d}", arrival_time=100_000 * k, input_len=8192, output_len=1)
    )

for prefill_policy in ("fcfs", "kairos-urgency"):
    cfg = ClusterConfig(prefill_policy=prefill_policy, profile=profile)
    report = run(cfg, workload)
    met = sum(row.ttft_met for row in report.rows)
    print(f"\nprefill_policy = {prefill_policy}: {met}/11 requests met the 8s TTFT target")
    print(f"  {'id':>4}  {'ttft_s':>8}  met")
    for row in report.rows:
        print(f"  {row.id:>4}  {row.ttft_us / 1e6:8.3f}  {'yes' if row.ttft_met else 'NO'}")
