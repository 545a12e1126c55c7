"""
SLO attainment under increasing load
====================================

Generate one long-tail workload, then replay it at several request rates
under the FCFS/continuous baseline and the urgency/slack pair. End-to-end
attainment (both targets met per request) separates the policies as load
approaches the prefill pool's saturation point.

A smaller request count keeps this demo quick; the acceptance suite runs
the full 1000-request version.
"""

from slosim import ClusterConfig, LongTailSpec, gen_longtail, rescale_qps, run

base = gen_longtail(LongTailSpec(n_requests=300, seed=7))
pairs = [("fcfs", "continuous"), ("kairos-urgency", "kairos-slack")]

print(f"{'qps':>5}  {'policy pair':>28}  {'ttft':>6}  {'tpot':>6}  {'e2e':>6}  {'p50 tok/s':>9}")
for qps in (0.5, 1.0, 1.5, 2.0):
    workload = rescale_qps(base, qps)
    for prefill_policy, decode_policy in pairs:
        cfg = ClusterConfig(prefill_policy=prefill_policy, decode_policy=decode_policy)
        rep = run(cfg, workload)
        print(
            f"{qps:5.1f}  {prefill_policy + '+' + decode_policy:>28}"
            f"  {rep.ttft_attainment:6.3f}  {rep.tpot_attainment:6.3f}"
            f"  {rep.e2e_attainment:6.3f}  {rep.decode_tps_p50:9.1f}"
        )
