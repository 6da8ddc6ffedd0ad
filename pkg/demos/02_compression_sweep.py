"""How much does each method keep as the antenna budget grows?

Runs the joint linear equalizer, its channel-unaware twin and the three
alignment-then-transmit baselines over N_T = 2, 4, 8 at 20 dB, six channel
draws each, and prints mean accuracy per compression factor.
"""

import sys

from mimo_semalign.codec import SyntheticSpec, generate_synthetic
from mimo_semalign.evalx import SweepConfig, monte_carlo, summarize, zeta_sweep

threads = int(sys.argv[1]) if len(sys.argv) > 1 else 1
data = generate_synthetic(SyntheticSpec(d=32, m=48, n=2000, n_classes=10, cluster_spread=1.0, map_kind="real_linear"))
methods = ["linear", "linear_unaware", "eigen_k", "top_k", "first_k"]
cfg = SweepConfig(n_pilots=1000, n_test=1000, n_realizations=6)
rows = summarize(monte_carlo(methods, data, zeta_sweep([2, 4, 8], snr_db=20.0), cfg, threads=threads))

zetas = sorted({r["zeta"] for r in rows})
print("method".ljust(16) + "".join(f"zeta={z:<8.3f}" for z in zetas))
for method in methods:
    acc = {r["zeta"]: r["accuracy_mean"] for r in rows if r["method"] == method}
    print(method.ljust(16) + "".join(f"{acc[z]:<13.3f}" for z in zetas))
