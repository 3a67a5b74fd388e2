"""Retry storms: the same overload with immediate retries and with jittered backoff.

Demand runs at 90% of capacity; for ten time units it spikes tenfold. Prints
goodput per bucket for both policies.
"""

import numpy as np

from persistcheck import load
from persistcheck.retry import RseqModel, simulate_retry_storm, simulate_rseq
from persistcheck.scenario import retry_config

series = {}
for name in ("herd-collapse", "herd-jitter"):
    sc = load(name)
    service, policy, horizon = retry_config(sc.retry)
    result = simulate_retry_storm(service, policy, sc.seed, horizon)
    series[name] = result.series("goodput")
    print(f"{name}: final goodput {result.final_goodput:.1f} of demand {result.demand:.0f}, "
          f"recovered={result.recovered}")

starts = np.arange(len(series["herd-collapse"])) * service.bucket
print("\n  t   collapse  jitter")
for t, a, b in zip(starts[::4], series["herd-collapse"][::4], series["herd-jitter"][::4]):
    print(f"{t:5.0f} {a:8.1f} {b:7.1f}")

# %% restartable sequences converge to (1-p)^-L attempts
for p in (0.0, 0.1, 0.3):
    r = simulate_rseq(RseqModel(length=5, p=p, trials=50_000), seed=1)
    print(f"p={p}: mean {r.mean_attempts:.4f} expected {r.expected:.4f}")
