"""Counting hosts with sketches that forget.

A plain Flajolet-Martin sketch can only grow, so once half the hosts leave
its count stays where it was.  Count-Sketch-Reset ages every bit and lets
bits that nobody refreshes fall away.  How fast they may fall away is the
cutoff f(k) = a + b k, which we fit from a churn-free run first.

Run:  python3 demos/02_counting_with_reset.py
"""
import math

import numpy as np

from dynagg.config import ExperimentConfig
from dynagg.counting import CutoffFn
from dynagg.experiment import calibrate_cutoff
from dynagg.fm_sketch import SketchParams, estimate_count, sketch_of
from dynagg.metrics import global_record
from dynagg.sim_env import ChurnEvent, CountingSpec, Uniform, World

n = 5000

# how good is one sketch?  m = 64 bins gives roughly 10% relative error
p = SketchParams(m=64)
rng = np.random.default_rng(0)
est = [estimate_count(sketch_of(rng.integers(0, 2**62, n).tolist(), p), p) for _ in range(30)]
print(f"single sketch, n={n}: mean {np.mean(est):.0f}, relative spread {np.std(est) / n:.1%}")

cal = calibrate_cutoff(ExperimentConfig(hosts=n, values="constant", rounds=40))
print(f"fitted cutoff: f(k) = {cal.a:.2f} + {cal.b:.2f} k")
for k, q in zip(cal.ks[:8], cal.quantiles[:8]):
    print(f"  bit {k:2d}: 99.9th percentile counter {q:.0f}")

churn = [ChurnEvent(20, "remove", "random", 0.5)]
runs = {}
for label, reset in (("reset", True), ("static", False)):
    spec = CountingSpec(SketchParams(hash_seed=1), CutoffFn(cal.a, cal.b), reset=reset)
    world = World(Uniform(n), np.ones(n), seed=1, counting=spec, churn=churn)
    series = [global_record(world, "count", label)]
    world.run(60, lambda w: series.append(global_record(w, "count", label)))
    runs[label] = series

print()
print(f"{'round':>5} {'truth':>6} {'reset':>7} {'static':>7}")
for r in range(0, 61, 5):
    print(f"{r:5d} {runs['reset'][r].truth:6.0f} {runs['reset'][r].mean_est:7.0f} {runs['static'][r].mean_est:7.0f}")
print(f"reset deadline f(L) + 15 = {math.ceil(cal.a + 32 * cal.b) + 15} rounds after the failure")
