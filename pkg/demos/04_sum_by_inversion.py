"""A network-wide sum from an average and a count.

Nobody gossips the sum itself.  Each host multiplies its running average
estimate by its running count estimate, and both of those track departures.

Run:  python3 demos/04_sum_by_inversion.py
"""
import numpy as np

from dynagg.averaging import PUSHPULL, RevertParams
from dynagg.counting import CutoffFn
from dynagg.fm_sketch import SketchParams
from dynagg.metrics import global_record
from dynagg.sim_env import ChurnEvent, CountingSpec, Uniform, World

n = 4000
values = np.random.default_rng(2).uniform(0, 100, n)
world = World(
    Uniform(n), values, seed=2,
    averaging=RevertParams.classic(0.1, PUSHPULL),
    counting=CountingSpec(SketchParams(hash_seed=2), CutoffFn(9.2, 0.2)),
    churn=[ChurnEvent(20, "remove", "random", 0.5)],
)
print(f"{'round':>5} {'true sum':>10} {'mean estimate':>14} {'rms error':>10}")
for r in range(0, 61, 5):
    rec = global_record(world, "sum", "invert-average")
    print(f"{r:5d} {rec.truth:10.0f} {rec.mean_est:14.0f} {rec.rms_err_pct:9.1f}%")
    world.run(5)
