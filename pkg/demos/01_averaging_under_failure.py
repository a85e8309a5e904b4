"""Averaging when half the network disappears.

Every host starts with a value drawn from [0, 100).  After 20 rounds half
the hosts leave without a word.  When the leavers are a random half, the
true average barely moves.  When they are the top-valued half, it drops
to about 25, and only a protocol that reverts toward its own initial mass
can follow it.

Run:  python3 demos/01_averaging_under_failure.py
"""
import numpy as np

from dynagg.averaging import PUSHPULL, RevertParams
from dynagg.metrics import global_record
from dynagg.sim_env import ChurnEvent, Uniform, World

n = 5000
values = np.random.default_rng(1).uniform(0, 100, n)


def trajectory(params, selector, rounds=60):
    world = World(Uniform(n), values, seed=1, averaging=params,
                  churn=[ChurnEvent(20, "remove", selector, 0.5)])
    out = [global_record(world, "average", "")]
    world.run(rounds, lambda w: out.append(global_record(w, "average", "")))
    return out


print("random half leaves at round 20 (push/pull, classic revert)")
print(f"{'lambda':>7} {'err@19':>8} {'err@25':>8} {'err@60':>8} {'mean@60':>8}")
for lam in (0.0, 0.1, 0.5):
    r = trajectory(RevertParams.classic(lam, PUSHPULL), "random")
    print(f"{lam:7.1f} {r[19].rms_err:8.3f} {r[25].rms_err:8.3f} {r[60].rms_err:8.3f} {r[60].mean_est:8.2f}")

print()
print("top-valued half leaves at round 20")
static = trajectory(RevertParams.classic(0.0, PUSHPULL), "top")
print(f"static push-sum     : mean estimate {static[60].mean_est:6.2f}, truth {static[60].truth:6.2f}")
for lam in (0.1, 0.5):
    r = trajectory(RevertParams.full_transfer(lam, parcels=4, window_len=3), "top", rounds=90)
    tail = np.mean([x.rms_err_pct for x in r[60:]])
    print(f"full-transfer {lam:.1f}   : mean estimate {r[90].mean_est:6.2f}, "
          f"truth {r[90].truth:6.2f}, residual error {tail:5.2f}%")
