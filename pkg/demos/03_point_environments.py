"""The point-mass tasks: a scripted route through Push and a bridge across Fall."""

import numpy as np

from hiro.envs import dump_trajectory, make_env

rng = np.random.default_rng(0)


def drive(env, waypoint, steps, log):
    for _ in range(steps):
        s = env.state
        a = np.clip(0.6 * (np.asarray(waypoint) - s.position[:2]) - 1.2 * s.velocity[:2], -1, 1)
        r = env.step(a)
        log.append({"step": s.step, "position": s.position.copy(), "action": a, "reward": r.reward})
    return r

# Push: going straight up shoves the block into the target cell, so go around and
# push the block sideways instead.
env = make_env("push")
env.reset(rng)
log = []
for wp, n in [((-8, 0), 40), ((-8, 8), 40), ((14, 8), 80), ((0, 8), 40), ((0, 19), 300)]:
    res = drive(env, wp, n, log)
print("push: block at", env.state.blocks[0], "agent at", env.state.position,
      "success" if res.success else "no success", "after", env.state.step, "steps")
dump_trajectory("push_route.jsonl", log)

# Fall: push the block into the chasm, walk over it, then step across to the target.
env = make_env("fall")
env.reset(rng)
log = []
for wp, n in [((8, 0), 40), ((8, 17), 120), ((8, 26), 60), ((0, 27), 280)]:
    res = drive(env, wp, n, log)
print("fall: block fell:", bool(env.state.fallen[0]), "agent fell:", env.state.fell,
      "final distance %.2f" % env.distance_to_target(), "success:", res.success)
