"""Watch the descriptor notice a ramp before the body reaches it.

A fixed competent trot (the center of every gait box) walks the default
ramp course. Each stride prints the body's position and how far the
three gyro descriptors moved since the previous stride. The distances
sit near the flat-ground baseline until the front feet touch the
slope — about half a body length before the body's y coordinate crosses
the onset line — then spike well past 3x the flat median.

Run:  python demos/terrain_transition.py [seed]
"""

import math
import sys

import numpy as np

from quadloco.perception import DESCRIPTOR_DIM, STATE_CHANNELS, EnvDescriptor, descriptor_distance
from quadloco.rl.envs import StrideEnv
from quadloco.sim import BODY_LENGTH, make_terrain


def gyro_descriptors(obs):
    out = []
    for name in ("gyro_x", "gyro_y", "gyro_z"):
        i = STATE_CHANNELS.index(name)
        out.append(EnvDescriptor(*obs[i * DESCRIPTOR_DIM:(i + 1) * DESCRIPTOR_DIM]))
    return out


def gyro_distance(a, b):
    return math.sqrt(sum(descriptor_distance(x, y) ** 2 for x, y in zip(a, b)))


def main():
    seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
    terrain = make_terrain("ramp")
    onset_y = terrain.params["_y0"]
    half_body = BODY_LENGTH / 2.0
    env = StrideEnv(terrain)
    obs = env.reset(seed)

    print(f"ramp at {terrain.params['slope_deg']:.0f} degrees, "
          f"incline starts at y = {onset_y} m; seed {seed}")
    print(f"feet lead the body center by {half_body} m\n")
    print(f"{'stride':>6s} {'body y':>8s} {'descriptor step':>15s}  zone")

    prev = gyro_descriptors(obs)
    prev_y = float(env.sim.body_snapshot().position[1])
    flat_steps = []
    trot = np.zeros(12)
    for stride in range(1, 41):
        obs, _, done, info = env.step(trot)
        cur = gyro_descriptors(obs)
        y = float(env.sim.body_snapshot().position[1])
        d = gyro_distance(prev, cur)
        if y < onset_y - half_body:
            zone = "flat approach"
            flat_steps.append(d)
        elif y <= onset_y + half_body:
            zone = "footprint on the onset  <-- transition"
        else:
            zone = "climbing"
        print(f"{stride:6d} {y:8.3f} {d:15.3f}  {zone}")
        prev, prev_y = cur, y
        if done:
            print(f"\nepisode over: {info['outcome']} "
                  f"after {info['strides_used']} strides")
            break
    if flat_steps:
        med = float(np.median(flat_steps))
        print(f"\nflat-flat median step: {med:.3f} "
              f"(detection threshold 3x = {3 * med:.3f})")


if __name__ == "__main__":
    main()
