"""From a 12-number action to joint angles, step by step.

The policy's raw output lives in [-1, 1]^12. This script decodes one
raw action into per-limb polar stride parameters, expands the front
left limb's parameters into a sole trajectory, and inverse-kinematics
decodes a few waypoints into hip and knee angles, round-tripping each
through forward kinematics as a check.

Run:  python demos/gait_geometry.py
"""

import numpy as np

from quadloco.gait import (
    LIMB_NAMES,
    GaitConfig,
    action_to_trajectory,
    denormalize_action,
    fk,
    ik_decode,
    neutral_action,
)


def main():
    cfg = GaitConfig()
    print("gait boxes:")
    print(f"  rho    [{cfg.rho_min_m}, {cfg.rho_max_m}] m")
    print(f"  theta  [{cfg.theta_min_rad}, {cfg.theta_max_rad}] rad")
    print(f"  freq   [{cfg.freq_min_hz}, {cfg.freq_max_hz}] Hz")
    print(f"  trot phase lags: {cfg.phase_lags}\n")

    raw = np.array([
        0.2, 0.2, -0.1, -0.1,   # rho: slightly long in front
        0.0, 0.0, 0.3, 0.3,     # theta: rear limbs angled forward
        0.5, 0.5, 0.5, 0.5,     # stride frequency above the midpoint
    ])
    act = denormalize_action(raw, cfg)
    print("raw [-1,1] action decoded onto the boxes:")
    for i, name in enumerate(LIMB_NAMES):
        print(f"  {name:12s} rho {act.rho[i]:.4f} m   "
              f"theta {act.theta[i]:+.3f} rad   "
              f"freq {act.stride_freq[i]:.3f} Hz")
    neutral = neutral_action(cfg)
    print(f"\nneutral stance for comparison: rho {neutral.rho[0]:.4f} m, "
          f"theta {neutral.theta[0]:+.3f} rad, "
          f"freq {neutral.stride_freq[0]:.3f} Hz\n")

    limb = 0
    traj = action_to_trajectory(act, limb, cfg)
    pts = traj.points
    print(f"{LIMB_NAMES[limb]} sole trajectory: {len(pts)} waypoints, "
          f"period {traj.period_s:.3f} s")
    print(f"{'waypoint':>8s} {'x (m)':>9s} {'z (m)':>9s} "
          f"{'hip (rad)':>10s} {'knee (rad)':>10s} {'fk error':>9s}")
    for k in range(0, len(pts), len(pts) // 8):
        p = pts[k]
        hip, knee = ik_decode(p, cfg.leg)
        back = fk(hip, knee, cfg.leg)
        err = float(np.hypot(back[0] - p[0], back[1] - p[1]))
        print(f"{k:8d} {p[0]:9.4f} {p[1]:9.4f} "
              f"{hip:10.3f} {knee:10.3f} {err:9.2e}")


if __name__ == "__main__":
    main()
