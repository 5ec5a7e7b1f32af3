"""Stride-level environments the trainer drives.

StrideEnv composes the full loop: IMU window in, descriptors plus
previous action out as the state, a normalized 12-vector in (each
component in [-1, 1], affinely mapped onto the gait boxes), shaped
reward back. The state embeds the physical action actually executed,
not the normalized command.
"""

from __future__ import annotations

import numpy as np

from ..gait import GaitConfig, denormalize_action, neutral_action
from ..perception import STATE_DIM, assemble_state, build_descriptor
from ..reward import AxisParams, RewardConfig, TaskSpec, reward_parts, sub_reward, task_for_terrain
from ..signals import SENSE_BAND
from ..sim import QuadSim, SimConfig, Terrain


class StrideEnv:
    """One robot, one terrain, one task; a fresh instance per worker."""

    def __init__(
        self,
        terrain: Terrain,
        task: TaskSpec | None = None,
        sim_cfg: SimConfig | None = None,
        gait_cfg: GaitConfig | None = None,
        reward_cfg: RewardConfig | None = None,
    ):
        self.terrain = terrain
        self.sim_cfg = sim_cfg or SimConfig()
        self.gait_cfg = gait_cfg or GaitConfig()
        self.task = task or task_for_terrain(terrain)
        self.reward_cfg = reward_cfg or self.task.reward_config()
        if self.reward_cfg.omega_f != self.sim_cfg.omega_fall:
            raise ValueError(
                "fall thresholds disagree: reward omega_f "
                f"{self.reward_cfg.omega_f} vs simulator omega_fall "
                f"{self.sim_cfg.omega_fall}"
            )
        self.sim = QuadSim(terrain, self.sim_cfg, self.gait_cfg)
        self.obs_dim = STATE_DIM
        self.act_dim = 12
        self._window_idx = 0

    def _state(self, window, prev_action) -> np.ndarray:
        descs = [
            build_descriptor(window.channel(name, self._window_idx), SENSE_BAND)
            for name in ("gyro_x", "gyro_y", "gyro_z", "acc_y")
        ]
        return assemble_state(*descs, prev_action).values

    def reset(self, seed: int) -> np.ndarray:
        _, window = self.sim.reset(seed)
        self._window_idx = 0
        return self._state(window, neutral_action(self.gait_cfg))

    def step(self, raw_action: np.ndarray):
        act = denormalize_action(raw_action, self.gait_cfg)
        _, window, status = self.sim.step_stride(act)
        self._window_idx += 1
        m = self.task.measurement(self.sim.last_telemetry)
        parts = reward_parts(m, self.task, self.reward_cfg)
        done = status.outcome != "running"
        info = {
            "outcome": status.outcome,
            "distance_m": status.distance_m,
            "strides_used": status.strides_used,
            "elapsed_s": status.elapsed_s,
            "reward_parts": parts,
        }
        return self._state(window, act), parts["total"], done, info

    def sample_random_action(self, rng: np.random.Generator) -> np.ndarray:
        # uniform in normalized units is uniform over the gait boxes
        return rng.uniform(-1.0, 1.0, 12)


class ToyEnv:
    """One-dimensional sanity env: the state is the previous scalar
    action and the reward is the shaped sub-reward of the action, so
    the analytic optimum is k * (1 - gamma) in the saturated limit."""

    def __init__(self, axis: AxisParams | None = None, episode_len: int = 50):
        self.axis = axis or AxisParams(k=1.0, alpha=10.0, beta=0.0, gamma=0.5)
        self.episode_len = episode_len
        self.obs_dim = 1
        self.act_dim = 1
        self._prev = 0.0
        self._n = 0

    @property
    def optimum(self) -> float:
        return self.axis.k * (1.0 - self.axis.gamma)

    def reset(self, seed: int) -> np.ndarray:
        del seed
        self._prev = 0.0
        self._n = 0
        return np.array([0.0])

    def step(self, raw_action: np.ndarray):
        a = float(np.asarray(raw_action).ravel()[0])
        r = sub_reward(a, self.axis)
        self._prev = a
        self._n += 1
        done = self._n >= self.episode_len
        return np.array([a]), r, done, {"outcome": "toy"}

    def sample_random_action(self, rng: np.random.Generator) -> np.ndarray:
        return rng.normal(0.0, 1.0, 1)
