"""Transitions and generalized advantage estimation."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Transition:
    """One stride of experience from one worker.

    ``norm_obs`` is the normalized observation the policy actually saw,
    so the stored log_prob can be recomputed exactly later.

    ``terminal`` marks a true end state (a fall): no future value.
    ``truncated`` marks an episode cut off by something the agent
    cannot observe, such as the course ending or the stride budget
    running out; the advantage chain still breaks there, but the
    future is worth ``bootstrap_value`` instead of zero.
    """

    norm_obs: np.ndarray
    raw_action: np.ndarray
    log_prob: float
    reward: float
    value_est: float
    terminal: bool
    truncated: bool = False
    bootstrap_value: float = 0.0

    def __post_init__(self):
        if not (np.all(np.isfinite(self.norm_obs))
                and np.all(np.isfinite(self.raw_action))
                and math.isfinite(self.log_prob)
                and math.isfinite(self.reward)
                and math.isfinite(self.value_est)
                and math.isfinite(self.bootstrap_value)):
            raise ValueError("transition contains non-finite values")
        if self.terminal and self.truncated:
            raise ValueError("a transition cannot be terminal and truncated")


def compute_gae(
    transitions: list[Transition],
    gamma: float,
    lam: float,
    bootstrap_value: float = 0.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Advantages and returns for one worker's time-ordered segment.

    The recursion runs backward with the temporal-difference residual
    d_t = r_t + gamma * V(s_{t+1}) - V(s_t), cutting at episode ends.
    Terminals contribute zero future value; truncations contribute
    their stored bootstrap. ``bootstrap_value`` stands in for
    V(s_{T+1}) when the segment itself stops mid-episode. Advantages
    here are raw; the update step normalizes them across the batch.
    """
    n = len(transitions)
    if n == 0:
        raise ValueError("empty segment")
    adv = np.empty(n)
    values = np.array([t.value_est for t in transitions])
    running = 0.0
    next_value = bootstrap_value
    for t in range(n - 1, -1, -1):
        tr = transitions[t]
        if tr.terminal:
            next_value = 0.0
            running = 0.0
        elif tr.truncated:
            next_value = tr.bootstrap_value
            running = 0.0
        delta = tr.reward + gamma * next_value - values[t]
        running = delta + gamma * lam * running
        adv[t] = running
        next_value = values[t]
    return adv, adv + values
