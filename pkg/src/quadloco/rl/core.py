"""Gaussian policy, value head, and observation normalization."""

from __future__ import annotations

import math

import numpy as np

from .nets import MLP, flatten_arrays, unflatten_into

LOG_STD_MIN = -5.0
LOG_STD_MAX = 1.0
LOG_2PI = math.log(2.0 * math.pi)


class TrainerFault(RuntimeError):
    """Non-finite network output or loss: training cannot continue."""


class PolicyParams:
    """Policy mean net, state-independent log-std, and value net."""

    def __init__(self, obs_dim: int, act_dim: int, hidden: int, rng: np.random.Generator,
                 init_log_std: float = -0.5):
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self.hidden = hidden
        self.policy = MLP((obs_dim, hidden, hidden, act_dim), out_gain=0.01, rng=rng)
        self.log_std = np.full(act_dim, float(init_log_std))
        self.value = MLP((obs_dim, hidden, hidden, 1), out_gain=1.0, rng=rng)
        self.clamp_log_std()

    def clamp_log_std(self) -> None:
        np.clip(self.log_std, LOG_STD_MIN, LOG_STD_MAX, out=self.log_std)

    def all_params(self) -> list[np.ndarray]:
        return self.policy.params() + [self.log_std] + self.value.params()

    def flat(self) -> np.ndarray:
        return flatten_arrays(self.all_params())

    def set_flat(self, flat: np.ndarray) -> None:
        unflatten_into(self.all_params(), flat)

    def copy(self) -> "PolicyParams":
        dup = object.__new__(PolicyParams)
        dup.obs_dim, dup.act_dim, dup.hidden = self.obs_dim, self.act_dim, self.hidden
        dup.policy = self.policy.copy()
        dup.log_std = self.log_std.copy()
        dup.value = self.value.copy()
        return dup

    def check_finite(self) -> None:
        for a in self.all_params():
            if not np.all(np.isfinite(a)):
                raise TrainerFault("non-finite parameter array")


def policy_mean(params: PolicyParams, obs: np.ndarray) -> np.ndarray:
    """Deterministic action for one observation."""
    out = params.policy(obs.reshape(1, -1))[0]
    if not np.all(np.isfinite(out)):
        raise TrainerFault(f"non-finite policy output for obs {obs!r}")
    return out


def log_prob(params: PolicyParams, obs: np.ndarray, raw_actions: np.ndarray):
    """Exact diagonal-Gaussian log density of raw actions.

    Accepts a single observation/action pair (returns a float) or
    batches stacked along the first axis (returns a vector).
    """
    single = np.asarray(obs).ndim == 1
    mean = params.policy(np.atleast_2d(obs))
    std = np.exp(params.log_std)
    z = (np.atleast_2d(raw_actions) - mean) / std
    lp = (-0.5 * (z * z).sum(axis=1)
          - params.log_std.sum()
          - 0.5 * params.act_dim * LOG_2PI)
    return float(lp[0]) if single else lp


def policy_sample(
    params: PolicyParams, obs: np.ndarray, rng: np.random.Generator
) -> tuple[np.ndarray, float]:
    """Draw one raw action and its exact log density."""
    mean = policy_mean(params, obs)
    std = np.exp(params.log_std)
    raw = mean + std * rng.standard_normal(params.act_dim)
    z = (raw - mean) / std
    lp = float(-0.5 * (z * z).sum() - params.log_std.sum()
               - 0.5 * params.act_dim * LOG_2PI)
    return raw, lp


def entropy(params: PolicyParams) -> float:
    """Differential entropy of the diagonal Gaussian policy."""
    return float(params.log_std.sum() + 0.5 * params.act_dim * (1.0 + LOG_2PI))


class RunningNorm:
    """Per-dimension running mean/variance (Welford), freezable.

    Observations are normalized with the statistics accumulated so far;
    evaluation runs never update, so a checkpoint's behavior is fixed.
    """

    def __init__(self, dim: int, clip: float = 10.0):
        self.dim = dim
        self.clip = clip
        self.count = 0.0
        self.mean = np.zeros(dim)
        self.m2 = np.zeros(dim)

    def update(self, x: np.ndarray) -> None:
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x.reshape(1, -1)
        for row in x:
            self.count += 1.0
            delta = row - self.mean
            self.mean += delta / self.count
            self.m2 += delta * (row - self.mean)

    def variance(self) -> np.ndarray:
        if self.count < 2:
            return np.ones(self.dim)
        return self.m2 / self.count

    def normalize(self, x: np.ndarray) -> np.ndarray:
        if self.count < 2:
            return np.clip(np.asarray(x, dtype=float), -self.clip, self.clip)
        z = (np.asarray(x, dtype=float) - self.mean) / np.sqrt(self.variance() + 1e-8)
        return np.clip(z, -self.clip, self.clip)

    def state_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return np.array([self.count]), self.mean.copy(), self.m2.copy()

    @classmethod
    def from_state(cls, count: float, mean: np.ndarray, m2: np.ndarray,
                   clip: float = 10.0) -> "RunningNorm":
        rn = cls(mean.size, clip)
        rn.count = float(count)
        rn.mean = np.asarray(mean, dtype=float).copy()
        rn.m2 = np.asarray(m2, dtype=float).copy()
        return rn
