"""Clipped-surrogate PPO update with hand-derived gradients."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import LOG_2PI, PolicyParams, TrainerFault
from .nets import Adam


@dataclass(frozen=True)
class TrainerConfig:
    total_timesteps: int = 250_000
    rollout_len: int = 512
    minibatch_size: int = 64
    epochs: int = 10
    clip_eps: float = 0.2
    gamma: float = 0.99
    gae_lambda: float = 0.95
    learning_rate: float = 3e-4
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    max_grad_norm: float = 0.5
    seed: int = 0
    worker_count: int = 4
    hidden: int = 64
    # sigma ~0.05 in normalized action units; wider per-limb noise
    # desyncs the trot enough that nearly every episode ends in a fall
    # or an off-heading drift, and the learner never sees the contrast
    # between clean strides and bad ones
    init_log_std: float = -3.0
    # stop reusing a rollout once the policy has moved this far; with a
    # narrow Gaussian the log-density is acutely sensitive to mean
    # shifts, and unchecked epoch reuse walks the policy to the clip
    # boundary on advantage noise alone
    target_kl: float | None = 0.03
    normalize_obs: bool = True
    normalize_rewards: bool = True
    checkpoint_every: int = 25

    def __post_init__(self):
        if not 0.0 < self.clip_eps < 1.0:
            raise ValueError(f"clip_eps must be in (0, 1), got {self.clip_eps}")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError(f"gamma must be in (0, 1], got {self.gamma}")
        if not 0.0 <= self.gae_lambda <= 1.0:
            raise ValueError(f"gae_lambda must be in [0, 1], got {self.gae_lambda}")
        if self.total_timesteps <= 0:
            raise ValueError("total_timesteps must be positive")
        if self.minibatch_size < 1 or self.rollout_len < self.minibatch_size:
            raise ValueError("need rollout_len >= minibatch_size >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.worker_count < 1:
            raise ValueError("worker_count must be >= 1")
        if self.rollout_len % self.worker_count != 0:
            raise ValueError("rollout_len must divide evenly across workers")
        if self.hidden < 1:
            raise ValueError("hidden must be >= 1")
        if self.value_coef < 0 or self.entropy_coef < 0:
            raise ValueError("loss coefficients must be >= 0")
        if self.checkpoint_every < 1:
            raise ValueError("checkpoint_every must be >= 1")
        if self.target_kl is not None and self.target_kl <= 0:
            raise ValueError("target_kl must be positive or None")


def loss_and_grads(
    params: PolicyParams,
    obs: np.ndarray,
    raw_actions: np.ndarray,
    old_log_probs: np.ndarray,
    advantages: np.ndarray,
    returns: np.ndarray,
    cfg: TrainerConfig,
) -> tuple[float, list[np.ndarray], dict[str, float]]:
    """Full PPO loss and its gradients for one minibatch.

    Loss = clipped surrogate + value_coef * value MSE
    - entropy_coef * policy entropy. Gradient order matches
    ``params.all_params()``.
    """
    b = obs.shape[0]
    mean, pcache = params.policy.forward(obs)
    if not np.all(np.isfinite(mean)):
        raise TrainerFault("non-finite policy output in update batch")
    std = np.exp(params.log_std)
    z = (raw_actions - mean) / std
    logp = (-0.5 * (z * z).sum(axis=1) - params.log_std.sum()
            - 0.5 * params.act_dim * LOG_2PI)
    ratio = np.exp(logp - old_log_probs)
    lo, hi = 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps
    surr1 = ratio * advantages
    surr2 = np.clip(ratio, lo, hi) * advantages
    use1 = surr1 <= surr2
    policy_loss = -float(np.where(use1, surr1, surr2).mean())

    # outside the clip band the surrogate is flat, so no gradient flows
    g_logp = np.where(use1, -advantages * ratio, 0.0) / b
    g_mean = (g_logp[:, None]) * (z / std)
    g_log_std = (g_logp[:, None] * (z * z - 1.0)).sum(axis=0)
    g_log_std -= cfg.entropy_coef  # d(-coef * H)/d(log_std) = -coef

    ent = float(params.log_std.sum() + 0.5 * params.act_dim * (1.0 + LOG_2PI))

    v, vcache = params.value.forward(obs)
    v = v[:, 0]
    verr = v - returns
    value_loss = 0.5 * float((verr * verr).mean())
    g_v = (cfg.value_coef * verr / b)[:, None]

    total = policy_loss + cfg.value_coef * value_loss - cfg.entropy_coef * ent
    if not math.isfinite(total):
        raise TrainerFault(
            f"non-finite loss: policy {policy_loss}, value {value_loss}, entropy {ent}"
        )

    pw, pb = params.policy.backward(pcache, g_mean)
    vw, vb = params.value.backward(vcache, g_v)
    grads: list[np.ndarray] = []
    for w, bb in zip(pw, pb):
        grads.append(w)
        grads.append(bb)
    grads.append(g_log_std)
    for w, bb in zip(vw, vb):
        grads.append(w)
        grads.append(bb)
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise TrainerFault("non-finite gradient in update batch")

    # nonnegative KL estimator E[(r - 1) - log r]; stable for small shifts
    log_ratio = logp - old_log_probs
    approx_kl = float(np.mean(np.expm1(log_ratio) - log_ratio))

    stats = {
        "policy_loss": policy_loss,
        "value_loss": value_loss,
        "entropy": ent,
        "clip_fraction": float(np.mean(~use1)),
        "approx_kl": approx_kl,
    }
    return total, grads, stats


def normalize_advantages(adv: np.ndarray) -> np.ndarray:
    return (adv - adv.mean()) / (adv.std() + 1e-8)


def make_optimizers(params: PolicyParams, cfg: TrainerConfig) -> tuple[Adam, Adam]:
    """Paired Adam states: one moves the policy and log-std, one the
    value net, so a KL stop can freeze the first while the second keeps
    fitting."""
    policy_side = params.policy.params() + [params.log_std]
    return (
        Adam(policy_side, cfg.learning_rate, max_grad_norm=cfg.max_grad_norm),
        Adam(params.value.params(), cfg.learning_rate,
             max_grad_norm=cfg.max_grad_norm),
    )


def ppo_update(
    params: PolicyParams,
    obs: np.ndarray,
    raw_actions: np.ndarray,
    old_log_probs: np.ndarray,
    advantages: np.ndarray,
    returns: np.ndarray,
    cfg: TrainerConfig,
    optimizer: tuple[Adam, Adam] | None = None,
    rng: np.random.Generator | None = None,
) -> dict[str, float]:
    """Run cfg.epochs of minibatched clipped-surrogate ascent in place.

    When the batch KL estimate passes cfg.target_kl the policy stops
    moving; value minibatches continue through the remaining epochs.
    """
    if obs.shape[0] == 0:
        raise ValueError("empty batch")
    if optimizer is None:
        optimizer = make_optimizers(params, cfg)
    policy_opt, value_opt = optimizer
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    adv = normalize_advantages(advantages)
    n = obs.shape[0]
    n_policy = len(params.policy.params()) + 1
    last_stats: dict[str, float] = {}
    policy_active = True
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.minibatch_size):
            idx = order[start:start + cfg.minibatch_size]
            _, grads, stats = loss_and_grads(
                params, obs[idx], raw_actions[idx], old_log_probs[idx],
                adv[idx], returns[idx], cfg,
            )
            if (policy_active and cfg.target_kl is not None
                    and stats["approx_kl"] > cfg.target_kl):
                policy_active = False
            if policy_active:
                policy_opt.step(grads[:n_policy])
                params.clamp_log_std()
            value_opt.step(grads[n_policy:])
            last_stats = stats
    params.check_finite()
    return last_stats
