"""Synchronous multi-worker PPO training and deterministic evaluation.

Workers run in deterministic round-robin order, each owning its
environment and seed stream; parameter updates happen at the
synchronization point after all segments are in, so results are
byte-reproducible for a fixed seed and worker count.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from ..sim import SimulationFault
from .core import PolicyParams, RunningNorm, TrainerFault, policy_mean, policy_sample
from .gae import Transition, compute_gae
from .update import TrainerConfig, make_optimizers, ppo_update

CURVE_COLUMNS = ("update_idx", "timesteps", "mean_ep_reward", "std", "fall_rate")


@dataclass
class EpisodeRecord:
    total_reward: float
    strides: int
    outcome: str
    seed: int


@dataclass
class TrainResult:
    params: PolicyParams
    normalizer: RunningNorm | None
    curve_rows: list[dict]
    timesteps: int
    episodes: list[EpisodeRecord] = field(default_factory=list)


class _RewardScaler:
    """Scale-only reward normalization.

    Rewards are divided by the running standard deviation of the
    discounted return, the usual way to bring value targets to unit
    scale. Division by one positive number keeps ordering, so fall
    penalties stay the worst rewards among values scaled against the
    same scaler state.
    """

    def __init__(self, gamma: float):
        self.gamma = gamma
        self.ret = 0.0
        self.count = 0.0
        self.mean = 0.0
        self.m2 = 0.0

    def update(self, r: float, terminal: bool) -> None:
        self.ret = self.gamma * self.ret + r
        self.count += 1.0
        d = self.ret - self.mean
        self.mean += d / self.count
        self.m2 += d * (self.ret - self.mean)
        if terminal:
            self.ret = 0.0

    def scale(self, r: float) -> float:
        if self.count < 2:
            return r
        return r / math.sqrt(self.m2 / self.count + 1e-8)


class _Worker:
    def __init__(self, env, seed_seq: np.random.SeedSequence):
        sample_ss, reset_ss = seed_seq.spawn(2)
        self.env = env
        self.sample_rng = np.random.default_rng(sample_ss)
        self.reset_rng = np.random.default_rng(reset_ss)
        self.episode_seed = self._next_seed()
        self.obs = env.reset(self.episode_seed)
        self.ep_reward = 0.0
        self.ep_strides = 0
        self.action_log: list[np.ndarray] = []

    def _next_seed(self) -> int:
        return int(self.reset_rng.integers(0, 2**63 - 1))

    def begin_episode(self) -> None:
        self.episode_seed = self._next_seed()
        self.obs = self.env.reset(self.episode_seed)
        self.ep_reward = 0.0
        self.ep_strides = 0
        self.action_log = []


def _normalized(obs: np.ndarray, normalizer: RunningNorm | None) -> np.ndarray:
    return normalizer.normalize(obs) if normalizer is not None else np.asarray(obs, float)


def train(
    env_factory,
    task,
    cfg: TrainerConfig,
    *,
    curve_path=None,
    checkpoint_path=None,
    progress=None,
) -> TrainResult:
    """Run synchronous PPO until cfg.total_timesteps strides.

    ``env_factory(task)`` must build a fresh environment per call.
    ``progress``, if given, is called with each curve row as a dict.
    Checkpoints go to ``checkpoint_path`` every cfg.checkpoint_every
    updates and at the end; the curve CSV is written incrementally.
    """
    master = np.random.SeedSequence(cfg.seed)
    init_ss, update_ss, *worker_ss = master.spawn(2 + cfg.worker_count)
    workers = [_Worker(env_factory(task), ss) for ss in worker_ss]
    env0 = workers[0].env
    params = PolicyParams(env0.obs_dim, env0.act_dim, cfg.hidden,
                          np.random.default_rng(init_ss), cfg.init_log_std)
    normalizer = RunningNorm(env0.obs_dim) if cfg.normalize_obs else None
    scaler = _RewardScaler(cfg.gamma) if cfg.normalize_rewards else None
    optimizer = make_optimizers(params, cfg)
    update_rng = np.random.default_rng(update_ss)

    seg_len = cfg.rollout_len // cfg.worker_count
    n_updates = max(1, math.ceil(cfg.total_timesteps / cfg.rollout_len))
    curve_rows: list[dict] = []
    all_episodes: list[EpisodeRecord] = []
    last_mean, last_std, last_fall = 0.0, 0.0, 0.0
    timesteps = 0

    for update_idx in range(1, n_updates + 1):
        segments: list[list[Transition]] = []
        bootstraps: list[float] = []
        update_episodes: list[EpisodeRecord] = []
        for w in workers:
            seg: list[Transition] = []
            for _ in range(seg_len):
                norm_obs = _normalized(w.obs, normalizer)
                if normalizer is not None:
                    normalizer.update(w.obs)
                value_est = float(params.value(norm_obs.reshape(1, -1))[0, 0])
                raw, lp = policy_sample(params, norm_obs, w.sample_rng)
                w.action_log.append(raw)
                try:
                    obs2, r, done, info = w.env.step(raw)
                except SimulationFault as e:
                    fault = TrainerFault(
                        f"simulator fault in episode seed {w.episode_seed} "
                        f"after {w.ep_strides} strides: {e}"
                    )
                    fault.replay = {
                        "episode_seed": w.episode_seed,
                        "actions": [a.tolist() for a in w.action_log],
                    }
                    raise fault from e
                if scaler is not None:
                    scaler.update(r, done)
                    r_train = scaler.scale(r)
                else:
                    r_train = r
                # only a fall is a real end state; the other outcomes
                # cut the episode for reasons the agent cannot observe
                # (course complete, corridor, stride budget), so they
                # bootstrap from the next state instead of zeroing it
                terminal = done and info["outcome"] == "fall"
                truncated = done and not terminal
                boot = 0.0
                if truncated:
                    nxt = _normalized(obs2, normalizer)
                    boot = float(params.value(nxt.reshape(1, -1))[0, 0])
                seg.append(Transition(norm_obs, raw, lp, r_train, value_est,
                                      terminal, truncated, boot))
                w.ep_reward += r
                w.ep_strides += 1
                w.obs = obs2
                if done:
                    rec = EpisodeRecord(w.ep_reward, w.ep_strides,
                                        info["outcome"], w.episode_seed)
                    update_episodes.append(rec)
                    w.begin_episode()
            segments.append(seg)
            if seg[-1].terminal or seg[-1].truncated:
                bootstraps.append(0.0)
            else:
                tail = _normalized(w.obs, normalizer)
                bootstraps.append(float(params.value(tail.reshape(1, -1))[0, 0]))

        advs, rets = [], []
        for seg, boot in zip(segments, bootstraps):
            a, r = compute_gae(seg, cfg.gamma, cfg.gae_lambda, boot)
            advs.append(a)
            rets.append(r)
        flat = [t for seg in segments for t in seg]
        obs_b = np.stack([t.norm_obs for t in flat])
        act_b = np.stack([t.raw_action for t in flat])
        lp_b = np.array([t.log_prob for t in flat])
        adv_b = np.concatenate(advs)
        ret_b = np.concatenate(rets)
        ppo_update(params, obs_b, act_b, lp_b, adv_b, ret_b, cfg,
                   optimizer=optimizer, rng=update_rng)

        timesteps += cfg.rollout_len
        all_episodes.extend(update_episodes)
        if update_episodes:
            rewards = [e.total_reward for e in update_episodes]
            last_mean = float(np.mean(rewards))
            last_std = float(np.std(rewards))
            last_fall = float(np.mean([e.outcome == "fall" for e in update_episodes]))
        row = {
            "update_idx": update_idx,
            "timesteps": timesteps,
            "mean_ep_reward": last_mean,
            "std": last_std,
            "fall_rate": last_fall,
        }
        curve_rows.append(row)
        if progress is not None:
            progress(row)
        if curve_path is not None:
            write_curve_csv(curve_path, curve_rows)
        if checkpoint_path is not None and (
            update_idx % cfg.checkpoint_every == 0 or update_idx == n_updates
        ):
            from .checkpoint import save_checkpoint

            save_checkpoint(checkpoint_path, params, normalizer)

    return TrainResult(params, normalizer, curve_rows, timesteps, all_episodes)


def write_curve_csv(path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CURVE_COLUMNS)
        for row in rows:
            writer.writerow([repr(row[c]) if isinstance(row[c], float) else row[c]
                             for c in CURVE_COLUMNS])


@dataclass(frozen=True)
class EvalResult:
    episodes: int
    success_rate: float
    success_ci: tuple[float, float]
    mean_strides: float
    mean_time_s: float
    mean_reward: float
    reward_ci: tuple[float, float]
    fall_rate: float
    outcomes: tuple[str, ...]
    # one (outcome, strides, elapsed_s, total_reward) per episode
    records: tuple[tuple[str, int, float, float], ...] = ()


def _bootstrap_ci(values: np.ndarray, rng: np.random.Generator,
                  resamples: int = 1000) -> tuple[float, float]:
    if values.size == 0:
        return (float("nan"), float("nan"))
    means = np.empty(resamples)
    n = values.size
    for i in range(resamples):
        means[i] = values[rng.integers(0, n, n)].mean()
    return (float(np.percentile(means, 2.5)), float(np.percentile(means, 97.5)))


def _run_episodes(env, act_fn, episodes: int, seed: int) -> EvalResult:
    seed_rng = np.random.default_rng(seed)
    results = []
    for _ in range(episodes):
        ep_seed = int(seed_rng.integers(0, 2**63 - 1))
        obs = env.reset(ep_seed)
        total, steps, done, info = 0.0, 0, False, {}
        while not done:
            obs, r, done, info = env.step(act_fn(obs))
            total += r
            steps += 1
        results.append((info["outcome"], info.get("strides_used", steps),
                        info.get("elapsed_s", float(steps)), total))
    outcomes = tuple(r[0] for r in results)
    succ = np.array([o == "success" for o in outcomes], dtype=float)
    rewards = np.array([r[3] for r in results])
    ci_rng = np.random.default_rng(seed + 1)
    return EvalResult(
        episodes=episodes,
        success_rate=float(succ.mean()),
        success_ci=_bootstrap_ci(succ, ci_rng),
        mean_strides=float(np.mean([r[1] for r in results])),
        mean_time_s=float(np.mean([r[2] for r in results])),
        mean_reward=float(rewards.mean()),
        reward_ci=_bootstrap_ci(rewards, ci_rng),
        fall_rate=float(np.mean([o == "fall" for o in outcomes])),
        outcomes=outcomes,
        records=tuple(results),
    )


def evaluate(env, params: PolicyParams, normalizer: RunningNorm | None,
             episodes: int, seed: int) -> EvalResult:
    """Run the deterministic (mean-action) policy; frozen normalization."""
    return _run_episodes(
        env, lambda obs: policy_mean(params, _normalized(obs, normalizer)),
        episodes, seed,
    )


def random_baseline(env, episodes: int, seed: int) -> EvalResult:
    """Uniform-random actions through the same episode protocol."""
    act_rng = np.random.default_rng(seed + 7919)
    return _run_episodes(
        env, lambda obs: env.sample_random_action(act_rng), episodes, seed,
    )
