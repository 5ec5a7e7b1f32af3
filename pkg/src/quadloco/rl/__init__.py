"""Reinforcement-learning stack: policy nets, PPO, environments, training."""

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .core import (LOG_STD_MAX, LOG_STD_MIN, PolicyParams, RunningNorm,
                   TrainerFault, entropy, log_prob, policy_mean,
                   policy_sample)
from .envs import StrideEnv, ToyEnv
from .gae import Transition, compute_gae
from .nets import MLP, Adam
from .trainer import (CURVE_COLUMNS, EpisodeRecord, EvalResult, TrainResult,
                      evaluate, random_baseline, train, write_curve_csv)
from .update import (TrainerConfig, loss_and_grads, normalize_advantages,
                     ppo_update)

__all__ = [
    "LOG_STD_MAX",
    "LOG_STD_MIN",
    "MLP",
    "Adam",
    "CURVE_COLUMNS",
    "CheckpointError",
    "EpisodeRecord",
    "EvalResult",
    "PolicyParams",
    "RunningNorm",
    "StrideEnv",
    "ToyEnv",
    "TrainResult",
    "TrainerConfig",
    "TrainerFault",
    "Transition",
    "compute_gae",
    "entropy",
    "evaluate",
    "load_checkpoint",
    "log_prob",
    "loss_and_grads",
    "normalize_advantages",
    "policy_mean",
    "policy_sample",
    "ppo_update",
    "random_baseline",
    "save_checkpoint",
    "train",
    "write_curve_csv",
]
