"""Noise-policy PPO on a toy conditional diffusion world."""

from ._core import (
    CheckpointError,
    ConfigError,
    Denoiser,
    DivergenceError,
    Error,
    ShapeError,
    default_config,
    entropy,
    eval_sweep,
    file_hash,
    golden_report,
    gradcheck,
    kl_to_standard,
    load_denoiser,
    log_prob,
    normalize_config,
    oracle_denoiser,
    ppo_objective,
    train_denoiser,
    train_policy,
)

__all__ = [
    "CheckpointError",
    "ConfigError",
    "Denoiser",
    "DivergenceError",
    "Error",
    "ShapeError",
    "default_config",
    "entropy",
    "eval_sweep",
    "file_hash",
    "golden_report",
    "gradcheck",
    "kl_to_standard",
    "load_denoiser",
    "log_prob",
    "normalize_config",
    "oracle_denoiser",
    "ppo_objective",
    "train_denoiser",
    "train_policy",
]
