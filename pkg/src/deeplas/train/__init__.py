"""Optimisation recipe and training loop."""
from .config import ConfigError, TrainConfig, build_model, config_from_dict, dump_config, load_config, parse_kv
from .loop import CSV_HEADER, Batcher, History, TrainingAborted, evaluate, make_batch, train, train_step
from .optim import (
    Adam,
    AdamState,
    NonFiniteGradient,
    add_l2_grads,
    clip_by_global_norm,
    global_norm,
    l2_penalty,
    noise_rng,
    weight_noise,
    weight_params,
)

__all__ = [
    "ConfigError", "TrainConfig", "build_model", "config_from_dict", "dump_config", "load_config", "parse_kv",
    "CSV_HEADER", "Batcher", "History", "TrainingAborted", "evaluate", "make_batch", "train", "train_step",
    "Adam", "AdamState", "NonFiniteGradient", "add_l2_grads", "clip_by_global_norm", "global_norm",
    "l2_penalty", "noise_rng", "weight_noise", "weight_params",
]
