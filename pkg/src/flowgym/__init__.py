"""Variable-horizon flow-matching policies for a planar unicycle task suite.

The package trains a velocity-field network to produce action chunks by
conditional flow matching, starting from scripted demonstrations, and
improves it with reward-weighted imitation or group-relative advantage
weighting against a learned reward surrogate.  Everything is numpy; the
reverse-mode tape lives in :mod:`flowgym.autodiff`.
"""

from .checks import ValidationError
from .checkpoints import Checkpoint, load_checkpoint, save_checkpoint
from .codec import (H_MAX, H_PRIME, ActionChunk, AugmentedChunk,
                    ChunkNormalizer, decode, encode, fit_normalizer)
from .datasets import (Dataset, TrajectoryRecord, generate_demo_dataset,
                       load_dataset, save_dataset)
from .demonstrator import DemoParams, generate_demo, run_controller
from .env import (ACTION_BOUNDS, DEFAULT_DT, Action, AugmentedObservation,
                  ObservationRollout, UnicycleState, rollout, sample_task,
                  step)
from .explorer import ExploreParams, perturb, sample_field
from .flow import (grpo_loss, ilfm_loss, reward_weights, rwfm_loss,
                   sample_group_batch, sample_path, sample_policy,
                   surrogate_loss)
from .networks import SurrogateArch, VelocityArch
from .policies import (GRPOPolicy, ILFMPolicy, METHODS, RWFMPolicy,
                       TrainingDiverged, evaluate_demonstrator,
                       evaluate_policy)
from .rewards import REWARD_IDS, evaluate, evaluate_terms
from .rng import STREAMS, substream

__version__ = "0.1.0"

__all__ = [
    "ACTION_BOUNDS", "Action", "ActionChunk", "AugmentedChunk",
    "AugmentedObservation", "Checkpoint", "ChunkNormalizer", "DEFAULT_DT",
    "Dataset", "DemoParams", "ExploreParams", "GRPOPolicy", "H_MAX",
    "H_PRIME", "ILFMPolicy", "METHODS", "ObservationRollout", "REWARD_IDS",
    "RWFMPolicy", "STREAMS", "SurrogateArch", "TrainingDiverged",
    "TrajectoryRecord", "UnicycleState", "ValidationError", "VelocityArch",
    "decode", "encode", "evaluate", "evaluate_demonstrator",
    "evaluate_policy", "evaluate_terms", "fit_normalizer",
    "generate_demo", "generate_demo_dataset", "grpo_loss", "ilfm_loss",
    "load_checkpoint", "load_dataset", "perturb", "reward_weights",
    "rollout", "run_controller", "rwfm_loss", "sample_field",
    "sample_group_batch", "sample_path", "sample_policy", "sample_task",
    "save_checkpoint", "save_dataset", "step", "substream",
    "surrogate_loss",
]
