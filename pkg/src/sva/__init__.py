"""Sparse adversarial video attacks guided by a reinforcement-learned
frame selector, against small black-box video classifiers."""

from .agent import Agent, AdamState, BaselineState, PolicyParams, \
    adam_ascent_step, agent_lr_schedule, init_policy, load_agent, \
    logprob_grad, policy_forward, reinforce_update, sample_actions, \
    save_agent, train_sval
from .attacker import AttackConfig, AttackResult, EpsDecayScheduler, \
    StepSizeScheduler, build_mask, clip_ball, masked_objective, \
    targeted_attack, untargeted_attack
from .harness import ConfigError, ExperimentConfig, GridRow, Report, \
    ReportRow, load_config, parse_config, run_experiment, \
    sparsity_grid_search
from .metrics import compute_map, compute_sparsity
from .nes import EstimationError, NesConfig, nes_gradient
from .rewards import AttackFeedback, RewardWeights, combined_reward, \
    dissimilarity, reward_attack, reward_diversity, reward_representative, \
    sparsity_penalty
from .threatmodel import ClassifierParams, QueryOracle, TrainConfig, \
    accuracy, forward, init_params, load_model, predict_top1, save_model, \
    surrogate_gradient, train
from .videodata import Dataset, FeatureSequence, GenParams, LabeledVideo, \
    Video, extract_features, generate_dataset, generate_video, load_dataset, \
    save_dataset

__all__ = [name for name in dir() if not name.startswith("_")]
