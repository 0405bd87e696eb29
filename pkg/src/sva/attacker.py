"""Black-box attack loops over sparse frame masks.

Untargeted: NES-estimated gradient of the true-class probability, sign steps
on the masked frames, fixed L-inf ball of radius epsilon_adv around the clean
video. Targeted: start from the target-video composite and walk the ball
radius down from 1 to epsilon_adv, shrinking only while the oracle keeps
answering the target class; step size and shrink rate adapt to the recent
acceptance record.

Every epoch samples fresh frame masks from the agent policy, spends its own
query budget, and feeds the outcome back as a reward; probabilities come only
through the top-1 oracle.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from ._util import mix_seed
from .agent import Agent, agent_lr_schedule, policy_forward, sample_actions, \
    selected_indices
from .metrics import compute_map, compute_sparsity
from .nes import SIGMA_TARGETED, SIGMA_UNTARGETED, NesConfig, nes_gradient
from .rewards import AttackFeedback, RewardWeights, combined_reward, \
    reward_attack, reward_diversity, reward_representative
from .threatmodel import ClassifierParams, QueryOracle, predict_top1, \
    surrogate_gradient
from .videodata import Video, extract_features

FAILURE_REWARD = -1.0


@dataclass(frozen=True)
class AttackConfig:
    epsilon_adv: float = 0.05
    epsilon_decay: float = 0.01
    step_size: float = 0.005
    query_limit: int = 30000
    nes: NesConfig | None = None
    targeted: bool = False
    max_epochs: int = 1
    episodes: int = 5
    stall_limit: int = 500
    step_window: int = 20
    step_floor: float = 1e-6
    decay_floor: float = 1e-5
    probe_tile: int = 2
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.epsilon_adv < 1.0:
            raise ValueError("epsilon_adv must lie in [0, 1)")
        if self.epsilon_decay <= 0 or self.step_size <= 0:
            raise ValueError("epsilon_decay and step_size must be positive")
        if self.query_limit < 1 or self.max_epochs < 1 or self.episodes < 1:
            raise ValueError("query_limit, max_epochs, episodes must be >= 1")
        if self.stall_limit < 1 or self.step_window < 1:
            raise ValueError("stall_limit and step_window must be >= 1")
        if self.probe_tile < 1:
            raise ValueError("probe_tile must be >= 1")


@dataclass
class AttackResult:
    adversarial: np.ndarray
    success: bool
    queries: int
    map: float
    sparsity: float
    selected_frames: list[int]
    epochs_used: int
    reward_trace: list[float]
    attack_rewards: list[float]


@dataclass
class StepSizeScheduler:
    """Halve alpha when under half of the last `window` proposals were
    accepted; the record clears after each halving."""

    alpha: float
    window: int = 20
    floor: float = 1e-6
    outcomes: deque = field(default_factory=deque)

    def update(self, accepted: bool) -> float:
        self.outcomes.append(bool(accepted))
        if len(self.outcomes) > self.window:
            self.outcomes.popleft()
        if len(self.outcomes) == self.window \
                and sum(self.outcomes) / self.window < 0.5:
            self.alpha = max(self.alpha / 2.0, self.floor)
            self.outcomes.clear()
        return self.alpha


@dataclass
class EpsDecayScheduler:
    """Halve the shrink step after `threshold` consecutive failed shrinks;
    the failure run resets on any success and after each halving."""

    decay: float
    threshold: int = 100
    floor: float = 1e-5
    failures: int = 0

    def update(self, shrunk: bool) -> float:
        if shrunk:
            self.failures = 0
        else:
            self.failures += 1
            if self.failures >= self.threshold:
                self.decay = max(self.decay / 2.0, self.floor)
                self.failures = 0
        return self.decay


def build_mask(actions: np.ndarray, video_shape: tuple[int, ...]) -> np.ndarray:
    """Per-pixel 0/1 mask replicating the frame selection."""
    a = np.asarray(actions)
    if a.ndim != 1 or a.shape[0] != video_shape[0]:
        raise ValueError("action vector length must equal frame count")
    if not np.isin(a, (0, 1)).all():
        raise ValueError("actions must be 0/1")
    if a.sum() == 0:
        raise ValueError("mask selects no frames")
    mask = np.zeros(video_shape)
    mask[a == 1] = 1.0
    return mask


def clip_ball(candidate: np.ndarray, reference: np.ndarray,
              epsilon: float) -> np.ndarray:
    """Project into the L-inf ball around reference, then into [0, 1]."""
    out = np.clip(candidate, reference - epsilon, reference + epsilon)
    return np.clip(out, 0.0, 1.0)


def masked_objective(oracle: QueryOracle, label: int) -> Callable[[np.ndarray], float]:
    """Score function seen by NES: P(label) while label is top-1, else 0."""

    def objective(candidate: np.ndarray) -> float:
        top, prob = predict_top1(oracle, candidate)
        return prob if top == label else 0.0

    return objective


def _frames_of(video) -> np.ndarray:
    return video.frames if isinstance(video, Video) else np.asarray(video, dtype=np.float64)


def estimate_step_direction(objective: Callable[[np.ndarray], float],
                            x_adv: np.ndarray, mask: np.ndarray,
                            nes_config: NesConfig, tile: int = 1) -> np.ndarray:
    """NES gradient of the objective at x_adv over a coarse probe basis.

    Probes perturb `tile` x `tile` pixel blocks coherently (and only on
    mask-selected frames, so every query stays a sparse perturbation of
    x_adv); the estimate is broadcast back to pixel resolution. tile=1 probes
    every pixel independently.
    """
    t, h, w, c = x_adv.shape
    if h % tile or w % tile:
        raise ValueError("probe_tile must divide frame height and width")
    small_mask = mask[:, ::tile, ::tile, :]

    def tiled_objective(u: np.ndarray) -> float:
        bump = np.repeat(np.repeat(u * small_mask, tile, axis=1), tile, axis=2)
        return objective(x_adv + bump)

    origin = np.zeros((t, h // tile, w // tile, c))
    grad = nes_gradient(tiled_objective, origin, nes_config) * small_mask
    return np.repeat(np.repeat(grad, tile, axis=1), tile, axis=2)


def _epoch_masks(agent: Agent | None, feats: np.ndarray, t_frames: int,
                 cfg: AttackConfig, epoch: int):
    """Sample this epoch's action vectors; the first one is executed."""
    if agent is None:
        return None, np.ones(t_frames, dtype=np.int64)
    probs = policy_forward(agent.theta, feats)
    actions = [sample_actions(probs, mix_seed(cfg.seed, 11, epoch, n))
               for n in range(cfg.episodes)]
    return actions, actions[0]


def _finish_epoch(agent: Agent | None, feats: np.ndarray, actions_list,
                  exec_actions: np.ndarray, attack_reward: float,
                  lr: float) -> float:
    """Score episodes, update the agent if trainable, return executed reward."""
    weights = agent.reward_weights if agent is not None else RewardWeights()

    def episode_reward(actions: np.ndarray) -> float:
        sel = selected_indices(actions)
        return combined_reward(reward_diversity(feats, sel),
                               reward_representative(feats, sel),
                               attack_reward, weights)

    executed = episode_reward(exec_actions)
    if agent is not None and agent.trainable:
        episodes = [(a, executed if i == 0 else episode_reward(a))
                    for i, a in enumerate(actions_list)]
        agent.update(episodes, feats, lr)
    return executed


def untargeted_attack(oracle: QueryOracle, video, label: int,
                      agent: Agent | None = None,
                      config: AttackConfig | None = None,
                      lr_schedule: Callable[[int], float] | None = None) -> AttackResult:
    """Push the clip out of class `label` inside the epsilon_adv ball."""
    cfg = config or AttackConfig()
    x = _frames_of(video)
    schedule = lr_schedule or (lambda epoch: agent_lr_schedule(0, epoch))
    base_nes = cfg.nes or NesConfig(sigma=SIGMA_UNTARGETED)

    q_start = oracle.query_count
    top, _ = predict_top1(oracle, x)
    if top != label:
        raise ValueError(f"oracle answers {top}, not {label}; nothing to attack")

    feats = extract_features(x).features
    best: tuple[float, np.ndarray, np.ndarray] | None = None
    last: tuple[np.ndarray, np.ndarray] | None = None
    trace: list[float] = []
    attack_rewards: list[float] = []
    epochs_used = 0

    for epoch in range(cfg.max_epochs):
        epochs_used = epoch + 1
        actions_list, exec_actions = _epoch_masks(agent, feats, x.shape[0], cfg, epoch)
        mask = build_mask(exec_actions, x.shape)
        objective = masked_objective(oracle, label)
        q0 = oracle.query_count
        x_adv = x.copy()
        fooled = False
        it = 0
        while oracle.query_count - q0 <= cfg.query_limit:
            nes_cfg = replace(base_nes, seed=mix_seed(cfg.seed, 13, epoch, it))
            grad = estimate_step_direction(objective, x_adv, mask, nes_cfg,
                                           cfg.probe_tile)
            x_adv = clip_ball(x_adv - cfg.step_size * np.sign(grad * mask),
                              x, cfg.epsilon_adv)
            top, _ = predict_top1(oracle, x_adv)
            if top != label:
                fooled = True
                break
            it += 1

        epoch_queries = oracle.query_count - q0
        mean_pert = float(np.abs(x_adv - x).mean())
        attack_reward = reward_attack(AttackFeedback(epoch_queries, mean_pert)) \
            if fooled else FAILURE_REWARD
        attack_rewards.append(attack_reward)
        trace.append(_finish_epoch(agent, feats, actions_list, exec_actions,
                                   attack_reward, schedule(epoch)))
        last = (x_adv, exec_actions)
        if fooled:
            best = (mean_pert, x_adv.copy(), exec_actions.copy())
            break

    if best is not None:
        _, adv, adv_actions = best
    else:
        adv, adv_actions = last
    return AttackResult(
        adversarial=adv, success=best is not None,
        queries=oracle.query_count - q_start,
        map=compute_map(x, adv), sparsity=compute_sparsity(adv_actions),
        selected_frames=selected_indices(adv_actions),
        epochs_used=epochs_used, reward_trace=trace,
        attack_rewards=attack_rewards)


def targeted_attack(oracle: QueryOracle, video, target_label: int, target_video,
                    agent: Agent | None = None,
                    config: AttackConfig | None = None,
                    surrogate: ClassifierParams | None = None,
                    lr_schedule: Callable[[int], float] | None = None) -> AttackResult:
    """Drive the clip into `target_label` while shrinking the ball to
    epsilon_adv, starting each epoch from the target-video composite."""
    cfg = config or AttackConfig(targeted=True)
    x = _frames_of(video)
    x_target = _frames_of(target_video)
    if x.shape != x_target.shape:
        raise ValueError("target video shape mismatch")
    schedule = lr_schedule or (lambda epoch: agent_lr_schedule(0, epoch))
    base_nes = cfg.nes or NesConfig(sigma=SIGMA_TARGETED)

    q_start = oracle.query_count
    top, _ = predict_top1(oracle, x_target)
    if top != target_label:
        raise ValueError("target video is not classified as the target label")

    feats = extract_features(x).features
    best: tuple[float, np.ndarray, np.ndarray] | None = None
    last: tuple[np.ndarray, np.ndarray] | None = None
    trace: list[float] = []
    attack_rewards: list[float] = []
    epochs_used = 0

    for epoch in range(cfg.max_epochs):
        epochs_used = epoch + 1
        actions_list, exec_actions = _epoch_masks(agent, feats, x.shape[0], cfg, epoch)
        mask = build_mask(exec_actions, x.shape)
        objective = masked_objective(oracle, target_label)
        q0 = oracle.query_count

        eps = 1.0
        x_adv = x * (1.0 - mask) + x_target * mask
        top, _ = predict_top1(oracle, x_adv)
        adversarial_now = top == target_label
        steps = StepSizeScheduler(cfg.step_size, cfg.step_window, cfg.step_floor)
        shrinker = EpsDecayScheduler(cfg.epsilon_decay, floor=cfg.decay_floor)
        stall = 0
        it = 0
        while eps > cfg.epsilon_adv and stall < cfg.stall_limit \
                and oracle.query_count - q0 <= cfg.query_limit:
            probe_at = x_adv
            if surrogate is not None:
                push = surrogate_gradient(surrogate, x_adv, target_label, targeted=True)
                probe_at = x_adv + steps.alpha * np.sign(push)
            nes_cfg = replace(base_nes, seed=mix_seed(cfg.seed, 13, epoch, it))
            grad = -estimate_step_direction(objective, probe_at, mask, nes_cfg,
                                            cfg.probe_tile)
            step = steps.alpha * np.sign(grad * mask)

            accepted = shrunk = False
            smaller = max(eps - shrinker.decay, 0.0)
            candidate = clip_ball(x_adv - step, x, smaller)
            top, _ = predict_top1(oracle, candidate)
            if top == target_label:
                x_adv, eps = candidate, smaller
                accepted = shrunk = adversarial_now = True
            else:
                candidate = clip_ball(x_adv - step, x, eps)
                top, _ = predict_top1(oracle, candidate)
                if top == target_label:
                    x_adv = candidate
                    accepted = adversarial_now = True
            steps.update(accepted)
            shrinker.update(shrunk)
            stall = 0 if accepted else stall + 1
            it += 1

        reached = eps <= cfg.epsilon_adv
        epoch_queries = oracle.query_count - q0
        mean_pert = float(np.abs(x_adv - x).mean())
        attack_reward = reward_attack(AttackFeedback(epoch_queries, mean_pert)) \
            if adversarial_now else FAILURE_REWARD
        attack_rewards.append(attack_reward)
        trace.append(_finish_epoch(agent, feats, actions_list, exec_actions,
                                   attack_reward, schedule(epoch)))
        last = (x_adv, exec_actions)
        if reached and (best is None or mean_pert < best[0]):
            best = (mean_pert, x_adv.copy(), exec_actions.copy())
        if reached and (agent is None or not agent.trainable):
            break

    if best is not None:
        _, adv, adv_actions = best
    else:
        adv, adv_actions = last
    return AttackResult(
        adversarial=adv, success=best is not None,
        queries=oracle.query_count - q_start,
        map=compute_map(x, adv), sparsity=compute_sparsity(adv_actions),
        selected_frames=selected_indices(adv_actions),
        epochs_used=epochs_used, reward_trace=trace,
        attack_rewards=attack_rewards)
