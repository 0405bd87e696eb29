"""Frame-selection policy: BiLSTM + linear head + sigmoid, trained by
REINFORCE with a running-mean baseline and Adam ascent.

The policy maps a (T, D) feature sequence to T independent Bernoulli
probabilities. Backpropagation through time is written out by hand; the score
gradient uses the logistic simplification dL/ds_t = a_t - p_t. Sampling,
updates, and initialization are all deterministic given explicit seeds.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ._util import mix_seed
from .rewards import RewardWeights, combined_reward, reward_diversity, \
    reward_representative, sparsity_penalty
from .videodata import FEATURE_DIM, FeatureSequence, LabeledVideo, Video, \
    extract_features

AGENT_MAGIC = b"SVAA"

_KEYS = ("fwd_wx", "fwd_wh", "fwd_b", "bwd_wx", "bwd_wh", "bwd_b",
         "fc_w", "fc_b")

_PROB_CLAMP = 1e-6
_INIT_SPAN = 0.1

DEFAULT_EPISODES = 5
DEFAULT_HIDDEN = 128

HEAD_VIDEOS = 20
HEAD_EPOCHS = 20
TAIL_EPOCHS = 1
LR_INITIAL = 1e-5
LR_DECAYED = 1e-6
LR_DECAY_EPOCH = 15


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-np.clip(x, -60.0, 60.0)))


@dataclass
class PolicyParams:
    input_dim: int
    hidden: int
    tensors: dict[str, np.ndarray]

    def __post_init__(self) -> None:
        d, h = self.input_dim, self.hidden
        expected = {
            "fwd_wx": (4 * h, d), "fwd_wh": (4 * h, h), "fwd_b": (4 * h,),
            "bwd_wx": (4 * h, d), "bwd_wh": (4 * h, h), "bwd_b": (4 * h,),
            "fc_w": (2 * h,), "fc_b": (1,),
        }
        if tuple(self.tensors) != _KEYS:
            raise ValueError(f"tensors must have keys {_KEYS}")
        for key, shape in expected.items():
            arr = np.asarray(self.tensors[key], dtype=np.float64)
            if arr.shape != shape:
                raise ValueError(f"{key}: expected shape {shape}, got {arr.shape}")
            self.tensors[key] = arr

    def copy(self) -> "PolicyParams":
        return PolicyParams(self.input_dim, self.hidden,
                            {k: v.copy() for k, v in self.tensors.items()})


def init_policy(input_dim: int = FEATURE_DIM, hidden: int = DEFAULT_HIDDEN,
                seed: int = 0) -> PolicyParams:
    """Uniform(-0.1, 0.1) weights, zero biases."""
    rng = np.random.default_rng(mix_seed(seed, 3))
    span = _INIT_SPAN
    tensors = {}
    for side in ("fwd", "bwd"):
        tensors[f"{side}_wx"] = rng.uniform(-span, span, (4 * hidden, input_dim))
        tensors[f"{side}_wh"] = rng.uniform(-span, span, (4 * hidden, hidden))
        tensors[f"{side}_b"] = np.zeros(4 * hidden)
    tensors["fc_w"] = rng.uniform(-span, span, 2 * hidden)
    tensors["fc_b"] = np.zeros(1)
    return PolicyParams(input_dim, hidden, tensors)


def _as_features(feats) -> np.ndarray:
    if isinstance(feats, FeatureSequence):
        return feats.features
    return np.asarray(feats, dtype=np.float64)


def _lstm_forward(wx: np.ndarray, wh: np.ndarray, b: np.ndarray,
                  inputs: np.ndarray):
    hidden = wh.shape[1]
    steps = inputs.shape[0]
    outputs = np.empty((steps, hidden))
    cache = []
    h = np.zeros(hidden)
    c = np.zeros(hidden)
    for t in range(steps):
        z = wx @ inputs[t] + wh @ h + b
        gi = _sigmoid(z[:hidden])
        gf = _sigmoid(z[hidden:2 * hidden])
        gg = np.tanh(z[2 * hidden:3 * hidden])
        go = _sigmoid(z[3 * hidden:])
        c_new = gf * c + gi * gg
        tanh_c = np.tanh(c_new)
        cache.append((inputs[t], h, c, gi, gf, gg, go, tanh_c))
        h = go * tanh_c
        c = c_new
        outputs[t] = h
    return outputs, cache


def _lstm_backward(wx: np.ndarray, wh: np.ndarray, cache, dout: np.ndarray):
    hidden = wh.shape[1]
    dwx = np.zeros_like(wx)
    dwh = np.zeros_like(wh)
    db = np.zeros(4 * hidden)
    dh_next = np.zeros(hidden)
    dc_next = np.zeros(hidden)
    for t in range(len(cache) - 1, -1, -1):
        x_t, h_prev, c_prev, gi, gf, gg, go, tanh_c = cache[t]
        dh = dout[t] + dh_next
        do = dh * tanh_c
        dc = dh * go * (1.0 - tanh_c ** 2) + dc_next
        di = dc * gg
        df = dc * c_prev
        dg = dc * gi
        dc_next = dc * gf
        dz = np.concatenate([di * gi * (1.0 - gi), df * gf * (1.0 - gf),
                             dg * (1.0 - gg ** 2), do * go * (1.0 - go)])
        dwx += np.outer(dz, x_t)
        dwh += np.outer(dz, h_prev)
        db += dz
        dh_next = wh.T @ dz
    return dwx, dwh, db


def _forward_cache(theta: PolicyParams, feats: np.ndarray):
    t = theta.tensors
    fwd_out, fwd_cache = _lstm_forward(t["fwd_wx"], t["fwd_wh"], t["fwd_b"], feats)
    bwd_out, bwd_cache = _lstm_forward(t["bwd_wx"], t["bwd_wh"], t["bwd_b"],
                                       feats[::-1])
    # re-align the reversed pass so row t describes frame t in both halves
    h_cat = np.hstack([fwd_out, bwd_out[::-1]])
    scores = h_cat @ t["fc_w"] + t["fc_b"][0]
    return _sigmoid(scores), h_cat, fwd_cache, bwd_cache


def policy_forward(theta: PolicyParams, feats) -> np.ndarray:
    """Per-frame selection probabilities, shape (T,)."""
    probs, _, _, _ = _forward_cache(theta, _as_features(feats))
    return probs


def _grads_from_dscore(theta: PolicyParams, h_cat: np.ndarray, fwd_cache,
                       bwd_cache, dscore: np.ndarray) -> dict[str, np.ndarray]:
    t = theta.tensors
    hidden = theta.hidden
    grads = {"fc_w": h_cat.T @ dscore, "fc_b": np.array([dscore.sum()])}
    dh_cat = np.outer(dscore, t["fc_w"])
    dwx, dwh, db = _lstm_backward(t["fwd_wx"], t["fwd_wh"], fwd_cache,
                                  dh_cat[:, :hidden])
    grads["fwd_wx"], grads["fwd_wh"], grads["fwd_b"] = dwx, dwh, db
    dwx, dwh, db = _lstm_backward(t["bwd_wx"], t["bwd_wh"], bwd_cache,
                                  dh_cat[::-1, hidden:])
    grads["bwd_wx"], grads["bwd_wh"], grads["bwd_b"] = dwx, dwh, db
    return grads


def action_log_prob(probs: np.ndarray, actions: np.ndarray) -> float:
    """Joint Bernoulli log-likelihood with probabilities clamped away from
    0/1 so the value stays finite."""
    p = np.clip(np.asarray(probs, dtype=np.float64), _PROB_CLAMP, 1.0 - _PROB_CLAMP)
    a = np.asarray(actions, dtype=np.float64)
    return float(np.sum(a * np.log(p) + (1.0 - a) * np.log(1.0 - p)))


def logprob_grad(theta: PolicyParams, feats, actions: np.ndarray) -> dict[str, np.ndarray]:
    """Gradient of log pi(actions | feats) w.r.t. every policy tensor."""
    x = _as_features(feats)
    probs, h_cat, fwd_cache, bwd_cache = _forward_cache(theta, x)
    dscore = np.asarray(actions, dtype=np.float64) - probs
    return _grads_from_dscore(theta, h_cat, fwd_cache, bwd_cache, dscore)


def sample_actions(probs: np.ndarray, seed: int) -> np.ndarray:
    """Bernoulli draw per frame; an empty draw falls back to the single most
    probable frame so a selection is never empty."""
    p = np.asarray(probs, dtype=np.float64)
    rng = np.random.default_rng(seed)
    actions = (rng.random(p.shape[0]) < p).astype(np.int64)
    if actions.sum() == 0:
        actions[int(np.argmax(p))] = 1
    return actions


def selected_indices(actions: np.ndarray) -> list[int]:
    return [int(i) for i in np.flatnonzero(np.asarray(actions))]


@dataclass
class BaselineState:
    """Running mean of every episode reward seen so far (use, then update)."""

    value: float = 0.0
    count: int = 0

    def update(self, rewards: Sequence[float]) -> None:
        for r in rewards:
            self.count += 1
            self.value += (float(r) - self.value) / self.count


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def init(cls, theta: PolicyParams) -> "AdamState":
        return cls(m={k: np.zeros_like(t) for k, t in theta.tensors.items()},
                   v={k: np.zeros_like(t) for k, t in theta.tensors.items()})


def adam_ascent_step(theta: PolicyParams, grads: dict[str, np.ndarray],
                     state: AdamState, lr: float) -> None:
    """One maximizing Adam step, in place."""
    state.step += 1
    bc1 = 1.0 - state.beta1 ** state.step
    bc2 = 1.0 - state.beta2 ** state.step
    for key, tensor in theta.tensors.items():
        g = grads[key]
        state.m[key] = state.beta1 * state.m[key] + (1.0 - state.beta1) * g
        state.v[key] = state.beta2 * state.v[key] + (1.0 - state.beta2) * g * g
        tensor += lr * (state.m[key] / bc1) / (np.sqrt(state.v[key] / bc2) + state.eps)


def reinforce_update(theta: PolicyParams, episodes: Sequence[tuple[np.ndarray, float]],
                     feats, baseline: BaselineState, adam: AdamState, lr: float,
                     extra_ascent_grad: dict[str, np.ndarray] | None = None) -> PolicyParams:
    """One policy-gradient ascent step from N (actions, reward) episodes.

    The baseline is read before it absorbs this batch's rewards. The optional
    extra term joins the ascent gradient before the Adam step (used for
    deterministic penalties).
    """
    if not episodes:
        raise ValueError("need at least one episode")
    x = _as_features(feats)
    probs, h_cat, fwd_cache, bwd_cache = _forward_cache(theta, x)
    b = baseline.value
    n = len(episodes)
    total = {k: np.zeros_like(t) for k, t in theta.tensors.items()}
    for actions, reward in episodes:
        dscore = (np.asarray(actions, dtype=np.float64) - probs) * ((reward - b) / n)
        grads = _grads_from_dscore(theta, h_cat, fwd_cache, bwd_cache, dscore)
        for key, g in grads.items():
            total[key] += g
    if extra_ascent_grad is not None:
        for key, g in extra_ascent_grad.items():
            total[key] = total[key] + g
    for key, g in total.items():
        if not np.isfinite(g).all():
            raise RuntimeError(f"non-finite policy gradient in {key}")
    adam_ascent_step(theta, total, adam, lr)
    baseline.update([r for _, r in episodes])
    return theta


def sparsity_penalty_grad(theta: PolicyParams, feats,
                          target_sparsity: float) -> dict[str, np.ndarray]:
    """Gradient of |mean(p) + S - 1| w.r.t. the policy tensors."""
    x = _as_features(feats)
    probs, h_cat, fwd_cache, bwd_cache = _forward_cache(theta, x)
    gap = probs.mean() + target_sparsity - 1.0
    dscore = (np.sign(gap) / probs.shape[0]) * probs * (1.0 - probs)
    return _grads_from_dscore(theta, h_cat, fwd_cache, bwd_cache, dscore)


def agent_lr_schedule(video_index: int, epoch: int, head_videos: int = HEAD_VIDEOS,
                      initial: float = LR_INITIAL, decayed: float = LR_DECAYED,
                      decay_epoch: int = LR_DECAY_EPOCH) -> float:
    """Online curriculum: early videos get a two-phase rate, later a flat one."""
    if video_index < head_videos:
        return initial if epoch < decay_epoch else decayed
    return decayed


def epochs_for_video(video_index: int, head_videos: int = HEAD_VIDEOS,
                     head_epochs: int = HEAD_EPOCHS,
                     tail_epochs: int = TAIL_EPOCHS) -> int:
    return head_epochs if video_index < head_videos else tail_epochs


def sval_lr_schedule(epoch: int, initial: float = LR_INITIAL,
                     decayed: float = LR_DECAYED,
                     decay_epoch: int = LR_DECAY_EPOCH) -> float:
    return initial if epoch < decay_epoch else decayed


@dataclass
class Agent:
    """Policy plus optimizer/baseline state, as carried across attacks."""

    theta: PolicyParams
    baseline: BaselineState = field(default_factory=BaselineState)
    adam: AdamState | None = None
    reward_weights: RewardWeights = field(default_factory=RewardWeights)
    trainable: bool = True

    def __post_init__(self) -> None:
        if self.adam is None:
            self.adam = AdamState.init(self.theta)

    @classmethod
    def fresh(cls, input_dim: int = FEATURE_DIM, hidden: int = DEFAULT_HIDDEN,
              seed: int = 0, reward_weights: RewardWeights | None = None,
              trainable: bool = True) -> "Agent":
        return cls(theta=init_policy(input_dim, hidden, seed),
                   reward_weights=reward_weights or RewardWeights(),
                   trainable=trainable)

    def probabilities(self, feats) -> np.ndarray:
        return policy_forward(self.theta, feats)

    def update(self, episodes, feats, lr: float) -> None:
        reinforce_update(self.theta, episodes, feats, self.baseline,
                         self.adam, lr)


def _video_features(videos) -> list[np.ndarray]:
    feats = []
    for v in videos:
        if isinstance(v, LabeledVideo):
            v = v.video
        if isinstance(v, (Video, np.ndarray)):
            v = extract_features(v)
        feats.append(_as_features(v))
    return feats


def train_sval(videos, target_sparsity: float, *, episodes: int = DEFAULT_EPISODES,
               beta: float = 1.0, epochs: int = 20, hidden: int = DEFAULT_HIDDEN,
               seed: int = 0, reward_weights: RewardWeights | None = None,
               lr_schedule: Callable[[int], float] | None = None) -> PolicyParams:
    """Offline agent training: intrinsic rewards only (no oracle), plus the
    beta-weighted sparsity penalty pulling mean selection density to 1 - S."""
    if not 0.0 <= target_sparsity <= 1.0:
        raise ValueError("target sparsity must lie in [0, 1]")
    if epochs < 0:
        raise ValueError("epochs must be non-negative")
    weights = reward_weights or RewardWeights()
    schedule = lr_schedule or sval_lr_schedule
    feature_list = _video_features(videos)
    if not feature_list:
        raise ValueError("need at least one training video")
    theta = init_policy(feature_list[0].shape[1], hidden, seed)
    baseline = BaselineState()
    adam = AdamState.init(theta)
    for epoch in range(epochs):
        lr = schedule(epoch)
        for vid_i, feats in enumerate(feature_list):
            probs = policy_forward(theta, feats)
            batch = []
            for n in range(episodes):
                actions = sample_actions(probs, mix_seed(seed, epoch, vid_i, n))
                sel = selected_indices(actions)
                reward = combined_reward(reward_diversity(feats, sel),
                                         reward_representative(feats, sel),
                                         0.0, weights)
                batch.append((actions, reward))
            penalty = sparsity_penalty_grad(theta, feats, target_sparsity)
            extra = {k: -beta * g for k, g in penalty.items()}
            reinforce_update(theta, batch, feats, baseline, adam, lr,
                             extra_ascent_grad=extra)
    return theta


def save_agent(path, theta: PolicyParams) -> None:
    with open(path, "wb") as fh:
        fh.write(AGENT_MAGIC)
        fh.write(struct.pack("<II", theta.input_dim, theta.hidden))
        for key in _KEYS:
            fh.write(np.ascontiguousarray(theta.tensors[key], dtype="<f4").tobytes())


def load_agent(path) -> PolicyParams:
    with open(path, "rb") as fh:
        if fh.read(4) != AGENT_MAGIC:
            raise ValueError("not an agent checkpoint")
        raw = fh.read(8)
        if len(raw) != 8:
            raise ValueError("truncated agent checkpoint")
        input_dim, hidden = struct.unpack("<II", raw)
        shapes = {
            "fwd_wx": (4 * hidden, input_dim), "fwd_wh": (4 * hidden, hidden),
            "fwd_b": (4 * hidden,),
            "bwd_wx": (4 * hidden, input_dim), "bwd_wh": (4 * hidden, hidden),
            "bwd_b": (4 * hidden,),
            "fc_w": (2 * hidden,), "fc_b": (1,),
        }
        tensors = {}
        for key in _KEYS:
            n = int(np.prod(shapes[key]))
            raw = fh.read(4 * n)
            if len(raw) != 4 * n:
                raise ValueError("truncated agent checkpoint")
            tensors[key] = np.frombuffer(raw, dtype="<f4").astype(np.float64) \
                .reshape(shapes[key])
    return PolicyParams(input_dim, hidden, tensors)
