"""Two small video classifiers, their training loop, and the query oracle.

``temporal_conv``: one valid 3x3x3 conv layer (K filters), ReLU, global
average pooling, linear head, softmax. ``frame_recurrent``: per-frame flatten,
linear encoder, tanh recurrence, linear head on the final state, softmax.

Gradients are written out by hand (the conv ones ride the shared kernels) and
are checked against finite differences in the test suite. The attack side only
ever sees ``QueryOracle``/``predict_top1``: top-1 label and probability, one
counter tick per call.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from ._util import mix_seed
from .kernels import conv3d_forward, conv3d_input_grad, conv3d_weight_grad
from .videodata import Dataset, Video

TEMPORAL_CONV = "temporal_conv"
FRAME_RECURRENT = "frame_recurrent"
ARCHS = (TEMPORAL_CONV, FRAME_RECURRENT)

MODEL_MAGIC = b"SVAM"
_ARCH_TAGS = {TEMPORAL_CONV: 0, FRAME_RECURRENT: 1}
_TAG_ARCHS = {v: k for k, v in _ARCH_TAGS.items()}

_CONV_KEYS = ("conv_w", "conv_b", "fc_w", "fc_b")
_RNN_KEYS = ("in_w", "rec_w", "rec_b", "out_w", "out_b")

_PROB_FLOOR = 1e-12


@dataclass
class ClassifierParams:
    arch: str
    class_count: int
    weights: dict[str, np.ndarray]

    def __post_init__(self) -> None:
        if self.arch not in ARCHS:
            raise ValueError(f"unknown arch {self.arch!r}")
        expected = _CONV_KEYS if self.arch == TEMPORAL_CONV else _RNN_KEYS
        if tuple(self.weights) != expected:
            raise ValueError(f"weights must have keys {expected}")
        self.weights = {k: np.asarray(v, dtype=np.float64)
                        for k, v in self.weights.items()}

    def copy(self) -> "ClassifierParams":
        return ClassifierParams(self.arch, self.class_count,
                                {k: v.copy() for k, v in self.weights.items()})


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    batch_size: int = 8
    learning_rate: float = 0.5
    seed: int = 0

    def __post_init__(self) -> None:
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("bad epochs/batch_size")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


@dataclass
class QueryOracle:
    """Black-box wrapper; counts every prediction and never resets on its own."""

    params: ClassifierParams
    query_count: int = 0

    def predict(self, video) -> tuple[int, float]:
        """Top-1 (label, probability); ties break to the lowest class index."""
        self.query_count += 1
        probs = forward(self.params, video)
        label = int(np.argmax(probs))
        return label, float(probs[label])

    def reset(self) -> None:
        self.query_count = 0


def init_params(arch: str, class_count: int, frame_shape: tuple[int, int, int, int],
                seed: int = 0, filters: int = 8, hidden: int = 32) -> ClassifierParams:
    if class_count < 2:
        raise ValueError("need at least 2 classes")
    t, h, w, c = frame_shape
    rng = np.random.default_rng(mix_seed(seed, _ARCH_TAGS.get(arch, 255)))
    if arch == TEMPORAL_CONV:
        if min(t, h, w) < 3:
            raise ValueError("temporal_conv needs T,H,W >= 3")
        fan_in = 27 * c
        weights = {
            "conv_w": rng.normal(0.0, np.sqrt(2.0 / fan_in), (filters, 3, 3, 3, c)),
            "conv_b": np.zeros(filters),
            "fc_w": rng.normal(0.0, np.sqrt(1.0 / filters), (class_count, filters)),
            "fc_b": np.zeros(class_count),
        }
    elif arch == FRAME_RECURRENT:
        flat = h * w * c
        weights = {
            "in_w": rng.normal(0.0, np.sqrt(1.0 / flat), (hidden, flat)),
            "rec_w": rng.normal(0.0, np.sqrt(1.0 / hidden), (hidden, hidden)),
            "rec_b": np.zeros(hidden),
            "out_w": rng.normal(0.0, np.sqrt(1.0 / hidden), (class_count, hidden)),
            "out_b": np.zeros(class_count),
        }
    else:
        raise ValueError(f"unknown arch {arch!r}")
    return ClassifierParams(arch, class_count, weights)


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max()
    e = np.exp(shifted)
    return e / e.sum()


def _as_frames(video) -> np.ndarray:
    frames = video.frames if isinstance(video, Video) else np.asarray(video, dtype=np.float64)
    if frames.ndim != 4:
        raise ValueError(f"expected (T,H,W,C) input, got shape {frames.shape}")
    return frames


def _conv_forward_cache(params: ClassifierParams, frames: np.ndarray):
    w = params.weights
    z = conv3d_forward(frames, w["conv_w"], w["conv_b"])
    act = np.maximum(z, 0.0)
    pooled = act.mean(axis=(0, 1, 2))
    logits = w["fc_w"] @ pooled + w["fc_b"]
    return _softmax(logits), (z, pooled)


def _rnn_forward_cache(params: ClassifierParams, frames: np.ndarray):
    w = params.weights
    t = frames.shape[0]
    flat = frames.reshape(t, -1)
    if flat.shape[1] != w["in_w"].shape[1]:
        raise ValueError("frame size does not match model input width")
    hidden = w["rec_b"].shape[0]
    states = np.empty((t, hidden))
    s = np.zeros(hidden)
    for step in range(t):
        s = np.tanh(w["in_w"] @ flat[step] + w["rec_w"] @ s + w["rec_b"])
        states[step] = s
    logits = w["out_w"] @ s + w["out_b"]
    return _softmax(logits), (flat, states)


def forward(params: ClassifierParams, video) -> np.ndarray:
    """Class probability vector; accepts raw off-range arrays (NES probes)."""
    frames = _as_frames(video)
    if params.arch == TEMPORAL_CONV:
        probs, _ = _conv_forward_cache(params, frames)
    else:
        probs, _ = _rnn_forward_cache(params, frames)
    return probs


def predict_top1(oracle: QueryOracle, video) -> tuple[int, float]:
    """Top-1 (label, probability); ties break to the lowest class index."""
    return oracle.predict(video)


def _logit_grads(params: ClassifierParams, frames: np.ndarray, dlogits: np.ndarray,
                 cache, want_input: bool):
    """Push a gradient on the logits back to the weights (and optionally x)."""
    w = params.weights
    grads: dict[str, np.ndarray] = {}
    if params.arch == TEMPORAL_CONV:
        z, pooled = cache
        grads["fc_w"] = np.outer(dlogits, pooled)
        grads["fc_b"] = dlogits.copy()
        dpooled = w["fc_w"].T @ dlogits
        cells = z.shape[0] * z.shape[1] * z.shape[2]
        dz = np.broadcast_to(dpooled / cells, z.shape) * (z > 0.0)
        grads["conv_w"] = conv3d_weight_grad(frames, dz)
        grads["conv_b"] = dz.sum(axis=(0, 1, 2))
        dx = conv3d_input_grad(dz, w["conv_w"]) if want_input else None
    else:
        flat, states = cache
        t, hidden = states.shape
        grads["out_w"] = np.outer(dlogits, states[-1])
        grads["out_b"] = dlogits.copy()
        grads["in_w"] = np.zeros_like(w["in_w"])
        grads["rec_w"] = np.zeros_like(w["rec_w"])
        grads["rec_b"] = np.zeros_like(w["rec_b"])
        dflat = np.zeros_like(flat) if want_input else None
        ds = w["out_w"].T @ dlogits
        for step in range(t - 1, -1, -1):
            dpre = ds * (1.0 - states[step] ** 2)
            prev = states[step - 1] if step > 0 else np.zeros(hidden)
            grads["in_w"] += np.outer(dpre, flat[step])
            grads["rec_w"] += np.outer(dpre, prev)
            grads["rec_b"] += dpre
            if want_input:
                dflat[step] = w["in_w"].T @ dpre
            ds = w["rec_w"].T @ dpre
        dx = dflat.reshape(frames.shape) if want_input else None
    return grads, dx


def cross_entropy(params: ClassifierParams, video, label: int) -> float:
    probs = forward(params, video)
    return float(-np.log(max(probs[label], _PROB_FLOOR)))


def loss_and_grads(params: ClassifierParams, video, label: int):
    """Cross-entropy and its weight gradients for one example."""
    frames = _as_frames(video)
    if params.arch == TEMPORAL_CONV:
        probs, cache = _conv_forward_cache(params, frames)
    else:
        probs, cache = _rnn_forward_cache(params, frames)
    loss = float(-np.log(max(probs[label], _PROB_FLOOR)))
    dlogits = probs.copy()
    dlogits[label] -= 1.0
    grads, _ = _logit_grads(params, frames, dlogits, cache, want_input=False)
    return loss, grads


def surrogate_gradient(params: ClassifierParams, video, label: int,
                       targeted: bool = True) -> np.ndarray:
    """d/dx of the attack objective: log P(label|x), negated when untargeted.

    Stepping x along sign() of this output raises the target-class probability
    (targeted) or suppresses the true class (untargeted).
    """
    frames = _as_frames(video)
    if params.arch == TEMPORAL_CONV:
        probs, cache = _conv_forward_cache(params, frames)
    else:
        probs, cache = _rnn_forward_cache(params, frames)
    dlogits = -probs
    dlogits[label] += 1.0
    if not targeted:
        dlogits = -dlogits
    _, dx = _logit_grads(params, frames, dlogits, cache, want_input=True)
    return dx


def train(dataset: Dataset, arch: str, config: TrainConfig | None = None,
          filters: int = 8, hidden: int = 32) -> ClassifierParams:
    """Minibatch SGD on cross-entropy; deterministic given config.seed."""
    config = config or TrainConfig()
    params = init_params(arch, dataset.class_count, dataset.video_shape,
                         seed=mix_seed(config.seed, 1), filters=filters, hidden=hidden)
    rng = np.random.default_rng(mix_seed(config.seed, 2))
    order = np.arange(len(dataset))
    for _ in range(config.epochs):
        rng.shuffle(order)
        for start in range(0, len(order), config.batch_size):
            batch = order[start:start + config.batch_size]
            acc: dict[str, np.ndarray] = {}
            for idx in batch:
                item = dataset.items[idx]
                loss, grads = loss_and_grads(params, item.video, item.label)
                if not np.isfinite(loss):
                    raise RuntimeError("training diverged: non-finite loss")
                for key, g in grads.items():
                    acc[key] = acc.get(key, 0.0) + g
            scale = config.learning_rate / len(batch)
            for key, g in acc.items():
                params.weights[key] -= scale * g
    return params


def mean_loss(params: ClassifierParams, dataset: Dataset) -> float:
    return float(np.mean([cross_entropy(params, it.video, it.label)
                          for it in dataset.items]))


def accuracy(params: ClassifierParams, dataset: Dataset) -> float:
    hits = sum(int(np.argmax(forward(params, it.video)) == it.label)
               for it in dataset.items)
    return hits / len(dataset)


def save_model(path, params: ClassifierParams) -> None:
    w = params.weights
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<B", _ARCH_TAGS[params.arch]))
        if params.arch == TEMPORAL_CONV:
            filters, _, _, _, channels = w["conv_w"].shape
            fh.write(struct.pack("<III", filters, channels, params.class_count))
            order = _CONV_KEYS
        else:
            hidden, flat = w["in_w"].shape
            fh.write(struct.pack("<III", hidden, flat, params.class_count))
            order = _RNN_KEYS
        for key in order:
            fh.write(np.ascontiguousarray(w[key], dtype="<f4").tobytes())


def _read_exact(fh, n: int) -> bytes:
    raw = fh.read(n)
    if len(raw) != n:
        raise ValueError("truncated model file")
    return raw


def load_model(path) -> ClassifierParams:
    with open(path, "rb") as fh:
        if fh.read(4) != MODEL_MAGIC:
            raise ValueError("not a model file")
        (tag,) = struct.unpack("<B", _read_exact(fh, 1))
        if tag not in _TAG_ARCHS:
            raise ValueError(f"unknown arch tag {tag}")
        arch = _TAG_ARCHS[tag]
        a, b, cls = struct.unpack("<III", _read_exact(fh, 12))
        if arch == TEMPORAL_CONV:
            shapes = {"conv_w": (a, 3, 3, 3, b), "conv_b": (a,),
                      "fc_w": (cls, a), "fc_b": (cls,)}
            order = _CONV_KEYS
        else:
            shapes = {"in_w": (a, b), "rec_w": (a, a), "rec_b": (a,),
                      "out_w": (cls, a), "out_b": (cls,)}
            order = _RNN_KEYS
        weights = {}
        for key in order:
            shape = shapes[key]
            n = int(np.prod(shape))
            raw = _read_exact(fh, 4 * n)
            weights[key] = np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(shape)
    return ClassifierParams(arch, cls, weights)
