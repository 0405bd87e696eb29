"""Experiment orchestration: config parsing, attack campaigns, reports.

A campaign attacks the first `video_count` correctly classified videos of a
dataset in one of three modes: `sva` (agent learns online while attacking),
`sval` (agent pre-trained on held-aside videos, frozen during attacks), or
`dense` (no agent, every frame perturbed). Results land in a CSV of per-video
rows plus a small summary side-car; aggregates are always recomputable from
the rows.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from functools import partial

import numpy as np

from ._util import mix_seed
from .agent import Agent, agent_lr_schedule, epochs_for_video, load_agent, \
    train_sval
from .attacker import AttackConfig, targeted_attack, untargeted_attack
from .metrics import compute_map, compute_sparsity  # re-exported  # noqa: F401
from .nes import SIGMA_TARGETED, SIGMA_UNTARGETED, NesConfig
from .threatmodel import QueryOracle, forward, load_model
from .videodata import Dataset, load_dataset

MODES = ("sva", "sval", "dense")

CSV_HEADER = "video_id,success,queries,map,sparsity,selected_frames"
GRID_HEADER = "sparsity,fooling_rate,mean_map"


class ConfigError(ValueError):
    """Bad experiment configuration (unknown key, bad value, missing input)."""


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: str = ""
    threat_model: str = ""
    surrogate_model: str = ""
    agent_checkpoint: str = ""
    output: str = ""
    mode: str = "sva"
    targeted: bool = False
    video_count: int = 10
    seed: int = 0
    epsilon_adv: float = 0.05
    epsilon_decay: float = 0.01
    step_size: float = 0.005
    query_limit: int = 30000
    nes_samples: int = 48
    nes_sigma: float = 0.0  # 0 means: pick the targeted/untargeted default
    episodes: int = 5
    stall_limit: int = 500
    step_window: int = 20
    probe_tile: int = 2
    head_videos: int = 20
    max_epochs_head: int = 20
    max_epochs_tail: int = 1
    agent_hidden: int = 128
    agent_lr_initial: float = 1e-5
    agent_lr_decayed: float = 1e-6
    agent_lr_decay_epoch: int = 15
    sval_sparsity: float = 0.5
    sval_epochs: int = 20
    sval_beta: float = 1.0
    sval_lr_initial: float = 1e-3
    sval_lr_decayed: float = 1e-4
    sval_lr_decay_epoch: int = 15
    sval_train_count: int = 10

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.video_count < 1:
            raise ConfigError("video_count must be >= 1")
        if self.nes_sigma < 0:
            raise ConfigError("nes_sigma must be positive (or 0 for default)")

    def attack_config(self, video_index: int) -> AttackConfig:
        sigma = self.nes_sigma or (SIGMA_TARGETED if self.targeted
                                   else SIGMA_UNTARGETED)
        if self.mode == "sva":
            max_epochs = epochs_for_video(video_index, self.head_videos,
                                          self.max_epochs_head,
                                          self.max_epochs_tail)
        else:
            max_epochs = self.max_epochs_tail
        return AttackConfig(
            epsilon_adv=self.epsilon_adv, epsilon_decay=self.epsilon_decay,
            step_size=self.step_size, query_limit=self.query_limit,
            nes=NesConfig(samples=self.nes_samples, sigma=sigma),
            targeted=self.targeted, max_epochs=max_epochs,
            episodes=self.episodes, stall_limit=self.stall_limit,
            step_window=self.step_window, probe_tile=self.probe_tile,
            seed=mix_seed(self.seed, 22, video_index))


_FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def _coerce(key: str, raw: str):
    kind = _FIELD_TYPES[key]
    raw = raw.strip()
    try:
        if kind == "bool":
            lowered = raw.lower()
            if lowered in ("true", "yes", "1"):
                return True
            if lowered in ("false", "no", "0"):
                return False
            raise ValueError(raw)
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r}") from exc


def parse_config(text: str) -> ExperimentConfig:
    """Flat `key = value` format; '#' comments; unknown keys are errors."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in _FIELD_TYPES:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = _coerce(key, raw)
    return ExperimentConfig(**values)


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


@dataclass
class ReportRow:
    video_id: int
    success: bool
    queries: int
    map: float
    sparsity: float
    selected: tuple[int, ...]


@dataclass
class Report:
    rows: list[ReportRow] = field(default_factory=list)

    @property
    def fooling_rate(self) -> float:
        if not self.rows:
            raise ValueError("empty report")
        return sum(r.success for r in self.rows) / len(self.rows)

    @property
    def mean_map(self) -> float | None:
        hits = [r.map for r in self.rows if r.success]
        return float(np.mean(hits)) if hits else None

    @property
    def mean_sparsity(self) -> float | None:
        hits = [r.sparsity for r in self.rows if r.success]
        return float(np.mean(hits)) if hits else None

    def to_csv(self) -> str:
        lines = [CSV_HEADER]
        for r in self.rows:
            sel = ";".join(str(i) for i in r.selected)
            lines.append(f"{r.video_id},{int(r.success)},{r.queries},"
                         f"{r.map!r},{r.sparsity!r},{sel}")
        return "\n".join(lines) + "\n"

    def summary(self) -> str:
        def fmt(value):
            return "n/a" if value is None else repr(float(value))

        return (f"videos = {len(self.rows)}\n"
                f"fooling_rate = {fmt(self.fooling_rate)}\n"
                f"mean_map = {fmt(self.mean_map)}\n"
                f"mean_sparsity = {fmt(self.mean_sparsity)}\n")

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_csv())
        with open(f"{path}.summary", "w", encoding="utf-8") as fh:
            fh.write(self.summary())

    @staticmethod
    def from_csv(text: str) -> "Report":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines or lines[0] != CSV_HEADER:
            raise ValueError("not a report CSV")
        rows = []
        for ln in lines[1:]:
            vid, success, queries, mean_ap, sparsity, sel = ln.split(",")
            selected = tuple(int(i) for i in sel.split(";")) if sel else ()
            rows.append(ReportRow(int(vid), success == "1", int(queries),
                                  float(mean_ap), float(sparsity), selected))
        return Report(rows)


def _eligible_items(dataset: Dataset, model) -> list[tuple[int, object]]:
    """(dataset index, item) pairs the model classifies correctly. Runs
    outside any oracle so report query counts stay attack-only."""
    out = []
    for idx, item in enumerate(dataset.items):
        if int(np.argmax(forward(model, item.video))) == item.label:
            out.append((idx, item))
    return out


def _build_agent(config: ExperimentConfig, eligible, agent_theta=None) -> Agent | None:
    if config.mode == "dense":
        return None
    if config.mode == "sva":
        return Agent.fresh(hidden=config.agent_hidden,
                           seed=mix_seed(config.seed, 21), trainable=True)
    # sval: explicit theta > checkpoint > fresh training on held-aside videos
    if agent_theta is None:
        if config.agent_checkpoint:
            agent_theta = load_agent(config.agent_checkpoint)
        else:
            lo = config.video_count
            hi = lo + config.sval_train_count
            train_items = eligible[lo:hi]
            if len(train_items) < config.sval_train_count:
                raise ConfigError(
                    "not enough eligible videos left to train the sval agent "
                    f"(need {config.sval_train_count}, have {len(train_items)})")
            schedule = lambda epoch: (  # noqa: E731
                config.sval_lr_initial if epoch < config.sval_lr_decay_epoch
                else config.sval_lr_decayed)
            agent_theta = train_sval(
                [item.video for _, item in train_items], config.sval_sparsity,
                episodes=config.episodes, beta=config.sval_beta,
                epochs=config.sval_epochs, hidden=config.agent_hidden,
                seed=mix_seed(config.seed, 23), lr_schedule=schedule)
    return Agent(theta=agent_theta, trainable=False)


def _pick_target(eligible, skip_idx: int, label: int):
    for idx, item in eligible:
        if idx != skip_idx and item.label != label:
            return item
    raise ConfigError("no eligible target video of a different class")


def run_experiment(config: ExperimentConfig, dataset: Dataset | None = None,
                   model=None, surrogate=None, agent_theta=None) -> Report:
    """Run one attack campaign and return (and optionally write) its report."""
    if dataset is None:
        if not config.dataset:
            raise ConfigError("config needs a dataset path")
        dataset = load_dataset(config.dataset)
    if model is None:
        if not config.threat_model:
            raise ConfigError("config needs a threat_model path")
        model = load_model(config.threat_model)
    if surrogate is None and config.surrogate_model:
        surrogate = load_model(config.surrogate_model)

    eligible = _eligible_items(dataset, model)
    if len(eligible) < config.video_count:
        raise ConfigError(f"only {len(eligible)} correctly classified videos, "
                          f"need {config.video_count}")
    targets = eligible[:config.video_count]
    agent = _build_agent(config, eligible, agent_theta)

    rows = []
    for attack_index, (dataset_idx, item) in enumerate(targets):
        oracle = QueryOracle(model)
        attack_cfg = config.attack_config(attack_index)
        lr_fn = partial(agent_lr_schedule, attack_index,
                        head_videos=config.head_videos,
                        initial=config.agent_lr_initial,
                        decayed=config.agent_lr_decayed,
                        decay_epoch=config.agent_lr_decay_epoch)
        if config.targeted:
            target_item = _pick_target(eligible, dataset_idx, item.label)
            result = targeted_attack(oracle, item.video, target_item.label,
                                     target_item.video, agent, attack_cfg,
                                     surrogate=surrogate, lr_schedule=lr_fn)
        else:
            result = untargeted_attack(oracle, item.video, item.label, agent,
                                       attack_cfg, lr_schedule=lr_fn)
        rows.append(ReportRow(dataset_idx, result.success, result.queries,
                              result.map, result.sparsity,
                              tuple(result.selected_frames)))

    report = Report(rows)
    if config.output:
        report.write(config.output)
    return report


@dataclass
class GridRow:
    sparsity: float
    fooling_rate: float
    mean_map: float | None  # only reported when every attack succeeded


def sparsity_grid_search(config: ExperimentConfig, sparsity_values,
                         dataset: Dataset | None = None,
                         model=None) -> list[GridRow]:
    """Sweep the sval target sparsity; MAP is comparable only at full FR."""
    values = list(sparsity_values)
    if not values:
        raise ConfigError("empty sparsity grid")
    for s in values:
        if not 0.0 <= s <= 1.0:
            raise ConfigError(f"sparsity {s} outside [0, 1]")
    if dataset is None:
        dataset = load_dataset(config.dataset)
    if model is None:
        model = load_model(config.threat_model)

    out = []
    for s in values:
        sub = replace(config, mode="sval", sval_sparsity=float(s), output="")
        report = run_experiment(sub, dataset=dataset, model=model)
        fr = report.fooling_rate
        out.append(GridRow(float(s), fr,
                           report.mean_map if fr == 1.0 else None))
    if config.output:
        write_grid_csv(config.output, out)
    return out


def write_grid_csv(path, rows: list[GridRow]) -> None:
    lines = [GRID_HEADER]
    for row in rows:
        mean_ap = "" if row.mean_map is None else repr(row.mean_map)
        lines.append(f"{row.sparsity!r},{row.fooling_rate!r},{mean_ap}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
