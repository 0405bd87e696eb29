"""Command-line front end.

Exit codes: 0 on success, 1 for configuration problems (bad flags, bad config
file, missing/invalid inputs), 2 for runtime failures (diverged training,
estimation errors).
"""

from __future__ import annotations

import sys
from dataclasses import replace

import click

from .agent import Agent, load_agent, save_agent, train_sval
from .attacker import AttackConfig, targeted_attack, untargeted_attack
from .harness import MODES, ConfigError, ExperimentConfig, Report, \
    load_config, run_experiment, sparsity_grid_search
from .nes import NesConfig, SIGMA_TARGETED, SIGMA_UNTARGETED
from .threatmodel import ARCHS, QueryOracle, TrainConfig, accuracy, \
    load_model, save_model, train
from .videodata import GenParams, generate_dataset, load_dataset, save_dataset


@click.group()
def cli() -> None:
    """Sparse adversarial video attacks with a learned frame selector."""


@cli.command("gen-data")
@click.option("--out", required=True, type=click.Path(), help="dataset file to write")
@click.option("--seed", required=True, type=int)
@click.option("--per-class", default=8, show_default=True, type=int)
@click.option("--frames", default=16, show_default=True, type=int)
@click.option("--height", default=32, show_default=True, type=int)
@click.option("--width", default=32, show_default=True, type=int)
@click.option("--channels", default=1, show_default=True, type=int)
@click.option("--classes", default=4, show_default=True, type=int)
@click.option("--square", default=8, show_default=True, type=int)
@click.option("--speed", default=1, show_default=True, type=int)
@click.option("--noise", default=0.05, show_default=True, type=float)
def gen_data(out, seed, per_class, frames, height, width, channels, classes,
             square, speed, noise) -> None:
    """Generate a synthetic moving-square dataset."""
    params = GenParams(frames=frames, height=height, width=width,
                       channels=channels, class_count=classes,
                       square_side=square, speed=speed, noise=noise)
    dataset = generate_dataset(seed, per_class, params)
    save_dataset(out, dataset)
    click.echo(f"wrote {len(dataset)} videos ({classes} classes) to {out}")


@cli.command("train-threat")
@click.option("--data", required=True, type=click.Path())
@click.option("--arch", required=True, type=click.Choice(ARCHS))
@click.option("--out", required=True, type=click.Path())
@click.option("--epochs", default=10, show_default=True, type=int)
@click.option("--batch-size", default=8, show_default=True, type=int)
@click.option("--lr", default=0.5, show_default=True, type=float)
@click.option("--filters", default=8, show_default=True, type=int)
@click.option("--hidden", default=32, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--eval-data", default=None, type=click.Path(),
              help="optional held-out dataset to score")
def train_threat(data, arch, out, epochs, batch_size, lr, filters, hidden,
                 seed, eval_data) -> None:
    """Train a threat model and save it."""
    dataset = load_dataset(data)
    config = TrainConfig(epochs=epochs, batch_size=batch_size,
                         learning_rate=lr, seed=seed)
    params = train(dataset, arch, config, filters=filters, hidden=hidden)
    save_model(out, params)
    click.echo(f"train accuracy = {accuracy(params, dataset):.4f}")
    if eval_data:
        held = load_dataset(eval_data)
        click.echo(f"eval accuracy = {accuracy(params, held):.4f}")
    click.echo(f"wrote model to {out}")


@cli.command("train-sval")
@click.option("--data", required=True, type=click.Path())
@click.option("--out", required=True, type=click.Path())
@click.option("--sparsity", required=True, type=float)
@click.option("--epochs", default=20, show_default=True, type=int)
@click.option("--beta", default=1.0, show_default=True, type=float)
@click.option("--episodes", default=5, show_default=True, type=int)
@click.option("--hidden", default=128, show_default=True, type=int)
@click.option("--count", default=0, show_default=True, type=int,
              help="videos to train on (0 = whole dataset)")
@click.option("--lr-initial", default=1e-5, show_default=True, type=float)
@click.option("--lr-decayed", default=1e-6, show_default=True, type=float)
@click.option("--lr-decay-epoch", default=15, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
def train_sval_cmd(data, out, sparsity, epochs, beta, episodes, hidden, count,
                   lr_initial, lr_decayed, lr_decay_epoch, seed) -> None:
    """Pre-train a frozen frame-selection agent (no oracle queries)."""
    dataset = load_dataset(data)
    videos = [item.video for item in dataset.items]
    if count:
        videos = videos[:count]
    schedule = lambda epoch: lr_initial if epoch < lr_decay_epoch else lr_decayed  # noqa: E731
    theta = train_sval(videos, sparsity, episodes=episodes, beta=beta,
                       epochs=epochs, hidden=hidden, seed=seed,
                       lr_schedule=schedule)
    save_agent(out, theta)
    click.echo(f"wrote agent checkpoint to {out}")


@cli.command("attack")
@click.option("--data", required=True, type=click.Path())
@click.option("--model", required=True, type=click.Path())
@click.option("--video", required=True, type=int, help="dataset index to attack")
@click.option("--agent", "agent_path", default=None, type=click.Path(),
              help="frozen agent checkpoint (default: fresh online agent)")
@click.option("--dense", is_flag=True, help="perturb every frame, no agent")
@click.option("--targeted", is_flag=True)
@click.option("--target-video", default=None, type=int,
              help="dataset index of the target-class video (targeted only)")
@click.option("--surrogate", default=None, type=click.Path())
@click.option("--epsilon-adv", default=0.05, show_default=True, type=float)
@click.option("--epsilon-decay", default=0.01, show_default=True, type=float)
@click.option("--step-size", default=0.005, show_default=True, type=float)
@click.option("--query-limit", default=30000, show_default=True, type=int)
@click.option("--nes-samples", default=48, show_default=True, type=int)
@click.option("--nes-sigma", default=0.0, show_default=True, type=float,
              help="0 picks the targeted/untargeted default")
@click.option("--max-epochs", default=1, show_default=True, type=int)
@click.option("--episodes", default=5, show_default=True, type=int)
@click.option("--stall-limit", default=500, show_default=True, type=int)
@click.option("--probe-tile", default=2, show_default=True, type=int)
@click.option("--hidden", default=128, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
def attack_cmd(data, model, video, agent_path, dense, targeted, target_video,
               surrogate, epsilon_adv, epsilon_decay, step_size, query_limit,
               nes_samples, nes_sigma, max_epochs, episodes, stall_limit,
               probe_tile, hidden, seed) -> None:
    """Attack one video and print the outcome."""
    dataset = load_dataset(data)
    params = load_model(model)
    if not 0 <= video < len(dataset):
        raise ConfigError(f"video index {video} out of range")
    item = dataset.items[video]

    if dense:
        agent = None
    elif agent_path:
        agent = Agent(theta=load_agent(agent_path), trainable=False)
    else:
        agent = Agent.fresh(hidden=hidden, seed=seed, trainable=True)

    sigma = nes_sigma or (SIGMA_TARGETED if targeted else SIGMA_UNTARGETED)
    config = AttackConfig(
        epsilon_adv=epsilon_adv, epsilon_decay=epsilon_decay,
        step_size=step_size, query_limit=query_limit,
        nes=NesConfig(samples=nes_samples, sigma=sigma), targeted=targeted,
        max_epochs=max_epochs, episodes=episodes, stall_limit=stall_limit,
        probe_tile=probe_tile, seed=seed)
    oracle = QueryOracle(params)
    surrogate_params = load_model(surrogate) if surrogate else None

    if targeted:
        if target_video is None:
            raise ConfigError("targeted attack needs --target-video")
        if not 0 <= target_video < len(dataset):
            raise ConfigError(f"target index {target_video} out of range")
        target_item = dataset.items[target_video]
        result = targeted_attack(oracle, item.video, target_item.label,
                                 target_item.video, agent, config,
                                 surrogate=surrogate_params)
    else:
        result = untargeted_attack(oracle, item.video, item.label, agent, config)

    click.echo(f"success = {result.success}")
    click.echo(f"queries = {result.queries}")
    click.echo(f"map = {result.map:.4f}")
    click.echo(f"sparsity = {result.sparsity:.4f}")
    click.echo(f"selected_frames = {','.join(str(i) for i in result.selected_frames)}")
    click.echo(f"epochs = {result.epochs_used}")


def _config_options(fn):
    opts = [
        click.option("--config", "config_path", default=None, type=click.Path(),
                     help="key = value experiment config file"),
        click.option("--dataset", default=None, type=click.Path()),
        click.option("--threat-model", default=None, type=click.Path()),
        click.option("--surrogate-model", default=None, type=click.Path()),
        click.option("--agent-checkpoint", default=None, type=click.Path()),
        click.option("--output", default=None, type=click.Path()),
        click.option("--mode", default=None, type=click.Choice(MODES)),
        click.option("--targeted/--untargeted", "targeted", default=None),
        click.option("--video-count", default=None, type=int),
        click.option("--epsilon-adv", default=None, type=float),
        click.option("--epsilon-decay", default=None, type=float),
        click.option("--step-size", default=None, type=float),
        click.option("--query-limit", default=None, type=int),
        click.option("--nes-samples", default=None, type=int),
        click.option("--nes-sigma", default=None, type=float),
        click.option("--episodes", default=None, type=int),
        click.option("--stall-limit", default=None, type=int),
        click.option("--step-window", default=None, type=int),
        click.option("--probe-tile", default=None, type=int),
        click.option("--head-videos", default=None, type=int),
        click.option("--max-epochs-head", default=None, type=int),
        click.option("--max-epochs-tail", default=None, type=int),
        click.option("--agent-hidden", default=None, type=int),
        click.option("--agent-lr-initial", default=None, type=float),
        click.option("--agent-lr-decayed", default=None, type=float),
        click.option("--agent-lr-decay-epoch", default=None, type=int),
        click.option("--sval-sparsity", default=None, type=float),
        click.option("--sval-epochs", default=None, type=int),
        click.option("--sval-beta", default=None, type=float),
        click.option("--sval-lr-initial", default=None, type=float),
        click.option("--sval-lr-decayed", default=None, type=float),
        click.option("--sval-lr-decay-epoch", default=None, type=int),
        click.option("--sval-train-count", default=None, type=int),
        click.option("--seed", required=True, type=int),
    ]
    for opt in reversed(opts):
        fn = opt(fn)
    return fn


def _merge_config(config_path, seed, **overrides) -> ExperimentConfig:
    base = load_config(config_path) if config_path else ExperimentConfig()
    values = {key: val for key, val in overrides.items() if val is not None}
    values["seed"] = seed
    return replace(base, **values)


@cli.command("bench")
@_config_options
def bench(config_path, seed, **overrides) -> None:
    """Run an attack campaign and print its summary."""
    config = _merge_config(config_path, seed, **overrides)
    report = run_experiment(config)
    click.echo(report.summary(), nl=False)
    if config.output:
        click.echo(f"rows written to {config.output}")


@cli.command("grid")
@click.option("--sparsity-values", default="0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8",
              show_default=True, help="comma-separated target sparsities")
@_config_options
def grid(sparsity_values, config_path, seed, **overrides) -> None:
    """Sweep the sval agent's target sparsity and tabulate FR / mean MAP."""
    config = _merge_config(config_path, seed, **overrides)
    try:
        values = [float(v) for v in sparsity_values.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad --sparsity-values: {sparsity_values!r}") from exc
    rows = sparsity_grid_search(config, values)
    click.echo("sparsity  fooling_rate  mean_map")
    for row in rows:
        mean_ap = "n/a" if row.mean_map is None else f"{row.mean_map:.4f}"
        click.echo(f"{row.sparsity:<9.2f} {row.fooling_rate:<13.4f} {mean_ap}")
    if config.output:
        click.echo(f"grid written to {config.output}")


@cli.command("report")
@click.argument("csvs", nargs=-1, required=True, type=click.Path())
def report_cmd(csvs) -> None:
    """Recompute aggregates from one or more row CSVs."""
    rows = []
    for path in csvs:
        with open(path, "r", encoding="utf-8") as fh:
            rows.extend(Report.from_csv(fh.read()).rows)
    click.echo(Report(rows).summary(), nl=False)


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.UsageError as exc:
        click.echo(f"error: {exc.format_message()}", err=True)
        return 1
    except click.ClickException as exc:
        exc.show()
        return 1
    except click.exceptions.Abort:
        return 1
    except (ConfigError, ValueError, OSError) as exc:
        click.echo(f"error: {exc}", err=True)
        return 1
    except Exception as exc:  # noqa: BLE001 - anything else is a runtime failure
        click.echo(f"runtime failure: {exc}", err=True)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
