"""Command-line entry point: train, eval, sweep, export-trajectories, verify, pretrain-expert.

Exit codes: 0 success, 1 verification failure, 2 usage or config error,
3 training abort. Outputs go under ``$DOMINIC_OUTPUT_ROOT`` (default: the
config's ``output_dir``) in a directory named after the run id.
"""

from __future__ import annotations

import csv
import io
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import click
import numpy as np

from . import trainer as training
from . import verify as verification
from .checkpoint import write_atomic
from .config import GROUP_NAMES, RunConfig, load_config, parse_override
from .errors import ConfigError, TrainingAbort, UsageError

OUTPUT_ROOT_ENV = "DOMINIC_OUTPUT_ROOT"
EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_ABORT = 0, 1, 2, 3


def output_dir(cfg: RunConfig) -> Path:
    root = os.environ.get(OUTPUT_ROOT_ENV) or cfg.output_dir
    return Path(root) / cfg.run_id


def _load(config_path: str, overrides: tuple[str, ...], **direct) -> RunConfig:
    pairs = dict(parse_override(o) for o in overrides)
    for key, value in direct.items():
        if value is not None:
            pairs[key] = value
    return load_config(config_path, pairs)


def _write_json(path: Path, data: dict) -> None:
    write_atomic(path, (json.dumps(data, indent=2, sort_keys=True) + "\n").encode())


def _progress(record: dict) -> None:
    if record["iteration"] % 10 == 0:
        div = record.get("diversity_metric")
        click.echo(f"iter {record['iteration']:5d}  warm={record['warm_start']!s:5}  "
                   f"diversity={'-' if div is None else f'{div:.3f}'}", err=True)


def _expert_values(cfg: RunConfig, out: Path, pretrain: bool, quiet: bool) -> np.ndarray | None:
    values = training.resolve_expert_values(cfg)
    if values is None and pretrain:
        _, values = training.pretrain_expert(cfg, out / "expert", log=None if quiet else _progress)
    return values


class Main(click.Group):
    """Maps library errors onto the documented exit codes."""

    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except (ConfigError, UsageError) as exc:
            click.echo(f"error: {exc}", err=True)
            ctx.exit(EXIT_CONFIG)
        except TrainingAbort as exc:
            click.echo(f"training aborted: {exc}", err=True)
            ctx.exit(EXIT_ABORT)


@click.group(cls=Main)
def main():
    """Constrained diverse-skill training at desk scale."""


override_option = click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE",
                               help="Override a config key by dotted path (repeatable).")


@main.command()
@click.argument("config_path")
@override_option
@click.option("--iterations", type=int, default=None, help="Shortcut for trainer.iterations.")
@click.option("--seed", type=int, default=None)
@click.option("--run-id", default=None)
@click.option("--pretrain-expert", "pretrain", is_flag=True, help="Train the expert first if no values are configured.")
@click.option("--quiet", is_flag=True)
def train(config_path, overrides, iterations, seed, run_id, pretrain, quiet):
    """Run the full training loop and a final evaluation."""
    direct = {"seed": seed, "run_id": run_id}
    if iterations is not None:
        # a short smoke run keeps the warm start inside the run
        base = _load(config_path, overrides, **direct)
        direct["trainer.iterations"] = iterations
        direct["trainer.warm_start_iters"] = min(base.trainer.warm_start_iters, iterations)
    cfg = _load(config_path, overrides, **direct)
    out = output_dir(cfg)
    values = _expert_values(cfg, out, pretrain, quiet)
    if values is None and cfg.trainer.iterations > cfg.trainer.warm_start_iters:
        raise ConfigError("no expert values: configure lagrange.expert_* or pass --pretrain-expert")
    tr = training.train(cfg, out, expert_values=values, log=None if quiet else _progress)
    report = training.evaluate(tr, cfg.trainer.eval_episodes)
    _write_json(out / "eval.json", dict(report.to_dict(), config_hash=cfg.config_hash()))
    click.echo(json.dumps(report.to_dict(), sort_keys=True))


@main.command("pretrain-expert")
@click.argument("config_path")
@override_option
@click.option("--run-id", default=None)
@click.option("--quiet", is_flag=True)
def pretrain_expert(config_path, overrides, run_id, quiet):
    """Train the single-skill expert and report its per-group values."""
    cfg = _load(config_path, overrides, run_id=run_id)
    out = output_dir(cfg)
    _, values = training.pretrain_expert(cfg, out, log=None if quiet else _progress)
    _write_json(out / "expert_values.json", {"groups": list(GROUP_NAMES), "values": values.tolist(),
                                             "config_hash": cfg.config_hash()})
    click.echo(json.dumps(dict(zip(GROUP_NAMES, values.tolist()))))


@main.command("eval")
@click.argument("checkpoint")
@click.option("--episodes", type=int, default=None)
@click.option("--config", "config_path", default=None, help="Evaluate on this config's environment instead.")
@click.option("--out", "out_path", default=None, help="Also write the report as JSON here.")
def eval_cmd(checkpoint, episodes, config_path, out_path):
    """Deterministic evaluation of every skill in a checkpoint."""
    tr, _ = training.Trainer.load(checkpoint)
    env_cfg = load_config(config_path).env if config_path else None
    report = training.evaluate(tr, episodes or tr.cfg.trainer.eval_episodes, env_cfg)
    data = dict(report.to_dict(), config_hash=tr.cfg.config_hash())
    if out_path:
        _write_json(Path(out_path), data)
    click.echo(json.dumps(data, sort_keys=True))


@main.command("export-trajectories")
@click.argument("checkpoint")
@click.argument("out_path")
@click.option("--episodes", type=int, default=1)
@click.option("--config", "config_path", default=None, help="Environment config (default: the checkpoint's).")
def export_trajectories(checkpoint, out_path, episodes, config_path):
    """Write per-step positions of every skill in the obstacle scenario as CSV."""
    tr, _ = training.Trainer.load(checkpoint)
    env_cfg = load_config(config_path).env if config_path else tr.cfg.env
    env_cfg = type(env_cfg)(**{**vars(env_cfg), "layout": "scenario", "num_boxes": max(1, env_cfg.num_boxes)})
    report = training.evaluate(tr, episodes, env_cfg)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["run_id", "skill", "episode", "t", "x", "y", "heading"])
    for skill, ep, t, x, y, heading in report.trajectories:
        w.writerow([tr.cfg.run_id, skill, ep, t, repr(x), repr(y), repr(heading)])
    write_atomic(Path(out_path), buf.getvalue().encode())
    click.echo(f"wrote {len(report.trajectories)} rows to {out_path}")


def _parse_floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None


def _sweep_cell(args) -> dict:
    cfg, alpha, ell0, seed, values, root = args
    row = {"alpha_t": alpha[0], "alpha_r": alpha[1], "alpha_s": alpha[2], "ell0": ell0, "seed": seed}
    try:
        cfg = cfg.copy()
        cfg.lagrange.alpha = list(alpha)
        cfg.diversity.ell0 = ell0
        cfg.seed = seed
        cfg.run_id = f"a{'-'.join(f'{a:g}' for a in alpha)}_l{ell0:g}_s{seed}"
        tr = training.train(cfg, Path(root) / cfg.run_id, expert_values=values)
        report = training.evaluate(tr, cfg.trainer.eval_episodes)
        # a cell's return fraction is its worst skill's
        fractions = report.fractions.min(axis=0)
        for name, f in zip(GROUP_NAMES, fractions):
            row[f"fraction_{name}"] = float(f)
        row["diversity"] = report.diversity_metric
        row["status"] = "ok"
    except Exception as exc:  # recorded per cell; the sweep continues
        row["status"] = f"failed: {type(exc).__name__}: {exc}"
    return row


SWEEP_COLUMNS = ["alpha_t", "alpha_r", "alpha_s", "ell0", "seed"] + [f"fraction_{g}" for g in GROUP_NAMES] + \
    ["diversity", "status"]


@main.command()
@click.argument("config_path")
@override_option
@click.option("--alpha", "alphas", multiple=True, required=True, metavar="AT,AR,AS",
              help="One optimality-ratio triple per grid row (repeatable).")
@click.option("--ell0", "ell0s", default=None, help="Comma-separated equilibrium distances (default: config).")
@click.option("--seeds", default="0", help="Comma-separated seeds.")
@click.option("--jobs", type=int, default=1, help="Cells run in this many processes.")
@click.option("--run-id", default="sweep")
def sweep(config_path, overrides, alphas, ell0s, seeds, jobs, run_id):
    """One training run per (alpha, ell0, seed) cell; writes summary.csv."""
    cfg = _load(config_path, overrides, run_id=run_id)
    grid_alpha = []
    for a in alphas:
        triple = _parse_floats(a)
        if len(triple) != 3:
            raise UsageError(f"--alpha needs three comma-separated ratios, got {a!r}")
        grid_alpha.append(triple)
    grid_ell0 = _parse_floats(ell0s) if ell0s else [cfg.diversity.ell0]
    seed_list = [int(s) for s in _parse_floats(seeds)]
    root = output_dir(cfg)
    values_by_seed = {}
    for seed in seed_list:
        scfg = cfg.copy()
        scfg.seed = seed
        values_by_seed[seed] = _expert_values(scfg, root / f"expert_s{seed}", True, True)
    cells = [(cfg, a, l, s, values_by_seed[s], str(root)) for a in grid_alpha for l in grid_ell0 for s in seed_list]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            rows = list(pool.map(_sweep_cell, cells))
    else:
        rows = [_sweep_cell(c) for c in cells]
    buf = io.StringIO()
    w = csv.DictWriter(buf, SWEEP_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r)
    write_atomic(root / "summary.csv", buf.getvalue().encode())
    click.echo(buf.getvalue(), nl=False)


@main.command()
@click.option("--only", multiple=True, help="Run only these checks.")
def verify(only):
    """Run the oracle-backed invariant suite; exit 1 if any check fails."""
    failed = []
    width = max(len(n) for n, _ in verification.CHECKS)
    for name, ok, detail in verification.run_checks(set(only) or None):
        click.echo(f"{name:<{width}}  {'PASS' if ok else 'FAIL'}  {detail}")
        if not ok:
            failed.append(name)
    if failed:
        click.echo(f"violated invariants: {', '.join(failed)}", err=True)
        sys.exit(EXIT_VERIFY)


if __name__ == "__main__":  # pragma: no cover
    main()
