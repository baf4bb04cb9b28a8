import csv
import hashlib
import json

import numpy as np
import pytest
from click.testing import CliRunner

from dominic import cli, lagrange, verify
from dominic.config import dump_config
from dominic.verify import _tiny_train_config


@pytest.fixture
def runner(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUTPUT_ROOT_ENV, str(tmp_path / "runs"))
    return CliRunner()


@pytest.fixture
def tiny_config(tmp_path):
    cfg = _tiny_train_config(iterations=3, warm=1)
    cfg.lagrange.expert_values = [1.0, 2.0, 3.0]
    cfg.trainer.eval_episodes = 2
    path = tmp_path / "tiny.yaml"
    path.write_text(dump_config(cfg))
    return path


def test_missing_config_exits_2(runner, tmp_path):
    res = runner.invoke(cli.main, ["train", str(tmp_path / "nope.yaml")])
    assert res.exit_code == 2


def test_unknown_key_exits_2(runner, tiny_config):
    res = runner.invoke(cli.main, ["train", str(tiny_config), "--set", "env.bogus=1"])
    assert res.exit_code == 2
    assert "env.bogus" in res.output


def test_schema_error_names_line(runner, tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("env:\n  size: 9\n  horizon: -3\n")
    res = runner.invoke(cli.main, ["train", str(path)])
    assert res.exit_code == 2


def test_train_outputs_and_determinism(runner, tiny_config, tmp_path):
    digests = []
    for run_id in ("a", "b"):
        res = runner.invoke(cli.main, ["train", str(tiny_config), "--run-id", run_id, "--quiet"])
        assert res.exit_code == 0, res.output
        out = tmp_path / "runs" / run_id
        assert (out / "eval.json").exists() and (out / "checkpoints" / "final.npz").exists()
        digests.append(hashlib.sha256((out / "metrics.jsonl").read_bytes()).hexdigest())
    assert digests[0] == digests[1]


def test_train_iterations_shortcut(runner, tiny_config, tmp_path):
    res = runner.invoke(cli.main, ["train", str(tiny_config), "--iterations", "1", "--run-id", "one", "--quiet"])
    assert res.exit_code == 0, res.output
    lines = (tmp_path / "runs" / "one" / "metrics.jsonl").read_text().splitlines()
    assert len(lines) == 1


def test_training_abort_exits_3(runner, tiny_config, monkeypatch):
    from dominic import trainer
    from dominic.errors import TrainingAbort

    def boom(*a, **k):
        raise TrainingAbort("non-finite loss")

    monkeypatch.setattr(trainer, "ppo_update", boom)
    res = runner.invoke(cli.main, ["train", str(tiny_config), "--quiet"])
    assert res.exit_code == 3


def test_eval_and_export(runner, tiny_config, tmp_path):
    assert runner.invoke(cli.main, ["train", str(tiny_config), "--run-id", "r", "--quiet"]).exit_code == 0
    ckpt = tmp_path / "runs" / "r" / "checkpoints" / "final.npz"
    res = runner.invoke(cli.main, ["eval", str(ckpt), "--episodes", "2", "--out", str(tmp_path / "ev.json")])
    assert res.exit_code == 0, res.output
    report = json.loads((tmp_path / "ev.json").read_text())
    assert np.array(report["returns"]).shape == (3, 3)
    out_csv = tmp_path / "traj.csv"
    res = runner.invoke(cli.main, ["export-trajectories", str(ckpt), str(out_csv), "--episodes", "2"])
    assert res.exit_code == 0, res.output
    rows = list(csv.DictReader(out_csv.open()))
    assert list(rows[0]) == ["run_id", "skill", "episode", "t", "x", "y", "heading"]
    groups = {}
    for r in rows:
        groups.setdefault((r["skill"], r["episode"]), []).append(int(r["t"]))
    assert len(groups) == 3 * 2
    assert all(all(b > a for a, b in zip(ts, ts[1:])) for ts in groups.values())
    again = tmp_path / "traj2.csv"
    runner.invoke(cli.main, ["export-trajectories", str(ckpt), str(again), "--episodes", "2"])
    assert again.read_bytes() == out_csv.read_bytes()


def test_eval_mismatched_env_exits_2(runner, tiny_config, tmp_path):
    assert runner.invoke(cli.main, ["train", str(tiny_config), "--run-id", "m", "--quiet"]).exit_code == 0
    ckpt = tmp_path / "runs" / "m" / "checkpoints" / "final.npz"
    other = tmp_path / "other.yaml"
    other.write_text("env:\n  occupancy_radius: 1\n")
    res = runner.invoke(cli.main, ["export-trajectories", str(ckpt), str(tmp_path / "x.csv"), "--config", str(other)])
    assert res.exit_code == 2
    res = runner.invoke(cli.main, ["eval", str(tmp_path / "missing.npz")])
    assert res.exit_code == 2


def test_sweep_rows(runner, tiny_config, tmp_path):
    res = runner.invoke(cli.main, ["sweep", str(tiny_config), "--alpha", "0.9,0.8,0.7", "--alpha", "0.9,0.8,0.5",
                                   "--ell0", "1,2", "--seeds", "0,1", "--run-id", "sw"])
    assert res.exit_code == 0, res.output
    rows = list(csv.DictReader((tmp_path / "runs" / "sw" / "summary.csv").open()))
    assert len(rows) == 2 * 2 * 2
    assert list(rows[0]) == cli.SWEEP_COLUMNS
    assert all(r["status"] == "ok" for r in rows)
    single = runner.invoke(cli.main, ["sweep", str(tiny_config), "--alpha", "0.9,0.8,0.7", "--run-id", "one"])
    assert single.exit_code == 0
    assert len(list(csv.DictReader((tmp_path / "runs" / "one" / "summary.csv").open()))) == 1


def test_sweep_records_failed_cells(runner, tiny_config, tmp_path, monkeypatch):
    from dominic import trainer

    real = trainer.train

    def flaky(cfg, *a, **k):
        if cfg.diversity.ell0 == 2.0:
            raise RuntimeError("cell exploded")
        return real(cfg, *a, **k)

    monkeypatch.setattr(trainer, "train", flaky)
    res = runner.invoke(cli.main, ["sweep", str(tiny_config), "--alpha", "0.9,0.8,0.7", "--ell0", "1,2",
                                   "--run-id", "flaky"])
    assert res.exit_code == 0
    rows = list(csv.DictReader((tmp_path / "runs" / "flaky" / "summary.csv").open()))
    assert [r["status"].split(":")[0] for r in rows] == ["ok", "failed"]


def test_sweep_bad_alpha_exits_2(runner, tiny_config):
    assert runner.invoke(cli.main, ["sweep", str(tiny_config), "--alpha", "0.9,0.8"]).exit_code == 2


def test_pretrain_expert_command(runner, tiny_config, tmp_path):
    res = runner.invoke(cli.main, ["pretrain-expert", str(tiny_config), "--set", "trainer.expert_iterations=2",
                                   "--set", "trainer.expert_eval_episodes=2", "--set", "trainer.expert_num_envs=4",
                                   "--run-id", "ex", "--quiet"])
    assert res.exit_code == 0, res.output
    data = json.loads((tmp_path / "runs" / "ex" / "expert_values.json").read_text())
    assert len(data["values"]) == 3


def test_verify_passes_quick_checks(runner):
    res = runner.invoke(cli.main, ["verify", "--only", "lagrange.direction_law", "--only", "diversity.vdw_sign_law"])
    assert res.exit_code == 0, res.output
    assert len([ln for ln in res.output.splitlines() if "PASS" in ln]) == 2


def test_verify_detects_sign_flip(runner, monkeypatch):
    real = lagrange.update_multipliers

    def flipped(groups):
        out = real(groups)
        for g, new in zip(groups, out):
            new.mu = g.mu - (new.mu - g.mu)
        return out

    monkeypatch.setattr(lagrange, "update_multipliers", flipped)
    res = runner.invoke(cli.main, ["verify", "--only", "lagrange.direction_law"])
    assert res.exit_code == 1
    assert "lagrange.direction_law" in res.output


def test_verify_lists_every_invariant():
    assert len({name for name, _ in verify.CHECKS}) == len(verify.CHECKS)
