"""End-to-end command-line tests on a tiny dataset.

Everything runs in-process through main(argv) so exit codes and artifact
bytes can be checked directly.
"""

import json
import os
import xml.etree.ElementTree as ET

import pytest

from flowgym.cli import main
from flowgym.metrics import read_metrics

pytestmark = pytest.mark.filterwarnings("ignore::UserWarning")

TINY_NET = ("batch_size = 16\nvelocity_width = 2\ncond_dim = 4\n"
            "kernel_size = 3\n")


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    return tmp_path_factory.mktemp("cli")


@pytest.fixture(scope="module")
def demos(workdir):
    cfg = workdir / "gen.cfg"
    out = workdir / "demos.jsonl"
    cfg.write_text(f"count = 30\nseed = 5\nout = {out}\n"
                   "h_max = 16\nh_prime = 8\n")
    assert main(["gen-demos", "--config", str(cfg)]) == 0
    return out


def train_cfg(workdir, demos, name, body):
    path = workdir / f"{name}.cfg"
    path.write_text(f"dataset = {demos}\nout_dir = {workdir / name}\n{body}")
    return path


@pytest.fixture(scope="module")
def ilfm_run(workdir, demos):
    cfg = train_cfg(workdir, demos, "ilfm",
                    f"method = ilfm\nreward = position\nseed = 0\n"
                    f"patience = 2\n{TINY_NET}")
    assert main(["train", "--config", str(cfg)]) == 0
    return workdir / "ilfm" / "ilfm-position-p2-w2-s0", cfg


def test_gen_demos_deterministic(workdir, demos):
    cfg = workdir / "gen2.cfg"
    out = workdir / "demos2.jsonl"
    cfg.write_text(f"count = 30\nseed = 5\nout = {out}\n"
                   "h_max = 16\nh_prime = 8\n")
    assert main(["gen-demos", "--config", str(cfg)]) == 0
    assert out.read_bytes() == demos.read_bytes()


def test_gen_demos_missing_required(workdir, capsys):
    cfg = workdir / "gen_bad.cfg"
    cfg.write_text("count = 30\nseed = 5\n")
    assert main(["gen-demos", "--config", str(cfg)]) == 2
    assert "out" in capsys.readouterr().err


def test_train_writes_artifacts(ilfm_run):
    run_dir, _ = ilfm_run
    assert (run_dir / "metrics.csv").exists()
    assert (run_dir / "policy.ckpt").exists()
    assert (run_dir / "best_policy.ckpt").exists()
    state = json.loads((run_dir / "state.json").read_text())
    assert state["done"] is True
    assert state["run_id"] == "ilfm-position-p2-w2-s0"
    rows = read_metrics(str(run_dir / "metrics.csv"))
    assert state["rows_written"] == len(rows)
    assert all(row["run_id"] == "ilfm-position-p2-w2-s0" for row in rows)


def test_train_skips_finished_run(ilfm_run, capsys):
    run_dir, cfg = ilfm_run
    before = (run_dir / "metrics.csv").read_bytes()
    assert main(["train", "--config", str(cfg)]) == 0
    assert "already complete, skipping" in capsys.readouterr().out
    assert (run_dir / "metrics.csv").read_bytes() == before


def test_train_resume_matches_straight_run(workdir, demos):
    base = f"method = ilfm\nreward = position\nseed = 1\npatience = 5\n{TINY_NET}"
    straight = train_cfg(workdir, demos, "straight", base)
    paused = train_cfg(workdir, demos, "paused",
                       base + "stop_after_epochs = 2\n")
    resumed = workdir / "resumed.cfg"
    resumed.write_text(f"dataset = {demos}\nout_dir = {workdir / 'paused'}\n"
                       + base)
    assert main(["train", "--config", str(straight)]) == 0
    assert main(["train", "--config", str(paused)]) == 0
    rid = "ilfm-position-p5-w2-s1"
    state = json.loads((workdir / "paused" / rid / "state.json").read_text())
    assert state["done"] is False and state["epoch_global"] == 2
    assert main(["train", "--config", str(resumed)]) == 0
    state = json.loads((workdir / "paused" / rid / "state.json").read_text())
    assert state["done"] is True

    def comparable(run_root):
        rows = read_metrics(str(workdir / run_root / rid / "metrics.csv"))
        return [{k: v for k, v in row.items() if k != "wall_clock_s"}
                for row in rows]

    assert comparable("paused") == comparable("straight")
    for name in ("policy.ckpt", "best_policy.ckpt"):
        assert ((workdir / "paused" / rid / name).read_bytes()
                == (workdir / "straight" / rid / name).read_bytes())


def test_train_seed_sweep_expands(workdir, demos, capsys):
    cfg = train_cfg(workdir, demos, "sweep",
                    f"method = ilfm\nreward = position\nseed = 2, 3\n"
                    f"patience = 1\n{TINY_NET}")
    assert main(["train", "--config", str(cfg)]) == 0
    assert "2 run(s)" in capsys.readouterr().out
    assert (workdir / "sweep" / "ilfm-position-p1-w2-s2").is_dir()
    assert (workdir / "sweep" / "ilfm-position-p1-w2-s3").is_dir()


def test_train_unknown_method_exits_2(workdir, demos, capsys):
    cfg = train_cfg(workdir, demos, "badmethod",
                    "method = sac\nreward = position\nseed = 0\n")
    assert main(["train", "--config", str(cfg)]) == 2
    assert "method" in capsys.readouterr().err


def test_train_missing_dataset_exits_2(workdir, capsys):
    cfg = workdir / "nods.cfg"
    cfg.write_text(f"method = ilfm\ndataset = {workdir}/nope.jsonl\n"
                   f"out_dir = {workdir}/x\nreward = position\nseed = 0\n")
    assert main(["train", "--config", str(cfg)]) == 2
    assert "dataset not found" in capsys.readouterr().err


def test_train_divergence_exits_3(workdir, demos, capsys):
    cfg = train_cfg(workdir, demos, "diverge",
                    f"method = ilfm\nreward = position\nseed = 0\n"
                    f"patience = 3\nlearning_rate = 1e12\n{TINY_NET}")
    assert main(["train", "--config", str(cfg)]) == 3
    assert "numerical failure" in capsys.readouterr().err


def test_eval_demo_deterministic(workdir, demos):
    out_a, out_b = workdir / "a.csv", workdir / "b.csv"
    args = ["eval", "--demo", "--dataset", str(demos), "--reward", "position",
            "--n", "1", "--seed", "7"]
    assert main(args + ["--out", str(out_a)]) == 0
    assert main(args + ["--out", str(out_b)]) == 0
    text = out_a.read_bytes()
    assert text == out_b.read_bytes()
    assert text.count(b"\r\n") == 2
    header = text.split(b"\r\n")[0].decode()
    assert header.startswith("reward,n_tasks,seed,mean_reward")


def test_eval_checkpoint_stdout(ilfm_run, demos, capsys):
    run_dir, _ = ilfm_run
    assert main(["eval", "--ckpt", str(run_dir / "best_policy.ckpt"),
                 "--dataset", str(demos), "--reward", "position",
                 "--n", "1"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("reward,n_tasks,seed,")
    assert "position,1,0," in out


def test_eval_normalizer_mismatch_exits_2(ilfm_run, workdir, capsys):
    run_dir, _ = ilfm_run
    cfg = workdir / "gen3.cfg"
    other = workdir / "demos3.jsonl"
    cfg.write_text(f"count = 30\nseed = 6\nout = {other}\n"
                   "h_max = 16\nh_prime = 8\n")
    assert main(["gen-demos", "--config", str(cfg)]) == 0
    assert main(["eval", "--ckpt", str(run_dir / "policy.ckpt"),
                 "--dataset", str(other), "--reward", "position",
                 "--n", "1"]) == 2
    assert "normalizer" in capsys.readouterr().err


def test_eval_usage_errors(demos, ilfm_run, capsys):
    run_dir, _ = ilfm_run
    ckpt = str(run_dir / "policy.ckpt")
    base = ["eval", "--dataset", str(demos), "--reward", "position"]
    assert main(base + ["--ckpt", ckpt, "--n", "0"]) == 2
    assert main(base + ["--n", "1"]) == 2  # no --ckpt, no --demo
    assert main(base + ["--ckpt", ckpt, "--n", "999"]) == 2
    assert main(["eval", "--demo", "--dataset", str(demos),
                 "--reward", "bogus", "--n", "1"]) == 2
    capsys.readouterr()


def test_plot_from_run_metrics(ilfm_run, workdir):
    run_dir, _ = ilfm_run
    out = workdir / "figs"
    assert main(["plot", str(run_dir / "metrics.csv"), "--out", str(out),
                 "--baseline", "-0.5"]) == 0
    svg = out / "reward_position.svg"
    assert svg.exists()
    assert ET.parse(str(svg)).getroot().tag.endswith("svg")


def test_plot_missing_file_exits_2(workdir, capsys):
    assert main(["plot", str(workdir / "nope.csv"),
                 "--out", str(workdir / "figs2")]) == 2
    assert "not found" in capsys.readouterr().err


def test_thread_cap_rejects_garbage(demos, workdir, monkeypatch, capsys):
    monkeypatch.setenv("FLOWGYM_THREADS", "abc")
    assert main(["eval", "--demo", "--dataset", str(demos),
                 "--reward", "position", "--n", "1"]) == 2
    assert "FLOWGYM_THREADS" in capsys.readouterr().err
