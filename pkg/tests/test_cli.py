"""CLI tests: exit codes, file outputs, argument validation."""
import csv
import json
import os

import numpy as np

from exploitlab import cli, net, solver
from exploitlab.cli import EXIT_CONFIG, EXIT_OK, EXIT_USAGE, run


def test_no_command_prints_help(capsys):
    assert run([]) == EXIT_USAGE
    assert "solve" in capsys.readouterr().out


def test_unknown_command_is_usage_error():
    assert run(["frobnicate"]) == EXIT_USAGE


def test_solve_kuhn_alpha(tmp_path, capsys):
    assert run(["solve", "--game", "kuhn", "--alpha", "0.1",
                "--out", str(tmp_path)]) == EXIT_OK
    out = capsys.readouterr().out
    assert "exploitability: 0.000000" in out
    table = solver.PolicyTable.from_csv("kuhn", tmp_path / "kuhn_policy.csv")
    assert len(table.rows) == 12


def test_solve_alpha_rejected_for_leduc(tmp_path, capsys):
    assert run(["solve", "--game", "leduc", "--alpha", "0.1",
                "--out", str(tmp_path)]) == EXIT_CONFIG


def test_solve_alpha_out_of_range(tmp_path):
    assert run(["solve", "--game", "kuhn", "--alpha", "0.5",
                "--out", str(tmp_path)]) == EXIT_CONFIG


def test_solve_cfr(tmp_path, capsys):
    assert run(["solve", "--game", "kuhn", "--cfr-iters", "2000",
                "--out", str(tmp_path)]) == EXIT_OK
    assert os.path.exists(tmp_path / "kuhn_policy.csv")


def test_br_table(tmp_path):
    assert run(["br-table", "--game", "kuhn", "--out", str(tmp_path)]) == EXIT_OK
    with open(tmp_path / "kuhn_br_ceilings.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 14
    by_id = {r["toy_id"]: r for r in rows}
    assert float(by_id["f"]["br_ceiling"]) == 1.0
    # within each pool, ceilings are sorted descending
    id_vals = [float(r["br_ceiling"]) for r in rows if r["pool"] == "id"]
    assert id_vals == sorted(id_vals, reverse=True)


def test_br_table_single_pool(tmp_path):
    assert run(["br-table", "--game", "kuhn", "--pool", "ood",
                "--out", str(tmp_path)]) == EXIT_OK
    with open(tmp_path / "kuhn_br_ceilings.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 7 and all(r["pool"] == "ood" for r in rows)


def test_ne_vs_toys_kuhn(tmp_path):
    assert run(["ne-vs-toys", "--game", "kuhn", "--seed", "7",
                "--out", str(tmp_path)]) == EXIT_OK
    with open(tmp_path / "kuhn_ne_vs_toys.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 16  # 14 toys + 2 aggregates
    assert all(r["mode"] == "exact" for r in rows)


def test_gradcheck_kuhn(tmp_path, capsys):
    assert run(["gradcheck", "--game", "kuhn", "--coords", "20",
                "--out", str(tmp_path)]) == EXIT_OK
    assert "grad_check max relative error" in capsys.readouterr().out


def test_train_requires_game_or_config(tmp_path):
    assert run(["train", "--out", str(tmp_path)]) == EXIT_CONFIG


def test_train_bad_config_file(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"epochs": 1}))  # missing game_id
    assert run(["train", "--config", str(cfg),
                "--out", str(tmp_path)]) == EXIT_CONFIG


def test_train_and_eval_roundtrip(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({
        "game_id": "kuhn", "epochs": 2, "episode_len": 8,
        "envs_per_opponent": 1, "train_steps": 1, "minibatches": 1,
        "batch_size": 8, "league_size": 1, "league_match_hands": 8,
        "checkpoint_freq": 1, "curriculum": ["f"]}))
    run_dir = tmp_path / "run"
    assert run(["train", "--config", str(cfg), "--seed", "1",
                "--out", str(run_dir)]) == EXIT_OK
    ckpts = [p for p in os.listdir(run_dir) if p.endswith(".npz")]
    assert ckpts
    final = run_dir / "checkpoint_final.npz"
    assert final.exists()
    eval_dir = tmp_path / "eval"
    assert run(["eval", "--checkpoint", str(final), "--pool", "id",
                "--hands", "20", "--out", str(eval_dir)]) == EXIT_OK
    assert (eval_dir / "kuhn_id_exploiter.csv").exists()
    assert (eval_dir / "kuhn_id_exploiter.json").exists()
    assert "pool aggregate" in capsys.readouterr().out


def test_eval_missing_checkpoint(tmp_path):
    code = run(["eval", "--checkpoint", str(tmp_path / "nope.npz"),
                "--pool", "id", "--out", str(tmp_path)])
    assert code in (cli.EXIT_RUNTIME, EXIT_CONFIG)
    assert code != EXIT_OK


def test_random_minibatch_shapes():
    import exploitlab.engine as engine
    cfg = net.net_config("kuhn")
    mb = cli._random_minibatch(cfg, engine.kuhn_spec(),
                               np.random.default_rng(0))
    assert mb.size == 8
    assert mb.legal.shape == (8, 2)
    assert mb.ref_mask.shape[0] == 8
