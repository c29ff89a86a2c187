"""Trainer unit tests: config, rollout, GAE, optimizer, ELO, league, PPO."""
import json

import numpy as np
import pytest

from exploitlab import autodiff as ad
from exploitlab import engine, evalharness, net, toys, trainer
from exploitlab.trainer import (AdamW, LeagueMember, LeagueState, TrainConfig,
                                TrainerError, TrajectoryBatch,
                                clip_gradients, compute_advantages,
                                elo_update, league_step, load_train_config,
                                ppo_update, rollout, train_config)


def test_train_config_defaults_and_overrides():
    cfg = train_config("kuhn")
    assert cfg.batch_size == 64 and cfg.league_size == 8
    cfg = train_config("leduc", epochs=3)
    assert cfg.entropy_coef == 0.0075 and cfg.epochs == 3
    with pytest.raises(TrainerError):
        train_config("holdem")
    with pytest.raises(TrainerError):
        train_config("kuhn", epochs=0)


def test_default_curriculum_is_id_pool():
    cfg = train_config("kuhn")
    assert cfg.curriculum == tuple(t.toy_id for t in toys.pool("kuhn", "id"))


def test_load_train_config(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"game_id": "kuhn", "epochs": 2,
                                "curriculum": ["f", "cs"]}))
    cfg = load_train_config(path)
    assert cfg.epochs == 2 and cfg.curriculum == ("f", "cs")
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"epochs": 2}))
    with pytest.raises(TrainerError):
        load_train_config(bad)


def _rollout_batch(n_envs=2, episode_len=5, seed=0):
    cfg = net.net_config("kuhn")
    params = net.init_params(cfg, 0)
    toy = toys.get_toy("kuhn", "f")
    factory = lambda: evalharness.TablePolicy(toys.ToyPolicy(toy))
    return params, cfg, rollout(params, cfg, factory, "f", "id",
                                n_envs, episode_len, seed)


def test_rollout_shapes_and_bookkeeping():
    _, _, batch = _rollout_batch()
    assert len(batch.hand_rewards) == 2 * 5
    assert batch.size == len(batch.log_probs) == len(batch.values)
    assert batch.opponents == ["f"] * 10 and batch.pools == ["id"] * 10
    assert max(batch.hand_ids) == 9
    # terminal-only rewards: per hand, all but the last decision pay zero
    for hid in range(10):
        idx = [i for i, h in enumerate(batch.hand_ids) if h == hid]
        assert all(batch.rewards[i] == 0.0 for i in idx[:-1])
        assert batch.rewards[idx[-1]] == batch.hand_rewards[hid]


def test_rollout_deterministic_per_seed():
    _, _, a = _rollout_batch(seed=3)
    _, _, b = _rollout_batch(seed=3)
    _, _, c = _rollout_batch(seed=4)
    assert a.actions == b.actions and a.hand_rewards == b.hand_rewards
    assert a.hand_rewards != c.hand_rewards


def test_compute_advantages_normalized_and_episodic():
    _, _, batch = _rollout_batch()
    compute_advantages(batch, lam=0.95)
    assert abs(batch.advantages.mean()) < 1e-9
    assert batch.advantages.std() == pytest.approx(1.0, abs=1e-6)
    # with gamma=lam=1 the return at each step is the hand reward
    compute_advantages(batch, gamma=1.0, lam=1.0)
    for i, hid in enumerate(batch.hand_ids):
        assert batch.returns[i] == pytest.approx(batch.hand_rewards[hid])


def test_adamw_moves_params_and_applies_decay():
    p = {"w": ad.Tensor(np.ones(4, dtype=np.float32), requires_grad=True)}
    opt = AdamW(p, lr=0.1, weight_decay=0.5)
    p["w"].grad = np.zeros(4)
    opt.step()
    # zero gradient: only the decoupled decay moves the weights
    assert (p["w"].data < 1.0).all()
    assert p["w"].data.dtype == np.float32


def test_clip_gradients_scales_to_max_norm():
    p = {"w": ad.Tensor(np.zeros(3), requires_grad=True)}
    p["w"].grad = np.array([3.0, 4.0, 0.0])
    total = clip_gradients(p, 1.0)
    assert total == pytest.approx(5.0)
    assert np.linalg.norm(p["w"].grad) == pytest.approx(1.0)
    p["w"].grad = np.array([0.3, 0.4, 0.0])
    clip_gradients(p, 1.0)
    assert np.linalg.norm(p["w"].grad) == pytest.approx(0.5)  # untouched


def test_elo_update_conserves_rating_sum():
    a, b = elo_update(1200.0, 1300.0, margin=0.8)
    assert a + b == pytest.approx(2500.0)
    assert a > 1200.0  # winner gains
    a2, _ = elo_update(1200.0, 1300.0, margin=5.0, margin_cap=1.0)
    assert a2 == pytest.approx(elo_update(1200.0, 1300.0, 1.0)[0])


def test_ppo_update_runs_and_reports():
    params, cfg, batch = _rollout_batch(n_envs=2, episode_len=10)
    compute_advantages(batch)
    tcfg = train_config("kuhn", epochs=1, train_steps=2, minibatches=2,
                        batch_size=16)
    opt = AdamW(params, lr=1e-3)
    before = {k: t.data.copy() for k, t in net._flatten(params).items()}
    stats = ppo_update(params, cfg, batch, tcfg, opt,
                       np.random.default_rng(0))
    assert stats["minibatches_done"] >= 1
    assert np.isfinite(stats["loss"])
    moved = any(not np.array_equal(before[k], t.data)
                for k, t in net._flatten(params).items())
    assert moved


def test_ppo_update_requires_advantages():
    params, cfg, batch = _rollout_batch()
    tcfg = train_config("kuhn")
    with pytest.raises(TrainerError):
        ppo_update(params, cfg, batch, tcfg, AdamW(params, 1e-3),
                   np.random.default_rng(0))


def test_ppo_kl_stop_halts_update():
    params, cfg, batch = _rollout_batch(n_envs=2, episode_len=10)
    compute_advantages(batch)
    tcfg = train_config("kuhn", kl_stop=-1.0, train_steps=3, minibatches=3)
    stats = ppo_update(params, cfg, batch, tcfg, AdamW(params, 1e-3),
                       np.random.default_rng(0))
    assert stats["early_stop"] == 0
    assert stats["minibatches_done"] == 1  # placeholder stats row only


def test_league_step_accepts_strong_candidate():
    cfg = net.net_config("kuhn")
    tcfg = train_config("kuhn", league_size=2, episode_len=10)
    weak = net.init_params(cfg, 1)
    league = LeagueState([LeagueMember(weak, rating=1200.0)], capacity=2)
    accepted = league_step(league, net.init_params(cfg, 2), cfg, tcfg,
                           seed=0, match_budget=20)
    assert isinstance(accepted, bool)
    with pytest.raises(TrainerError):
        league_step(LeagueState([], capacity=2), weak, cfg, tcfg, seed=0)


def test_trajectory_batch_extend_shifts_hand_ids():
    _, _, a = _rollout_batch(n_envs=1, episode_len=3, seed=0)
    _, _, b = _rollout_batch(n_envs=1, episode_len=3, seed=1)
    n = len(a.hand_rewards)
    a.extend(b)
    assert len(a.hand_rewards) == 2 * n
    assert max(a.hand_ids) == 2 * n - 1
