"""PPO league training: trajectory generation against three opponent pools
(ELO league of past checkpoints, the toy curriculum, and a long-tail FIFO
snapshot buffer), GAE advantages, clipped-surrogate updates with AdamW and
KL-based early stopping.
"""
from __future__ import annotations

import csv
import json
import os
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import engine, net, toys
from .evalharness import AgentPolicy, TablePolicy, play_hand, play_match


class TrainerError(ValueError):
    pass


@dataclass
class TrainConfig:
    game_id: str
    seed: int = 0
    epochs: int = 200
    learning_rate: float = 1e-4
    entropy_coef: float = 0.025
    value_coef: float = 0.01
    clip_eps: float = 0.1
    grad_clip: float = 1.0
    kl_stop: float = 0.02
    weight_decay: float = 0.01
    gae_lambda: float = 0.95
    train_steps: int = 5
    batch_size: int = 64
    minibatches: int = 5
    envs_per_opponent: int = 4
    episode_len: int = 100
    checkpoint_freq: int = 100
    league_size: int = 8
    buffer_size: int = 25
    elo_k: float = 32.0
    margin_cap: float = 1.0
    league_match_hands: int = 200
    curriculum: tuple[str, ...] = ()
    out_dir: str = "runs"

    def __post_init__(self):
        if not self.curriculum:
            self.curriculum = tuple(t.toy_id
                                    for t in toys.pool(self.game_id, "id"))
        for name in ("epochs", "train_steps", "batch_size", "minibatches",
                     "envs_per_opponent", "episode_len", "checkpoint_freq",
                     "league_size", "buffer_size"):
            if getattr(self, name) < 1:
                raise TrainerError(f"{name} must be positive")


def train_config(game_id: str, **overrides) -> TrainConfig:
    """Per-game defaults; keyword overrides win."""
    if game_id == engine.KUHN:
        base = dict(entropy_coef=0.025, train_steps=5, batch_size=64,
                    minibatches=5, envs_per_opponent=4, checkpoint_freq=100,
                    league_size=8, margin_cap=1.0)
    elif game_id == engine.LEDUC:
        base = dict(entropy_coef=0.0075, train_steps=10, batch_size=8,
                    minibatches=4, envs_per_opponent=8, checkpoint_freq=20,
                    league_size=5, margin_cap=2.0)
    else:
        raise TrainerError(f"unknown game {game_id!r}")
    base.update(overrides)
    return TrainConfig(game_id=game_id, **base)


def load_train_config(path) -> TrainConfig:
    with open(path) as fh:
        raw = json.load(fh)
    game_id = raw.pop("game_id", None)
    if game_id is None:
        raise TrainerError("config file must set game_id")
    if "curriculum" in raw:
        raw["curriculum"] = tuple(raw["curriculum"])
    return train_config(game_id, **raw)


@dataclass
class TrajectoryBatch:
    observations: list = field(default_factory=list)
    actions: list = field(default_factory=list)
    log_probs: list = field(default_factory=list)
    values: list = field(default_factory=list)
    rewards: list = field(default_factory=list)   # terminal-only, per decision
    hand_ids: list = field(default_factory=list)
    opponents: list = field(default_factory=list)  # per hand
    hand_rewards: list = field(default_factory=list)
    pools: list = field(default_factory=list)      # per hand
    advantages: np.ndarray | None = None
    returns: np.ndarray | None = None

    @property
    def size(self) -> int:
        return len(self.actions)

    def extend(self, other: "TrajectoryBatch") -> None:
        shift = len(self.hand_rewards)
        self.observations.extend(other.observations)
        self.actions.extend(other.actions)
        self.log_probs.extend(other.log_probs)
        self.values.extend(other.values)
        self.rewards.extend(other.rewards)
        self.hand_ids.extend(h + shift for h in other.hand_ids)
        self.opponents.extend(other.opponents)
        self.hand_rewards.extend(other.hand_rewards)
        self.pools.extend(other.pools)


def rollout(params: dict, cfg: net.NetConfig, opponent_factory,
            opponent_id: str, pool: str, n_envs: int, episode_len: int,
            seed: int) -> TrajectoryBatch:
    """n_envs sessions of episode_len hands; the dealer seat alternates per
    hand, the agent always occupies seat 0, and session history accumulates
    across hands and resets between sessions."""
    if episode_len < 1:
        raise TrainerError("episode_len must be >= 1")
    spec = engine.game_spec(cfg.game_id)
    batch = TrajectoryBatch()
    for env in range(n_envs):
        rng = np.random.default_rng([seed, env])
        agent = AgentPolicy(params, cfg, record=True)
        villain = opponent_factory()
        agent.begin_session()
        villain.begin_session()
        for hand_idx in range(episode_len):
            hand = play_hand(spec, {0: agent, 1: villain}, hand_idx % 2, rng)
            reward = hand.payoffs[0]
            samples = agent.drain_samples()
            hand_id = len(batch.hand_rewards)
            for i, (obs, action, logp, value) in enumerate(samples):
                batch.observations.append(obs)
                batch.actions.append(action)
                batch.log_probs.append(logp)
                batch.values.append(value)
                batch.rewards.append(reward if i == len(samples) - 1 else 0.0)
                batch.hand_ids.append(hand_id)
            batch.hand_rewards.append(reward)
            batch.opponents.append(opponent_id)
            batch.pools.append(pool)
    return batch


def compute_advantages(batch: TrajectoryBatch, gamma: float = 1.0,
                       lam: float = 0.95) -> None:
    """GAE within each (episodic) hand, then batch normalization."""
    n = batch.size
    adv = np.zeros(n)
    ret = np.zeros(n)
    values = np.asarray(batch.values)
    rewards = np.asarray(batch.rewards)
    hand_ids = np.asarray(batch.hand_ids)
    start = 0
    while start < n:
        end = start
        while end < n and hand_ids[end] == hand_ids[start]:
            end += 1
        acc = 0.0
        for t in range(end - 1, start - 1, -1):
            next_v = values[t + 1] if t + 1 < end else 0.0
            delta = rewards[t] + gamma * next_v - values[t]
            acc = delta + gamma * lam * acc
            adv[t] = acc
            ret[t] = acc + values[t]
        start = end
    batch.returns = ret
    std = adv.std()
    batch.advantages = (adv - adv.mean()) / (std if std > 1e-8 else 1.0)


class AdamW:
    """Decoupled-weight-decay Adam over a parameter tree."""

    def __init__(self, params: dict, lr: float, weight_decay: float = 0.01,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.tensors = ad.parameters(params)
        self.lr = lr
        self.wd = weight_decay
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data, dtype=np.float64) for p in self.tensors]
        self.v = [np.zeros_like(p.data, dtype=np.float64) for p in self.tensors]

    def step(self) -> None:
        self.t += 1
        for i, p in enumerate(self.tensors):
            g = p.grad if p.grad is not None else 0.0
            self.m[i] = self.b1 * self.m[i] + (1 - self.b1) * g
            self.v[i] = self.b2 * self.v[i] + (1 - self.b2) * g * g
            mhat = self.m[i] / (1 - self.b1 ** self.t)
            vhat = self.v[i] / (1 - self.b2 ** self.t)
            update = mhat / (np.sqrt(vhat) + self.eps) + self.wd * p.data
            p.data = (p.data - self.lr * update).astype(p.data.dtype)


def clip_gradients(params: dict, max_norm: float) -> float:
    """Scale all gradients so the global norm is at most max_norm."""
    tensors = [t for t in ad.parameters(params) if t.grad is not None]
    total = np.sqrt(sum(float((t.grad ** 2).sum()) for t in tensors))
    if total > max_norm and total > 0.0:
        scale = max_norm / total
        for t in tensors:
            t.grad *= scale
    return total


def ppo_update(params: dict, cfg: net.NetConfig, batch: TrajectoryBatch,
               tcfg: TrainConfig, optimizer: AdamW,
               rng: np.random.Generator) -> dict:
    """Clipped-surrogate PPO over uniformly sampled minibatches from the
    combined pool; stops all remaining minibatches once approx-KL exceeds
    the threshold. Aborts with parameters unchanged on a non-finite loss."""
    if batch.advantages is None:
        raise TrainerError("call compute_advantages before ppo_update")
    loss_spec = net.LossSpec(tcfg.clip_eps, tcfg.value_coef, tcfg.entropy_coef)
    backup = {k: t.data.copy() for k, t in net._flatten(params).items()}
    stats_acc: list[dict] = []
    early_stop = -1
    done = False
    for step in range(tcfg.train_steps):
        if done:
            break
        for mb_i in range(tcfg.minibatches):
            take = min(tcfg.batch_size, batch.size)
            idx = rng.choice(batch.size, size=take, replace=False)
            mb = net.pack_minibatch(
                cfg, [batch.observations[i] for i in idx],
                [batch.actions[i] for i in idx],
                [batch.log_probs[i] for i in idx],
                batch.advantages[idx], batch.returns[idx])
            try:
                loss, stats = net.gradients(params, cfg, mb, loss_spec)
            except net.NetError:
                for key, tensor in net._flatten(params).items():
                    tensor.data = backup[key]
                raise
            if stats["approx_kl"] > tcfg.kl_stop:
                early_stop = step * tcfg.minibatches + mb_i
                done = True
                break
            grad_norm = clip_gradients(params, tcfg.grad_clip)
            optimizer.step()
            stats["loss"] = loss
            stats["grad_norm"] = grad_norm
            stats_acc.append(stats)
    if not stats_acc:
        stats_acc.append({"loss": 0.0, "policy_loss": 0.0, "value_loss": 0.0,
                          "entropy": 0.0, "approx_kl": 0.0, "clip_frac": 0.0,
                          "grad_norm": 0.0})
    out = {k: float(np.mean([s[k] for s in stats_acc]))
           for k in stats_acc[0]}
    out["early_stop"] = early_stop
    out["minibatches_done"] = len(stats_acc)
    return out


def elo_update(rating_a: float, rating_b: float, margin: float,
               k_factor: float = 32.0,
               margin_cap: float = 1.0) -> tuple[float, float]:
    """Margin-weighted ELO transfer; the rating sum is conserved."""
    expected = 1.0 / (1.0 + 10.0 ** ((rating_b - rating_a) / 400.0))
    score = 0.5 + 0.5 * np.clip(margin / margin_cap, -1.0, 1.0)
    delta = k_factor * (score - expected)
    return rating_a + delta, rating_b - delta


@dataclass
class LeagueMember:
    params: dict
    rating: float = 1200.0


@dataclass
class LeagueState:
    members: list[LeagueMember]
    capacity: int

    def min_index(self) -> int:
        return int(np.argmin([m.rating for m in self.members]))


def league_step(league: LeagueState, candidate_params: dict,
                cfg: net.NetConfig, tcfg: TrainConfig, seed: int,
                match_budget: int | None = None) -> bool:
    """Candidate plays every member; joins by replacing the lowest-rated
    member if its earned rating exceeds that member's. Returns acceptance."""
    if not league.members:
        raise TrainerError("league must be nonempty")
    spec = engine.game_spec(cfg.game_id)
    hands = match_budget if match_budget is not None else tcfg.league_match_hands
    rating = 1200.0
    for i, member in enumerate(league.members):
        report = play_match(AgentPolicy(candidate_params, cfg),
                            AgentPolicy(member.params, cfg), spec, hands,
                            session_len=tcfg.episode_len, seed=seed * 613 + i)
        rating, member.rating = elo_update(rating, member.rating, report.mean,
                                           tcfg.elo_k, tcfg.margin_cap)
    low = league.min_index()
    if rating > league.members[low].rating:
        league.members[low] = LeagueMember(_snapshot(candidate_params), rating)
        return True
    return False


def _snapshot(params: dict) -> dict:
    out = {}
    for key, val in params.items():
        if isinstance(val, dict):
            out[key] = _snapshot(val)
        else:
            out[key] = ad.Tensor(val.data.copy(), requires_grad=True)
    return out


METRIC_FIELDS = ("epoch", "reward_league", "reward_toys", "reward_buffer",
                 "loss", "policy_loss", "value_loss", "entropy", "approx_kl",
                 "clip_frac", "grad_norm", "early_stop", "minibatches_done",
                 "league_elos")


def train(tcfg: TrainConfig, progress=None) -> tuple[dict, net.NetConfig, str]:
    """Full training loop; returns (params, net config, metrics CSV path).

    Every epoch: one rollout per pool (league member, curriculum toy,
    buffer snapshot, each sampled for the epoch), combined-pool PPO. Every
    checkpoint_freq epochs: snapshot into the buffer, league step, persist
    a checkpoint. The metrics log gets one row per epoch.
    """
    cfg = net.net_config(tcfg.game_id)
    params = net.init_params(cfg, tcfg.seed)
    optimizer = AdamW(params, tcfg.learning_rate, tcfg.weight_decay)
    league = LeagueState([LeagueMember(_snapshot(params))], tcfg.league_size)
    buffer: deque = deque([_snapshot(params)], maxlen=tcfg.buffer_size)
    os.makedirs(tcfg.out_dir, exist_ok=True)
    metrics_path = os.path.join(tcfg.out_dir, "metrics.csv")
    last_good = os.path.join(tcfg.out_dir, "checkpoint_init.npz")
    net.save_checkpoint(last_good, params, cfg)
    with open(metrics_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRIC_FIELDS)
        for epoch in range(tcfg.epochs):
            rng = np.random.default_rng([tcfg.seed, 7919, epoch])
            batch = TrajectoryBatch()
            pool_rewards = {}
            opponents = {
                "league": (lambda m=rng.integers(len(league.members)):
                           AgentPolicy(league.members[m].params, cfg),
                           "league"),
                "toys": None,
                "buffer": (lambda b=rng.integers(len(buffer)):
                           AgentPolicy(buffer[b], cfg), "snapshot"),
            }
            toy_id = tcfg.curriculum[rng.integers(len(tcfg.curriculum))]
            toy = toys.get_toy(tcfg.game_id, toy_id)
            opponents["toys"] = (lambda: TablePolicy(toys.ToyPolicy(toy)),
                                 toy_id)
            for pool_name, (factory, opp_id) in opponents.items():
                part = rollout(params, cfg, factory, opp_id, pool_name,
                               tcfg.envs_per_opponent, tcfg.episode_len,
                               seed=int(rng.integers(2 ** 31)))
                pool_rewards[pool_name] = float(np.mean(part.hand_rewards))
                batch.extend(part)
            compute_advantages(batch, gamma=1.0, lam=tcfg.gae_lambda)
            stats = ppo_update(params, cfg, batch, tcfg, optimizer, rng)
            if not all(np.isfinite(t.data).all()
                       for t in ad.parameters(params)):
                raise TrainerError(
                    f"non-finite parameters at epoch {epoch}; last good "
                    f"checkpoint: {last_good}")
            if (epoch + 1) % tcfg.checkpoint_freq == 0:
                buffer.append(_snapshot(params))
                league_step(league, params, cfg, tcfg, seed=tcfg.seed + epoch)
                last_good = os.path.join(tcfg.out_dir,
                                         f"checkpoint_{epoch + 1:06d}.npz")
                net.save_checkpoint(last_good, params, cfg)
            writer.writerow([
                epoch, f"{pool_rewards['league']:.6f}",
                f"{pool_rewards['toys']:.6f}", f"{pool_rewards['buffer']:.6f}",
                f"{stats['loss']:.6f}", f"{stats['policy_loss']:.6f}",
                f"{stats['value_loss']:.6f}", f"{stats['entropy']:.6f}",
                f"{stats['approx_kl']:.6f}", f"{stats['clip_frac']:.6f}",
                f"{stats['grad_norm']:.6f}", stats["early_stop"],
                stats["minibatches_done"],
                ";".join(f"{m.rating:.1f}" for m in league.members)])
            if progress is not None:
                progress(epoch, pool_rewards, stats)
    final = os.path.join(tcfg.out_dir, "checkpoint_final.npz")
    net.save_checkpoint(final, params, cfg)
    return params, cfg, metrics_path
