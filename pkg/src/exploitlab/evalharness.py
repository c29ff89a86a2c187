"""Monte-Carlo and exact evaluation: seat-randomized matches, per-toy pool
reports, NE-vs-toy tables, BR fractions, masked/unmasked ablation, and
confidence intervals.

Policies are wrapped behind a small session interface so toys, tabulated
strategies, and network checkpoints can all sit on either side of a match;
session state (the cross-hand history) resets between sessions.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from . import engine, histenc, net, oracle, solver, toys
from .engine import GameSpec, HandState

KUHN_NE_REPORT_ALPHA = 0.1  # first-actor reference point for the NE tables
LEDUC_NE_CFR_ITERS = 200_000
REPORT_COLUMNS = ("toy_id", "pool", "mode", "hands", "mean", "seat0_mean",
                  "seat1_mean", "stderr", "ci95", "br_ceiling", "br_fraction")


class EvalError(ValueError):
    pass


@dataclass
class MatchReport:
    opponent_id: str
    hands: int
    mean: float
    seat0_mean: float  # hero as first actor
    seat1_mean: float  # hero as second actor
    stderr: float
    ci95: float
    mode: str = "exploiter"
    pool: str = "-"
    br_ceiling: float | None = None
    br_fraction: float | None = None


def ci95(samples: np.ndarray) -> tuple[float, float]:
    """Sample mean and 1.96-sigma half-width."""
    samples = np.asarray(samples, dtype=float)
    if samples.size < 2:
        raise EvalError("ci95 requires at least 2 samples")
    half = 1.96 * samples.std(ddof=1) / np.sqrt(samples.size)
    return float(samples.mean()), float(half)


class TablePolicy:
    """Session adapter for anything keyed by information sets (PolicyTable,
    ToyPolicy, best-response tables)."""

    def __init__(self, table):
        self._table = table
        self._hand_index = 0

    def begin_session(self) -> None:
        self._hand_index = 0

    def act(self, state: HandState, seat: int,
            rng: np.random.Generator) -> int:
        legal = engine.legal_actions(state)
        key = engine.info_set_key(state, seat)
        probs = self._table.action_probs(key, legal, self._hand_index)
        return legal[rng.choice(len(legal), p=probs)]

    def end_hand(self, hand: engine.CompletedHand, seat: int) -> None:
        self._hand_index += 1


class AgentPolicy:
    """Session adapter for a network checkpoint.

    Per-hand summaries are cached so the context z is recomputed once per
    completed hand instead of once per decision; numerically this matches
    a fresh full encode because the encoder is deterministic in eval mode.
    """

    def __init__(self, params: dict, cfg: net.NetConfig,
                 mask_history: bool = False, record: bool = False):
        self.cfg = cfg
        self.spec = engine.game_spec(cfg.game_id)
        self.mask_history = mask_history
        self.record = record
        self._encoder = histenc.FastEncoder(params["enc"], cfg.encoder)
        self._trunk = net.FastTrunk(params, cfg)
        self.begin_session()

    def begin_session(self) -> None:
        self.hands: list[histenc.TokenSequence] = []
        self._summaries: list[np.ndarray] = []
        self._z: np.ndarray | None = None
        self.samples: list[tuple] = []  # (obs, action, logp, value)

    def _context(self) -> np.ndarray:
        if self.mask_history or not self.hands:
            return np.zeros(self.cfg.emb_dim)
        if self._z is None:
            self._z = self._encoder.context(np.stack(self._summaries))
        return self._z

    def act(self, state: HandState, seat: int,
            rng: np.random.Generator) -> int:
        obs = net.observation_from_state(self.spec, state, seat,
                                         tuple(self.hands))
        log_probs, value = self._trunk(obs.card, obs.action, self._context(),
                                       obs.legal_mask)
        probs = np.exp(log_probs)
        probs[~obs.legal_mask] = 0.0
        probs /= probs.sum()
        action = int(rng.choice(len(probs), p=probs))
        if self.record:
            self.samples.append((obs, action, float(log_probs[action]),
                                 value))
        return action

    def end_hand(self, hand: engine.CompletedHand, seat: int) -> None:
        seq = histenc.tokenize_hand(hand, seat)
        self.hands.append(seq)
        if not self.mask_history:
            syms, mask = histenc.pack_hands(self.cfg.encoder, self.spec, [seq])
            self._summaries.append(self._encoder.hand_summary(syms, mask)[0])
            self._z = None

    def drain_samples(self) -> list[tuple]:
        out = self.samples
        self.samples = []
        return out


def play_hand(spec: GameSpec, policies: dict[int, object], dealer_seat: int,
              rng: np.random.Generator) -> engine.CompletedHand:
    """One hand with chance events drawn from rng; both seats notified."""
    deals = engine.enumerate_deals(spec)
    deal, _ = deals[rng.integers(len(deals))]
    state = engine.new_hand(spec, deal, dealer_seat)
    while not state.terminal:
        if state.awaiting_community:
            rem = engine.remaining_positions(state)
            state = engine.deal_community(state, rem[rng.integers(len(rem))])
            continue
        seat = state.to_act
        state = engine.apply_action(
            state, policies[seat].act(state, seat, rng))
    hand = engine.completed_hand(state)
    for seat, policy in policies.items():
        policy.end_hand(hand, seat)
    return hand


def play_match(hero, villain, spec: GameSpec, n_hands: int,
               session_len: int = 100, seed: int = 0,
               opponent_id: str = "-", mode: str = "exploiter") -> MatchReport:
    """n_hands split evenly across seat assignments, grouped into sessions of
    session_len hands for history accumulation. Hero is seat 0."""
    if n_hands < 1:
        raise EvalError("n_hands must be >= 1")
    rng = np.random.default_rng(seed)
    rewards = np.empty(n_hands)
    seat_sums = [0.0, 0.0]
    seat_counts = [0, 0]
    half = n_hands - n_hands // 2
    for i in range(n_hands):
        if i % session_len == 0:
            hero.begin_session()
            villain.begin_session()
        dealer = 0 if i < half else 1  # hero first actor in the first half
        hand = play_hand(spec, {0: hero, 1: villain}, dealer, rng)
        rewards[i] = hand.payoffs[0]
        seat_sums[dealer] += hand.payoffs[0]
        seat_counts[dealer] += 1
    mean, half_width = ci95(rewards) if n_hands >= 2 else (float(rewards[0]), 0.0)
    stderr = half_width / 1.96 if n_hands >= 2 else 0.0
    return MatchReport(
        opponent_id=opponent_id, hands=n_hands, mean=mean,
        seat0_mean=seat_sums[0] / max(seat_counts[0], 1),
        seat1_mean=seat_sums[1] / max(seat_counts[1], 1),
        stderr=stderr, ci95=half_width, mode=mode)


def _toy_session_policy(toy: toys.ToySpec) -> TablePolicy:
    return TablePolicy(toys.ToyPolicy(toy))


def evaluate_pool(params: dict, cfg: net.NetConfig, pool: str,
                  mode: str = "exploiter", hands_per_toy: int = 2000,
                  seed: int = 0, session_len: int = 100
                  ) -> tuple[list[MatchReport], float]:
    """One MatchReport per toy plus the unweighted pool aggregate."""
    if pool not in ("id", "ood"):
        raise EvalError(f"pool must be 'id' or 'ood', got {pool!r}")
    if mode not in ("exploiter", "masked"):
        raise EvalError(f"mode must be 'exploiter' or 'masked', got {mode!r}")
    spec = engine.game_spec(cfg.game_id)
    reports = []
    for i, toy in enumerate(toys.pool(cfg.game_id, pool)):
        hero = AgentPolicy(params, cfg, mask_history=(mode == "masked"))
        rep = play_match(hero, _toy_session_policy(toy), spec, hands_per_toy,
                         session_len, seed=seed * 10007 + i,
                         opponent_id=toy.toy_id, mode=mode)
        rep.pool = pool
        if toy.stationary:
            rep.br_ceiling = oracle.br_ceiling(spec, toy)
            rep.br_fraction = oracle.br_fraction(rep.mean, rep.br_ceiling)
        else:
            rep.br_ceiling = oracle.SWITCH_MF_REPORTED_CEILING
        reports.append(rep)
    aggregate = float(np.mean([r.mean for r in reports]))
    return reports, aggregate


def _kuhn_ne_vs_toy(spec: GameSpec, toy: toys.ToySpec,
                    alpha: float) -> tuple[float, float]:
    """Exact (NE-first-actor, NE-second-actor) values; the scheduled switcher
    is the average of its phase policies (its period divides the session)."""
    ne0 = solver.kuhn_ne_strategy(alpha, 0)
    ne1 = solver.kuhn_ne_strategy(alpha, 1)
    phases = ([toys.get_toy(spec.game_id, p) for p in toy.schedule["phases"]]
              if not toy.stationary else [toy])
    as_first, as_second = 0.0, 0.0
    for phase in phases:
        opp = toys.ToyPolicy(phase)
        as_first += solver.exact_ev(spec, ne0, opp) / len(phases)
        as_second += -solver.exact_ev(spec, opp, ne1) / len(phases)
    return as_first, as_second


def ne_vs_toys_report(game_id: str, seed: int = 0,
                      mc_hands: int = 20_000,
                      cfr_iters: int = LEDUC_NE_CFR_ITERS) -> list[dict]:
    """Per-toy and aggregate NE reward rows, sorted by descending mean within
    each pool. Kuhn is exact; Leduc is Monte Carlo against a CFR solution
    (equilibrium non-uniqueness and MC error both apply there)."""
    spec = engine.game_spec(game_id)
    rows = []
    if game_id == engine.KUHN:
        for pool in ("id", "ood"):
            for toy in toys.pool(game_id, pool):
                first, second = _kuhn_ne_vs_toy(spec, toy,
                                                KUHN_NE_REPORT_ALPHA)
                rows.append({"toy_id": toy.toy_id, "pool": pool,
                             "seat0_mean": first, "seat1_mean": second,
                             "mean": 0.5 * (first + second),
                             "hands": 0, "mode": "exact"})
    else:
        policy, _ = solver.cfr_solve(spec, cfr_iters)
        for pool in ("id", "ood"):
            for i, toy in enumerate(toys.pool(game_id, pool)):
                rep = play_match(TablePolicy(policy),
                                 _toy_session_policy(toy), spec, mc_hands,
                                 seed=seed * 10007 + i,
                                 opponent_id=toy.toy_id)
                rows.append({"toy_id": toy.toy_id, "pool": pool,
                             "seat0_mean": rep.seat0_mean,
                             "seat1_mean": rep.seat1_mean, "mean": rep.mean,
                             "hands": mc_hands, "mode": "mc"})
    ordered = []
    for pool in ("id", "ood"):
        members = sorted((r for r in rows if r["pool"] == pool),
                         key=lambda r: -r["mean"])
        ordered.extend(members)
        ordered.append({"toy_id": f"{pool}_aggregate", "pool": pool,
                        "seat0_mean": float("nan"), "seat1_mean": float("nan"),
                        "mean": float(np.mean([m["mean"] for m in members])),
                        "hands": 0, "mode": members[0]["mode"]})
    return ordered


def reports_to_csv(reports: list[MatchReport], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(REPORT_COLUMNS)
        for r in reports:
            w.writerow([r.opponent_id, r.pool, r.mode, r.hands,
                        f"{r.mean:.6f}", f"{r.seat0_mean:.6f}",
                        f"{r.seat1_mean:.6f}", f"{r.stderr:.6f}",
                        f"{r.ci95:.6f}",
                        "" if r.br_ceiling is None else f"{r.br_ceiling:.6f}",
                        "" if r.br_fraction is None else f"{r.br_fraction:.6f}"])


def reports_to_json(reports: list[MatchReport], path) -> None:
    payload = [{"toy_id": r.opponent_id, "pool": r.pool, "mode": r.mode,
                "hands": r.hands, "mean": r.mean, "seat0_mean": r.seat0_mean,
                "seat1_mean": r.seat1_mean, "stderr": r.stderr,
                "ci95": r.ci95, "br_ceiling": r.br_ceiling,
                "br_fraction": r.br_fraction} for r in reports]
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
