"""Nash equilibrium construction, exact expected value, and exploitability.

Kuhn gets the closed-form one-parameter equilibrium family; Leduc is solved
with vanilla (full-traversal) CFR over the flattened tree.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import engine
from ._kernels import CfrKernel
from .engine import KUHN, RANK_NAMES, GameSpec, HandState, InfoSetKey
from .tree import GameTree, build_tree


class SolverError(ValueError):
    pass


class PolicyTable:
    """Map from information-set keys to distributions over legal actions."""

    def __init__(self, game_id: str, rows: dict[InfoSetKey, dict[int, float]]):
        self.game_id = game_id
        self.rows = rows
        for key, row in rows.items():
            total = sum(row.values())
            if abs(total - 1.0) > 1e-9:
                raise SolverError(f"row for {key} sums to {total}, not 1")

    def action_probs(self, key: InfoSetKey, legal: tuple[int, ...],
                     hand_index: int = 0) -> np.ndarray:
        try:
            row = self.rows[key]
        except KeyError:
            raise SolverError(f"policy has no row for reachable key {key}") from None
        return np.asarray([row.get(a, 0.0) for a in legal], dtype=float)

    def sample(self, rng: np.random.Generator, key: InfoSetKey,
               legal: tuple[int, ...], hand_index: int = 0) -> int:
        probs = self.action_probs(key, legal, hand_index)
        return legal[rng.choice(len(legal), p=probs)]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["infoset_key", "action", "probability"])
            for key in sorted(self.rows, key=str):
                for action in sorted(self.rows[key]):
                    w.writerow([str(key), action, f"{self.rows[key][action]:.17g}"])

    @classmethod
    def from_csv(cls, game_id: str, path) -> "PolicyTable":
        rows: dict[InfoSetKey, dict[int, float]] = {}
        with open(path, newline="") as fh:
            for rec in csv.DictReader(fh):
                key = _parse_key(game_id, rec["infoset_key"])
                rows.setdefault(key, {})[int(rec["action"])] = float(rec["probability"])
        return cls(game_id, rows)


def _parse_key(game_id: str, text: str) -> InfoSetKey:
    rank_s, comm_s, hist = text.split("|")
    comm = None if comm_s == "-" else RANK_NAMES.index(comm_s)
    return InfoSetKey(game_id, RANK_NAMES.index(rank_s), comm,
                      "" if hist == "(start)" else hist)


def _kuhn_key(rank: int, history: str) -> InfoSetKey:
    return InfoSetKey(KUHN, rank, None, history)


def kuhn_ne_strategy(alpha: float, seat: int) -> PolicyTable:
    """Closed-form Kuhn equilibrium family; seat 0 = first actor."""
    if not 0.0 <= alpha <= 1.0 / 3.0:
        raise SolverError(f"alpha must lie in [0, 1/3], got {alpha}")
    if seat == 0:
        bet = {"": (alpha, 0.0, 3.0 * alpha),
               "p": (0.0, 0.0, 1.0),
               "b": (0.0, 1.0 / 3.0 + alpha, 1.0),
               "pb": (0.0, 1.0 / 3.0 + alpha, 1.0)}
    elif seat == 1:
        bet = {"p": (1.0 / 3.0, 0.0, 1.0),
               "b": (0.0, 1.0 / 3.0, 1.0)}
    else:
        raise SolverError(f"seat must be 0 or 1, got {seat}")
    rows = {}
    for history, per_rank in bet.items():
        for rank, b in enumerate(per_rank):
            rows[_kuhn_key(rank, history)] = {engine.PASS: 1.0 - b, engine.BET: b}
    return PolicyTable(KUHN, rows)


def kuhn_ne_profile(alpha: float) -> PolicyTable:
    """Both seats' equilibrium rows merged into one profile table."""
    first = kuhn_ne_strategy(alpha, 0)
    second = kuhn_ne_strategy(alpha, 1)
    rows = {k: dict(v) for k, v in first.rows.items()
            if k.history in ("", "pb")}
    rows.update({k: dict(v) for k, v in second.rows.items()})
    return PolicyTable(KUHN, rows)


def exact_ev(spec: GameSpec, policy_p0, policy_p1, dealer_seat: int = 0) -> float:
    """Full-tree expectation (chips for seat 0); no sampling."""
    total = 0.0
    for deal, prob in engine.enumerate_deals(spec):
        state = engine.new_hand(spec, deal, dealer_seat)
        total += prob * _ev(state, policy_p0, policy_p1)
    return total


def _ev(state: HandState, p0, p1) -> float:
    if state.terminal:
        return engine.terminal_payoff(state)[0]
    if state.awaiting_community:
        rem = engine.remaining_positions(state)
        return sum(_ev(engine.deal_community(state, pos), p0, p1)
                   for pos in rem) / len(rem)
    seat = state.to_act
    policy = p0 if seat == 0 else p1
    legal = engine.legal_actions(state)
    probs = policy.action_probs(engine.info_set_key(state, seat), legal)
    value = 0.0
    for prob, action in zip(probs, legal):
        if prob > 0.0:
            value += prob * _ev(engine.apply_action(state, action), p0, p1)
    return value


@dataclass
class CfrState:
    regrets: np.ndarray       # [n_infosets, max_actions]
    strategy_sum: np.ndarray
    iteration: int = 0


class CfrSolver:
    """Vanilla CFR with regret matching; both seats updated every iteration."""

    def __init__(self, spec: GameSpec, game_tree: GameTree | None = None):
        self.spec = spec
        self.tree = game_tree if game_tree is not None else build_tree(spec)
        shape = (self.tree.n_infosets, self.tree.max_actions)
        self.state = CfrState(np.zeros(shape), np.zeros(shape))
        self._kernel = CfrKernel(self.tree)

    def run(self, iterations: int) -> None:
        if iterations < 1:
            raise SolverError("iterations must be >= 1")
        self._kernel.run(iterations, self.state.regrets, self.state.strategy_sum)
        self.state.iteration += iterations

    def average_policy(self) -> PolicyTable:
        rows = {}
        for i, key in enumerate(self.tree.infoset_keys):
            legal = self.tree.infoset_legal[i]
            weights = self.state.strategy_sum[i, :len(legal)]
            total = weights.sum()
            if total > 0.0:
                probs = weights / total
            else:
                probs = np.full(len(legal), 1.0 / len(legal))
            rows[key] = {a: float(p) for a, p in zip(legal, probs)}
        return PolicyTable(self.spec.game_id, rows)


def cfr_solve(spec: GameSpec, iterations: int) -> tuple[PolicyTable, CfrState]:
    solver = CfrSolver(spec)
    solver.run(iterations)
    return solver.average_policy(), solver.state


def exploitability(spec: GameSpec, policy) -> float:
    """Seat-averaged best-response gain over the game value (0 at any NE).

    In a zero-sum game the seat game values cancel, so this reduces to the
    mean of the two best-response values against the profile.
    """
    from .oracle import best_response  # local import: oracle depends on solver

    _, br_as_first = best_response(spec, policy, hero_seat=0)
    _, br_as_second = best_response(spec, policy, hero_seat=1)
    # mathematically >= 0; clamp the last-bit float residue at an exact NE
    return max(0.5 * (br_as_first + br_as_second), 0.0)
