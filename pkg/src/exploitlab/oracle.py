"""Exact best response against a fixed opponent policy; BR ceilings and
BR-fraction normalization.

The recursion works on the hero's information-set tree: opponent-reach and
chance weights are gathered per hero infoset, hero actions are chosen by
expectimax with ties broken toward the lower action index.
"""
from __future__ import annotations

import numpy as np

from . import engine
from .engine import GameSpec, HandState, InfoSetKey
from .solver import PolicyTable
from .toys import NonStationaryToyError, ToyPolicy, ToySpec

BR_FRACTION_CEILING_THRESHOLD = 0.01

# App-style reported constant for the scheduled Kuhn switcher; BR against a
# non-stationary opponent is not defined by this codebase and is never
# recomputed here.
SWITCH_MF_REPORTED_CEILING = 0.333


def best_response(spec: GameSpec, opponent, hero_seat: int) -> tuple[PolicyTable, float]:
    """Exact expectimax best response; returns (pure BR policy, its value).

    hero_seat 0 means the hero acts first in round 1.
    """
    if hero_seat not in (0, 1):
        raise ValueError(f"hero_seat must be 0 or 1, got {hero_seat}")
    br_rows: dict[InfoSetKey, dict[int, float]] = {}
    villain = 1 - hero_seat

    def walk(state: HandState, weight: float,
             buckets: dict[InfoSetKey, list[tuple[HandState, float]]]) -> float:
        """Advance through opponent/chance moves; returns terminal mass and
        collects hero decision states into per-infoset buckets."""
        if state.terminal:
            return weight * engine.terminal_payoff(state)[hero_seat]
        if state.awaiting_community:
            rem = engine.remaining_positions(state)
            return sum(walk(engine.deal_community(state, pos), weight / len(rem),
                            buckets) for pos in rem)
        seat = state.to_act
        if seat == hero_seat:
            key = engine.info_set_key(state, seat)
            buckets.setdefault(key, []).append((state, weight))
            return 0.0
        legal = engine.legal_actions(state)
        probs = opponent.action_probs(engine.info_set_key(state, villain), legal)
        total = 0.0
        for prob, action in zip(probs, legal):
            if prob > 0.0:
                total += walk(engine.apply_action(state, action), weight * prob,
                              buckets)
        return total

    def value_of(key: InfoSetKey,
                 members: list[tuple[HandState, float]]) -> float:
        legal = engine.legal_actions(members[0][0])
        best_val, best_action = -np.inf, None
        for action in legal:  # ascending index: ties go to the lower action
            sub: dict[InfoSetKey, list[tuple[HandState, float]]] = {}
            q = 0.0
            for state, weight in members:
                q += walk(engine.apply_action(state, action), weight, sub)
            for sub_key, sub_members in sub.items():
                q += value_of(sub_key, sub_members)
            if q > best_val:
                best_val, best_action = q, action
        br_rows[key] = {a: (1.0 if a == best_action else 0.0) for a in legal}
        return best_val

    roots: dict[InfoSetKey, list[tuple[HandState, float]]] = {}
    value = 0.0
    for deal, prob in engine.enumerate_deals(spec):
        value += walk(engine.new_hand(spec, deal, dealer_seat=0), prob, roots)
    for key, members in roots.items():
        value += value_of(key, members)
    return PolicyTable(spec.game_id, br_rows), value


def br_ceiling(spec: GameSpec, toy: ToySpec) -> float:
    """Seat-averaged oracle ceiling against a stationary toy."""
    if not toy.stationary:
        raise NonStationaryToyError(
            f"{toy.toy_id} is scheduled; its BR ceiling is not defined here")
    policy = ToyPolicy(toy)
    _, as_first = best_response(spec, policy, hero_seat=0)
    _, as_second = best_response(spec, policy, hero_seat=1)
    return 0.5 * (as_first + as_second)


def br_fraction(reward: float, ceiling: float) -> float | None:
    """reward / ceiling; None when the ceiling is too small to be meaningful."""
    if ceiling <= BR_FRACTION_CEILING_THRESHOLD:
        return None
    return reward / ceiling
