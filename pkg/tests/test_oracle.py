"""Best-response oracle tests against independent brute-force references."""
import itertools

import numpy as np
import pytest

from exploitlab import engine, oracle, solver, toys
from exploitlab.oracle import best_response, br_ceiling, br_fraction
from exploitlab.toys import NonStationaryToyError, ToyPolicy


def brute_force_best_value(spec, opponent, hero_seat):
    """Independent reference: enumerate every pure hero strategy on the
    hero's reachable infosets (Kuhn only; 12 infosets, all binary)."""
    keys = []
    seen = set()

    def collect(state):
        if state.terminal:
            return
        if state.to_act == hero_seat:
            key = engine.info_set_key(state, hero_seat)
            if key not in seen:
                seen.add(key)
                keys.append(key)
        for a in engine.legal_actions(state):
            collect(engine.apply_action(state, a))

    for deal, _ in engine.enumerate_deals(spec):
        collect(engine.new_hand(spec, deal, 0))

    class Pure:
        def __init__(self, choice):
            self.choice = choice

        def action_probs(self, key, legal, hand_index=0):
            a = self.choice[key]
            return np.array([1.0 if x == a else 0.0 for x in legal])

    best = -np.inf
    for assignment in itertools.product((0, 1), repeat=len(keys)):
        hero = Pure(dict(zip(keys, assignment)))
        if hero_seat == 0:
            ev = solver.exact_ev(spec, hero, opponent)
        else:
            ev = -solver.exact_ev(spec, opponent, hero)
        best = max(best, ev)
    return best


@pytest.mark.parametrize("toy_id", ["f", "cs", "ab", "m", "abq"])
def test_best_response_matches_brute_force_kuhn(toy_id):
    spec = engine.kuhn_spec()
    opponent = ToyPolicy(toys.get_toy("kuhn", toy_id))
    for seat in (0, 1):
        _, value = best_response(spec, opponent, seat)
        reference = brute_force_best_value(spec, opponent, seat)
        assert abs(value - reference) < 1e-12


def test_best_response_policy_is_pure_and_achieves_value():
    spec = engine.kuhn_spec()
    opponent = ToyPolicy(toys.get_toy("kuhn", "cs"))
    policy, value = best_response(spec, opponent, 0)
    for row in policy.rows.values():
        assert sorted(row.values()) in ([0.0, 1.0], [1.0])
    assert abs(solver.exact_ev(spec, policy, opponent) - value) < 1e-12


def test_best_response_beats_any_fixed_alternative():
    spec = engine.kuhn_spec()
    opponent = ToyPolicy(toys.get_toy("kuhn", "abj"))
    _, value = best_response(spec, opponent, 0)
    for alpha in (0.0, 0.1, 1.0 / 3.0):
        alt = solver.kuhn_ne_profile(alpha)
        assert value >= solver.exact_ev(spec, alt, opponent) - 1e-12


def test_br_value_against_ne_is_zero():
    spec = engine.kuhn_spec()
    ne = solver.kuhn_ne_profile(0.2)
    for seat in (0, 1):
        _, value = best_response(spec, ne, seat)
        gain = value - (-1.0 / 18.0 if seat == 0 else 1.0 / 18.0)
        assert abs(gain) < 1e-12


def test_tie_break_prefers_lower_action():
    spec = engine.kuhn_spec()

    class FoldToEverything:
        """Opponent who always passes: betting and checking with a king as
        second actor after a pass both win exactly the ante."""

        def action_probs(self, key, legal, hand_index=0):
            return np.array([1.0, 0.0])

    policy, _ = best_response(spec, FoldToEverything(), 1)
    # king after opponent pass: both actions yield +1, lower index wins
    key = None
    for k in policy.rows:
        if k.own_rank == engine.KING and k.history == "p":
            key = k
    assert key is not None
    assert policy.rows[key][engine.PASS] == 1.0


def test_br_ceiling_folder_is_one():
    spec = engine.kuhn_spec()
    assert abs(br_ceiling(spec, toys.get_toy("kuhn", "f")) - 1.0) < 1e-12


def test_br_ceiling_rejects_scheduled_toy():
    with pytest.raises(NonStationaryToyError):
        br_ceiling(engine.kuhn_spec(), toys.get_toy("kuhn", "ood_switch_mf"))


def test_br_fraction_threshold():
    assert br_fraction(0.5, 1.0) == 0.5
    assert br_fraction(0.5, 0.005) is None


def test_leduc_br_value_positive_against_all_id_toys():
    spec = engine.leduc_spec()
    for toy in toys.pool("leduc", "id"):
        assert br_ceiling(spec, toy) > 0.0
