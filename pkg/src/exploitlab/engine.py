"""Exact extensive-form engines for Kuhn poker and Leduc Hold'em.

All state objects are immutable; transitions return fresh states, so any
number of workers may traverse independent subtrees concurrently.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from itertools import permutations

JACK, QUEEN, KING = 0, 1, 2
RANK_NAMES = "JQK"

KUHN = "kuhn"
LEDUC = "leduc"

# Kuhn actions (2-way head).
PASS, BET = 0, 1
# Leduc actions (3-way head): CALL doubles as check, RAISE as the opening bet.
CALL, RAISE, FOLD = 0, 1, 2


class EngineError(ValueError):
    pass


@dataclass(frozen=True)
class GameSpec:
    game_id: str
    deck: tuple[int, ...]        # rank per deck position
    ante: int
    rounds: int
    bet_sizes: tuple[int, ...]   # per round
    raise_cap: int               # wagers allowed per round (bet counts as one)
    action_arity: int

    def rank_of(self, pos: int) -> int:
        return self.deck[pos]


def kuhn_spec() -> GameSpec:
    return GameSpec(KUHN, (JACK, QUEEN, KING), ante=1, rounds=1,
                    bet_sizes=(1,), raise_cap=1, action_arity=2)


def leduc_spec() -> GameSpec:
    return GameSpec(LEDUC, (JACK, JACK, QUEEN, QUEEN, KING, KING), ante=1,
                    rounds=2, bet_sizes=(2, 4), raise_cap=2, action_arity=3)


def game_spec(game_id: str) -> GameSpec:
    if game_id == KUHN:
        return kuhn_spec()
    if game_id == LEDUC:
        return leduc_spec()
    raise EngineError(f"unknown game: {game_id}")


@dataclass(frozen=True)
class InfoSetKey:
    game_id: str
    own_rank: int
    community_rank: int | None
    history: str  # per-round strings joined by '/'; '' at the opening node

    def __str__(self) -> str:
        comm = "-" if self.community_rank is None else RANK_NAMES[self.community_rank]
        hist = self.history if self.history else "(start)"
        return f"{RANK_NAMES[self.own_rank]}|{comm}|{hist}"


@dataclass(frozen=True)
class HandState:
    spec: GameSpec
    deal: tuple[int, int]          # deck position per seat
    dealer_seat: int               # acts first in every round
    community_pos: int | None
    round_index: int               # 1-based
    history: tuple[str, ...]       # one action string per round so far
    to_act: int | None
    contrib: tuple[int, int]
    terminal: bool
    awaiting_community: bool = False

    @property
    def pot(self) -> int:
        return self.contrib[0] + self.contrib[1]

    def private_rank(self, seat: int) -> int:
        return self.spec.rank_of(self.deal[seat])

    @property
    def community_rank(self) -> int | None:
        if self.community_pos is None:
            return None
        return self.spec.rank_of(self.community_pos)


@dataclass(frozen=True)
class CompletedHand:
    game_id: str
    dealer_seat: int
    ranks: tuple[int, int]
    community_rank: int | None
    actions: tuple[tuple[int, int], ...]  # (seat, action) in play order
    round1_actions: int  # the community card, if any, was dealt after this many
    showdown: bool
    payoffs: tuple[float, float]


def new_hand(spec: GameSpec, deal: tuple[int, int], dealer_seat: int) -> HandState:
    if dealer_seat not in (0, 1):
        raise EngineError(f"dealer_seat must be 0 or 1, got {dealer_seat}")
    if len(deal) != 2 or deal[0] == deal[1]:
        raise EngineError(f"deal must use two distinct deck positions, got {deal}")
    for pos in deal:
        if not 0 <= pos < len(spec.deck):
            raise EngineError(f"deck position {pos} not in {spec.game_id} deck")
    return HandState(spec=spec, deal=tuple(deal), dealer_seat=dealer_seat,
                     community_pos=None, round_index=1, history=("",),
                     to_act=dealer_seat, contrib=(spec.ante, spec.ante),
                     terminal=False)


def legal_actions(state: HandState) -> tuple[int, ...]:
    if state.terminal:
        raise EngineError("no legal actions in a terminal state")
    if state.awaiting_community:
        raise EngineError("community card pending; deal it before acting")
    if state.spec.game_id == KUHN:
        return (PASS, BET)
    rnd = state.history[-1]
    pending = bool(rnd) and rnd[-1] in "br"
    if not pending:
        return (CALL, RAISE)  # check / bet; nothing to fold to
    wagers = sum(c in "br" for c in rnd)
    if wagers < state.spec.raise_cap:
        return (CALL, RAISE, FOLD)
    return (CALL, FOLD)


def _other(seat: int) -> int:
    return 1 - seat


def apply_action(state: HandState, action: int) -> HandState:
    if action not in legal_actions(state):
        raise EngineError(f"illegal action {action} at history {state.history}")
    if state.spec.game_id == KUHN:
        return _apply_kuhn(state, action)
    return _apply_leduc(state, action)


def _apply_kuhn(state: HandState, action: int) -> HandState:
    h = state.history[0]
    seat = state.to_act
    contrib = list(state.contrib)
    if action == BET:
        contrib[seat] += state.spec.bet_sizes[0]
        h += "b"
    else:
        h += "p"
    terminal = h in ("pp", "bp", "bb", "pbp", "pbb")
    return replace(state, history=(h,), contrib=tuple(contrib),
                   to_act=None if terminal else _other(seat), terminal=terminal)


def _apply_leduc(state: HandState, action: int) -> HandState:
    rnd = state.history[-1]
    seat = state.to_act
    contrib = list(state.contrib)
    pending = bool(rnd) and rnd[-1] in "br"
    bet = state.spec.bet_sizes[state.round_index - 1]
    if action == FOLD:
        rnd += "f"
        return replace(state, history=state.history[:-1] + (rnd,),
                       to_act=None, terminal=True)
    if action == RAISE:
        wagers = sum(c in "br" for c in rnd)
        contrib[seat] = contrib[_other(seat)] + bet
        rnd += "b" if wagers == 0 else "r"
        return replace(state, history=state.history[:-1] + (rnd,),
                       contrib=tuple(contrib), to_act=_other(seat))
    # CALL: a check when nothing is pending, otherwise match the bet.
    if pending:
        contrib[seat] = contrib[_other(seat)]
        rnd += "c"
        closed = True
    else:
        rnd += "x"
        closed = rnd.endswith("xx")
    history = state.history[:-1] + (rnd,)
    if not closed:
        return replace(state, history=history, contrib=tuple(contrib),
                       to_act=_other(seat))
    if state.round_index < state.spec.rounds:
        return replace(state, history=history + ("",), contrib=tuple(contrib),
                       round_index=state.round_index + 1, to_act=None,
                       awaiting_community=True)
    return replace(state, history=history, contrib=tuple(contrib),
                   to_act=None, terminal=True)


def deal_community(state: HandState, pos: int) -> HandState:
    if not state.awaiting_community:
        raise EngineError("state is not awaiting a community card")
    if pos in state.deal or not 0 <= pos < len(state.spec.deck):
        raise EngineError(f"community position {pos} unavailable")
    return replace(state, community_pos=pos, awaiting_community=False,
                   to_act=state.dealer_seat)


def remaining_positions(state: HandState) -> tuple[int, ...]:
    return tuple(p for p in range(len(state.spec.deck)) if p not in state.deal)


def info_set_key(state: HandState, seat: int) -> InfoSetKey:
    return InfoSetKey(state.spec.game_id, state.private_rank(seat),
                      state.community_rank, "/".join(state.history))


def _fold_seat(state: HandState) -> int | None:
    rnd = state.history[-1]
    if state.spec.game_id == KUHN:
        h = state.history[0]
        if "b" in h and h.endswith("p"):
            # plies alternate from the dealer
            return (state.dealer_seat + len(h) - 1) % 2
        return None
    if rnd.endswith("f"):
        # within a round, plies alternate starting from the dealer
        return (state.dealer_seat + len(rnd) - 1) % 2
    return None


def terminal_payoff(state: HandState) -> tuple[float, float]:
    if not state.terminal:
        raise EngineError("payoff requested for a non-terminal state")
    folder = _fold_seat(state)
    if folder is not None:
        amount = float(state.contrib[folder])
        return (amount, -amount) if folder == 1 else (-amount, amount)
    # showdown
    s0 = _strength(state, 0)
    s1 = _strength(state, 1)
    if s0 == s1:
        return (0.0, 0.0)
    winner = 0 if s0 > s1 else 1
    amount = float(state.contrib[_other(winner)])
    return (amount, -amount) if winner == 0 else (-amount, amount)


def _strength(state: HandState, seat: int) -> tuple[int, int]:
    rank = state.private_rank(seat)
    paired = state.community_rank is not None and rank == state.community_rank
    return (1 if paired else 0, rank)


def enumerate_deals(spec: GameSpec) -> list[tuple[tuple[int, int], float]]:
    pairs = list(permutations(range(len(spec.deck)), 2))
    p = 1.0 / len(pairs)
    return [(pair, p) for pair in pairs]


def completed_hand(state: HandState) -> CompletedHand:
    if not state.terminal:
        raise EngineError("hand is not complete")
    actions = []
    for rnd in state.history:
        for i, _ch in enumerate(rnd):
            seat = (state.dealer_seat + i) % 2
            actions.append((seat, _char_action(state.spec, rnd, i)))
    return CompletedHand(
        game_id=state.spec.game_id, dealer_seat=state.dealer_seat,
        ranks=(state.private_rank(0), state.private_rank(1)),
        community_rank=state.community_rank,
        actions=tuple(actions), round1_actions=len(state.history[0]),
        showdown=_fold_seat(state) is None,
        payoffs=terminal_payoff(state))


def _char_action(spec: GameSpec, rnd: str, i: int) -> int:
    ch = rnd[i]
    if spec.game_id == KUHN:
        return BET if ch == "b" else PASS
    if ch in "br":
        return RAISE
    if ch == "f":
        return FOLD
    return CALL


def serialize_hand(hand: CompletedHand) -> str:
    cards = ",".join(RANK_NAMES[r] for r in hand.ranks)
    comm = "-" if hand.community_rank is None else RANK_NAMES[hand.community_rank]
    acts = ",".join(f"{seat}:{a}" for seat, a in hand.actions)
    pays = ",".join(f"{p:+g}" for p in hand.payoffs)
    return f"{hand.game_id};{hand.dealer_seat};{cards};{comm};{acts};{pays}"
