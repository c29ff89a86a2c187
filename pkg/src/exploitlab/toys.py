"""Toy opponents: fixed tabulated policies over information sets.

Tables live in data/toy_tables.json; the loader validates pool counts and
entry ranges at import time. All toys are pure functions of the observation
(plus the hand counter for the scheduled switcher), so they are trivially
parallel.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .engine import KUHN, LEDUC, RANK_NAMES, InfoSetKey

KUHN_HISTORIES = ("", "p", "b", "pb")

EXPECTED_COUNTS = {(KUHN, "id"): 7, (KUHN, "ood"): 7,
                   (LEDUC, "id"): 8, (LEDUC, "ood"): 12}


class ToyError(ValueError):
    pass


class NonStationaryToyError(ToyError):
    """Raised where a single fixed policy table is required."""


@dataclass(frozen=True)
class ToySpec:
    toy_id: str
    game_id: str
    pool: str            # "id" or "ood"
    rule: dict
    schedule: dict | None = None

    @property
    def stationary(self) -> bool:
        return self.schedule is None


@dataclass(frozen=True)
class ToyObservation:
    game_id: str
    own_rank: int
    history: str = ""                 # Kuhn node: "", "p", "b", "pb"
    community_rank: int | None = None
    round_index: int = 1
    hand_index: int = 0


def observation_from_key(key: InfoSetKey, hand_index: int = 0) -> ToyObservation:
    if key.game_id == KUHN:
        return ToyObservation(KUHN, key.own_rank, history=key.history,
                              hand_index=hand_index)
    round_index = 2 if "/" in key.history else 1
    return ToyObservation(LEDUC, key.own_rank, community_rank=key.community_rank,
                          round_index=round_index, hand_index=hand_index)


def _load_tables() -> dict:
    with resources.files("exploitlab.data").joinpath("toy_tables.json").open() as fh:
        return json.load(fh)


def _validate(raw: dict) -> None:
    for game, pool_tag in EXPECTED_COUNTS:
        entries = raw[game][pool_tag]
        want = EXPECTED_COUNTS[(game, pool_tag)]
        if len(entries) != want:
            raise ToyError(f"{game} {pool_tag} pool has {len(entries)} toys, expected {want}")
    for pool_tag in ("id", "ood"):
        for toy_id, entry in raw["kuhn"][pool_tag].items():
            if entry["kind"] != "table":
                continue
            for card in "JQK":
                row = entry["bet_prob"][card]
                if len(row) != len(KUHN_HISTORIES):
                    raise ToyError(f"kuhn toy {toy_id} card {card}: bad row length")
                if any(not 0.0 <= v <= 1.0 for v in row):
                    raise ToyError(f"kuhn toy {toy_id} card {card}: entry out of [0,1]")
        for toy_id, entry in raw["leduc"][pool_tag].items():
            for rule in entry.get("rules", []):
                probs = rule["probs"]
                if len(probs) != 3 or any(not 0.0 <= v <= 1.0 for v in probs):
                    raise ToyError(f"leduc toy {toy_id}: bad probability triple {probs}")
                if abs(sum(probs) - 1.0) > 1e-9:
                    raise ToyError(f"leduc toy {toy_id}: triple {probs} does not sum to 1")


_RAW = _load_tables()
_validate(_RAW)


def pool(game_id: str, pool_tag: str) -> list[ToySpec]:
    try:
        entries = _RAW[game_id][pool_tag]
    except KeyError:
        raise ToyError(f"unknown pool ({game_id}, {pool_tag})") from None
    toys = []
    for toy_id, entry in entries.items():
        schedule = None
        if entry["kind"] == "switch":
            schedule = {"period": entry["period"], "phases": entry["phases"]}
        toys.append(ToySpec(toy_id, game_id, pool_tag, entry, schedule))
    return toys


def get_toy(game_id: str, toy_id: str) -> ToySpec:
    for pool_tag in ("id", "ood"):
        for toy in pool(game_id, pool_tag):
            if toy.toy_id == toy_id:
                return toy
    raise ToyError(f"unknown toy id {toy_id!r} for {game_id}")


def renormalize_over_legal(raw: np.ndarray, legal: tuple[int, ...]) -> np.ndarray:
    """Mass proportional to raw over the legal subset.

    When every legal action has zero mass (a pure-fold rule at a node where
    folding is illegal) the toy checks: all mass goes to the lowest legal
    action, which is CALL/CHECK in Leduc and PASS in Kuhn.
    """
    if not legal:
        raise ToyError("empty legal action set")
    weights = np.asarray([raw[a] for a in legal], dtype=float)
    total = weights.sum()
    if total <= 0.0:
        out = np.zeros(len(legal))
        out[0] = 1.0
        return out
    return weights / total


def _kuhn_raw(entry: dict, obs: ToyObservation) -> np.ndarray:
    if obs.history not in KUHN_HISTORIES:
        raise ToyError(f"not a Kuhn decision node: {obs.history!r}")
    col = KUHN_HISTORIES.index(obs.history)
    bet = entry["bet_prob"][RANK_NAMES[obs.own_rank]][col]
    return np.array([1.0 - bet, bet])  # (PASS, BET)


def _leduc_raw(entry: dict, obs: ToyObservation) -> np.ndarray:
    for rule in entry["rules"]:
        if "round" in rule and rule["round"] != obs.round_index:
            continue
        if "ranks" in rule and obs.own_rank not in rule["ranks"]:
            continue
        if "pair" in rule:
            paired = (obs.community_rank is not None
                      and obs.own_rank == obs.community_rank)
            if rule["pair"] != paired:
                continue
        return np.asarray(rule["probs"], dtype=float)
    raise ToyError(f"no rule matches observation {obs}")


def toy_distribution(toy: ToySpec, obs: ToyObservation,
                     legal: tuple[int, ...]) -> np.ndarray:
    """Distribution over `legal` (same order), renormalized at runtime.

    ood_chaos commits to one pure mode per decision; returned here as the
    exact per-decision mixture, which matches the sampling process.
    """
    if obs.game_id != toy.game_id:
        raise ToyError(f"toy {toy.toy_id} is a {toy.game_id} toy, got {obs.game_id} obs")
    kind = toy.rule["kind"]
    if kind == "uniform":
        return np.full(len(legal), 1.0 / len(legal))
    if kind == "modes":
        modes = [renormalize_over_legal(np.asarray(m, dtype=float), legal)
                 for m in toy.rule["modes"]]
        return np.mean(modes, axis=0)
    if kind == "switch":
        phase = (obs.hand_index // toy.schedule["period"]) % len(toy.schedule["phases"])
        phase_entry = _RAW[toy.game_id]["id"][toy.schedule["phases"][phase]]
        return renormalize_over_legal(_kuhn_raw(phase_entry, obs), legal)
    if toy.game_id == KUHN:
        return renormalize_over_legal(_kuhn_raw(toy.rule, obs), legal)
    return renormalize_over_legal(_leduc_raw(toy.rule, obs), legal)


def phase_policies(toy: ToySpec) -> list["ToyPolicy"]:
    """The stationary component policies of a scheduled toy (equal shares)."""
    if toy.stationary:
        raise ToyError(f"{toy.toy_id} has no schedule")
    out = []
    for phase_id in toy.schedule["phases"]:
        spec = ToySpec(f"{toy.toy_id}[{phase_id}]", toy.game_id, toy.pool,
                       _RAW[toy.game_id]["id"][phase_id], None)
        out.append(ToyPolicy(spec))
    return out


class ToyPolicy:
    """Policy-oracle view of a toy: info-set key in, action distribution out."""

    def __init__(self, toy: ToySpec):
        self.toy = toy

    @property
    def stationary(self) -> bool:
        return self.toy.stationary

    def action_probs(self, key: InfoSetKey, legal: tuple[int, ...],
                     hand_index: int = 0) -> np.ndarray:
        obs = observation_from_key(key, hand_index)
        return toy_distribution(self.toy, obs, legal)

    def sample(self, rng: np.random.Generator, key: InfoSetKey,
               legal: tuple[int, ...], hand_index: int = 0) -> int:
        probs = self.action_probs(key, legal, hand_index)
        return legal[rng.choice(len(legal), p=probs)]
