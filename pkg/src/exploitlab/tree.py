"""Flattened full game trees (all chance branches expanded) for array kernels.

Nodes are stored in DFS preorder, so every parent index is smaller than its
children's; the CFR kernels rely on that ordering for single-pass sweeps.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import engine
from .engine import GameSpec, HandState, InfoSetKey

DECISION, TERMINAL, CHANCE = 0, 1, 2


@dataclass
class GameTree:
    spec: GameSpec
    node_kind: np.ndarray       # int8
    node_player: np.ndarray     # int8, -1 if not a decision node
    node_infoset: np.ndarray    # int32, -1 if not a decision node
    node_util0: np.ndarray      # float64, terminal utility for seat 0
    edge_start: np.ndarray      # int32 per node
    edge_end: np.ndarray
    edge_parent: np.ndarray     # int32 per edge
    edge_child: np.ndarray
    edge_action: np.ndarray     # local action index within the infoset, -1 on chance edges
    edge_prob: np.ndarray       # chance probability, 1.0 on action edges
    node_depth: np.ndarray      # int16, edges from root
    infoset_keys: list[InfoSetKey]
    infoset_player: np.ndarray
    infoset_nact: np.ndarray
    infoset_legal: list[tuple[int, ...]]

    @property
    def n_nodes(self) -> int:
        return len(self.node_kind)

    @property
    def n_infosets(self) -> int:
        return len(self.infoset_keys)

    @property
    def max_actions(self) -> int:
        return int(self.infoset_nact.max())

    def infoset_index(self, key: InfoSetKey) -> int:
        return self._key_to_idx[key]

    def finalize(self) -> "GameTree":
        self._key_to_idx = {k: i for i, k in enumerate(self.infoset_keys)}
        return self


def build_tree(spec: GameSpec) -> GameTree:
    kind, player, infoset, util0, depth = [], [], [], [], []
    e_parent, e_child, e_action, e_prob = [], [], [], []
    inf_keys: list[InfoSetKey] = []
    inf_idx: dict[InfoSetKey, int] = {}
    inf_player: list[int] = []
    inf_nact: list[int] = []
    inf_legal: list[tuple[int, ...]] = []
    # edges grouped per node, filled after the DFS
    node_edges: list[list[int]] = []

    def add_node(k: int, p: int, inf: int, u0: float, d: int) -> int:
        kind.append(k)
        player.append(p)
        infoset.append(inf)
        util0.append(u0)
        depth.append(d)
        node_edges.append([])
        return len(kind) - 1

    def add_edge(parent: int, child: int, action: int, prob: float) -> None:
        e_parent.append(parent)
        e_child.append(child)
        e_action.append(action)
        e_prob.append(prob)
        node_edges[parent].append(len(e_parent) - 1)

    def visit(state: HandState, d: int) -> int:
        if state.terminal:
            return add_node(TERMINAL, -1, -1, engine.terminal_payoff(state)[0], d)
        if state.awaiting_community:
            me = add_node(CHANCE, -1, -1, 0.0, d)
            rem = engine.remaining_positions(state)
            for pos in rem:
                child = visit(engine.deal_community(state, pos), d + 1)
                add_edge(me, child, -1, 1.0 / len(rem))
            return me
        seat = state.to_act
        key = engine.info_set_key(state, seat)
        legal = engine.legal_actions(state)
        if key not in inf_idx:
            inf_idx[key] = len(inf_keys)
            inf_keys.append(key)
            inf_player.append(seat)
            inf_nact.append(len(legal))
            inf_legal.append(legal)
        me = add_node(DECISION, seat, inf_idx[key], 0.0, d)
        for a_local, action in enumerate(legal):
            child = visit(engine.apply_action(state, action), d + 1)
            add_edge(me, child, a_local, 1.0)
        return me

    root = add_node(CHANCE, -1, -1, 0.0, 0)
    deals = engine.enumerate_deals(spec)
    for deal, prob in deals:
        child = visit(engine.new_hand(spec, deal, dealer_seat=0), 1)
        add_edge(root, child, -1, prob)

    # re-pack edges contiguously per node in node order
    n = len(kind)
    order = [e for node in range(n) for e in node_edges[node]]
    start = np.zeros(n, dtype=np.int32)
    end = np.zeros(n, dtype=np.int32)
    pos = 0
    for node in range(n):
        start[node] = pos
        pos += len(node_edges[node])
        end[node] = pos
    tree = GameTree(
        spec=spec,
        node_kind=np.asarray(kind, dtype=np.int8),
        node_player=np.asarray(player, dtype=np.int8),
        node_infoset=np.asarray(infoset, dtype=np.int32),
        node_util0=np.asarray(util0, dtype=np.float64),
        edge_start=start, edge_end=end,
        edge_parent=np.asarray([e_parent[e] for e in order], dtype=np.int32),
        edge_child=np.asarray([e_child[e] for e in order], dtype=np.int32),
        edge_action=np.asarray([e_action[e] for e in order], dtype=np.int32),
        edge_prob=np.asarray([e_prob[e] for e in order], dtype=np.float64),
        node_depth=np.asarray(depth, dtype=np.int16),
        infoset_keys=inf_keys,
        infoset_player=np.asarray(inf_player, dtype=np.int8),
        infoset_nact=np.asarray(inf_nact, dtype=np.int32),
        infoset_legal=inf_legal,
    )
    return tree.finalize()
