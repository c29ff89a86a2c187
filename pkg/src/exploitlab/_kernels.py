"""CFR inner-loop kernels: numba-compiled loops with a pure-numpy fallback.

The numpy path is selected by setting EXPLOITLAB_NO_NUMBA=1 (or automatically
when numba is unavailable). Both backends implement identical vanilla-CFR
sweeps over the flattened tree arrays and must agree to float precision;
benchmarks/bench_cfr.py compares them.
"""
from __future__ import annotations

import os

import numpy as np

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover
    HAS_NUMBA = False


def numba_enabled() -> bool:
    return HAS_NUMBA and os.environ.get("EXPLOITLAB_NO_NUMBA", "") != "1"


def _cfr_sweeps_python(n_iters, node_kind, node_player, node_infoset, node_util0,
                       edge_start, edge_end, edge_child, edge_action, edge_prob,
                       inf_nact, regrets, strat_sum):
    """One batch of vanilla CFR iterations with regret matching (loop form)."""
    n_nodes = node_kind.shape[0]
    n_inf, max_a = regrets.shape
    sigma = np.empty((n_inf, max_a))
    reach0 = np.empty(n_nodes)
    reach1 = np.empty(n_nodes)
    reachc = np.empty(n_nodes)
    util0 = np.empty(n_nodes)
    for _ in range(n_iters):
        # regret matching
        for i in range(n_inf):
            na = inf_nact[i]
            total = 0.0
            for a in range(na):
                r = regrets[i, a]
                if r > 0.0:
                    total += r
            if total > 0.0:
                for a in range(na):
                    r = regrets[i, a]
                    sigma[i, a] = r / total if r > 0.0 else 0.0
            else:
                for a in range(na):
                    sigma[i, a] = 1.0 / na
        # forward reach (parents precede children in node order)
        reach0[0] = 1.0
        reach1[0] = 1.0
        reachc[0] = 1.0
        for node in range(n_nodes):
            for e in range(edge_start[node], edge_end[node]):
                child = edge_child[e]
                r0 = reach0[node]
                r1 = reach1[node]
                rc = reachc[node]
                if node_kind[node] == 2:  # chance
                    rc *= edge_prob[e]
                else:
                    p = sigma[node_infoset[node], edge_action[e]]
                    if node_player[node] == 0:
                        r0 *= p
                    else:
                        r1 *= p
                reach0[child] = r0
                reach1[child] = r1
                reachc[child] = rc
        # backward expected utility for seat 0
        for node in range(n_nodes - 1, -1, -1):
            if node_kind[node] == 1:  # terminal
                util0[node] = node_util0[node]
                continue
            v = 0.0
            if node_kind[node] == 2:
                for e in range(edge_start[node], edge_end[node]):
                    v += edge_prob[e] * util0[edge_child[e]]
            else:
                inf = node_infoset[node]
                for e in range(edge_start[node], edge_end[node]):
                    v += sigma[inf, edge_action[e]] * util0[edge_child[e]]
            util0[node] = v
        # regret and average-strategy accumulation
        for node in range(n_nodes):
            if node_kind[node] != 0:
                continue
            inf = node_infoset[node]
            p = node_player[node]
            if p == 0:
                opp = reach1[node]
                own = reach0[node]
                sign = 1.0
            else:
                opp = reach0[node]
                own = reach1[node]
                sign = -1.0
            cf = opp * reachc[node]
            v_node = sign * util0[node]
            for e in range(edge_start[node], edge_end[node]):
                a = edge_action[e]
                regrets[inf, a] += cf * (sign * util0[edge_child[e]] - v_node)
                strat_sum[inf, a] += own * sigma[inf, a]


if HAS_NUMBA:
    _cfr_sweeps_numba = njit(cache=True)(_cfr_sweeps_python)


def _current_sigma(regrets: np.ndarray, inf_nact: np.ndarray) -> np.ndarray:
    pos = np.maximum(regrets, 0.0)
    valid = np.arange(regrets.shape[1])[None, :] < inf_nact[:, None]
    pos = np.where(valid, pos, 0.0)
    total = pos.sum(axis=1, keepdims=True)
    uniform = valid / inf_nact[:, None]
    with np.errstate(invalid="ignore"):
        sigma = np.where(total > 0.0, pos / np.where(total > 0, total, 1.0), uniform)
    return sigma


class _LevelPlan:
    """Edge groups by parent depth, precomputed for the vectorized backend."""

    def __init__(self, tree_arrays):
        (node_kind, node_player, node_infoset, node_util0, edge_start, edge_end,
         edge_parent, edge_child, edge_action, edge_prob, node_depth,
         inf_nact) = tree_arrays
        self.arrays = tree_arrays
        depths = node_depth[edge_parent]
        self.levels = []
        for d in range(int(node_depth.max()) + 1):
            idx = np.nonzero(depths == d)[0]
            if idx.size:
                self.levels.append(idx)
        self.terminal_mask = node_kind == 1
        dec_edges = np.nonzero(node_kind[edge_parent] == 0)[0]
        self.dec_edges = dec_edges
        self.dec_parent = edge_parent[dec_edges]
        self.dec_child = edge_child[dec_edges]
        self.dec_inf = node_infoset[self.dec_parent]
        self.dec_act = edge_action[dec_edges]
        self.dec_player = node_player[self.dec_parent]


def _cfr_sweeps_numpy(n_iters, plan: _LevelPlan, regrets, strat_sum):
    (node_kind, node_player, node_infoset, node_util0, edge_start, edge_end,
     edge_parent, edge_child, edge_action, edge_prob, node_depth,
     inf_nact) = plan.arrays
    n_nodes = node_kind.shape[0]
    chance_edge = node_kind[edge_parent] == 2
    for _ in range(n_iters):
        sigma = _current_sigma(regrets, inf_nact)
        # forward reach, level by level
        reach0 = np.ones(n_nodes)
        reach1 = np.ones(n_nodes)
        reachc = np.ones(n_nodes)
        for idx in plan.levels:
            par = edge_parent[idx]
            ch = edge_child[idx]
            is_ch = chance_edge[idx]
            sig = np.where(is_ch, 1.0, sigma[node_infoset[par], edge_action[idx]])
            p0 = np.where(node_player[par] == 0, sig, 1.0)
            p1 = np.where(node_player[par] == 1, sig, 1.0)
            pc = np.where(is_ch, edge_prob[idx], 1.0)
            reach0[ch] = reach0[par] * p0
            reach1[ch] = reach1[par] * p1
            reachc[ch] = reachc[par] * pc
        # backward utility
        util0 = np.where(plan.terminal_mask, node_util0, 0.0)
        for idx in reversed(plan.levels):
            par = edge_parent[idx]
            ch = edge_child[idx]
            is_ch = chance_edge[idx]
            w = np.where(is_ch, edge_prob[idx],
                         sigma[node_infoset[par], edge_action[idx]])
            np.add.at(util0, par, w * util0[ch])
        # accumulate regrets / strategy sums over decision edges
        par = plan.dec_parent
        sign = np.where(plan.dec_player == 0, 1.0, -1.0)
        opp = np.where(plan.dec_player == 0, reach1[par], reach0[par])
        own = np.where(plan.dec_player == 0, reach0[par], reach1[par])
        cf = opp * reachc[par]
        delta = sign * (util0[plan.dec_child] - util0[par])
        np.add.at(regrets, (plan.dec_inf, plan.dec_act), cf * delta)
        np.add.at(strat_sum, (plan.dec_inf, plan.dec_act),
                  own * sigma[plan.dec_inf, plan.dec_act])


class CfrKernel:
    """Backend dispatcher bound to one flattened tree."""

    def __init__(self, tree):
        self.tree = tree
        self._arrays = (tree.node_kind, tree.node_player, tree.node_infoset,
                        tree.node_util0, tree.edge_start, tree.edge_end,
                        tree.edge_parent, tree.edge_child, tree.edge_action,
                        tree.edge_prob, tree.node_depth, tree.infoset_nact)
        self._plan = None

    def run(self, n_iters: int, regrets: np.ndarray, strat_sum: np.ndarray) -> None:
        if numba_enabled():
            self._run_numba(n_iters, regrets, strat_sum)
        else:
            self._run_numpy(n_iters, regrets, strat_sum)

    def _run_numba(self, n_iters: int, regrets: np.ndarray,
                   strat_sum: np.ndarray) -> None:
        if not HAS_NUMBA:
            raise RuntimeError("numba backend requested but numba is missing")
        t = self.tree
        _cfr_sweeps_numba(n_iters, t.node_kind, t.node_player, t.node_infoset,
                          t.node_util0, t.edge_start, t.edge_end, t.edge_child,
                          t.edge_action, t.edge_prob, t.infoset_nact,
                          regrets, strat_sum)

    def _run_numpy(self, n_iters: int, regrets: np.ndarray,
                   strat_sum: np.ndarray) -> None:
        if self._plan is None:
            self._plan = _LevelPlan(self._arrays)
        _cfr_sweeps_numpy(n_iters, self._plan, regrets, strat_sum)
