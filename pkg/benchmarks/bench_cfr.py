"""Benchmark the two CFR backends (numba kernel vs pure-numpy fallback).

Runs identical vanilla-CFR sweeps on both backends for each game, reports
iterations/second, and checks that the resulting regret and average-strategy
accumulators agree to float precision.

Usage:
    python3 benchmarks/bench_cfr.py [--kuhn-iters N] [--leduc-iters N]
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from exploitlab import _kernels, engine
from exploitlab.tree import build_tree


def bench_backend(tree, iters: int, use_numba: bool) -> tuple[float, np.ndarray,
                                                              np.ndarray]:
    shape = (tree.n_infosets, tree.max_actions)
    regrets = np.zeros(shape)
    strat_sum = np.zeros(shape)
    kernel = _kernels.CfrKernel(tree)
    runner = (kernel._run_numba if use_numba else kernel._run_numpy)
    runner(1, regrets, strat_sum)  # warm up (JIT compile / plan build)
    regrets[:] = 0.0
    strat_sum[:] = 0.0
    t0 = time.perf_counter()
    runner(iters, regrets, strat_sum)
    elapsed = time.perf_counter() - t0
    return elapsed, regrets, strat_sum


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--kuhn-iters", type=int, default=20_000)
    parser.add_argument("--leduc-iters", type=int, default=2_000)
    args = parser.parse_args()

    if not _kernels.HAS_NUMBA:
        print("numba not installed; benchmarking the numpy backend only")

    for game, iters in (("kuhn", args.kuhn_iters), ("leduc", args.leduc_iters)):
        tree = build_tree(engine.game_spec(game))
        t_np, reg_np, ss_np = bench_backend(tree, iters, use_numba=False)
        line = (f"{game:6s} {iters:>8d} iters | "
                f"numpy {iters / t_np:>10.0f} it/s ({t_np:6.2f}s)")
        if _kernels.HAS_NUMBA:
            t_nb, reg_nb, ss_nb = bench_backend(tree, iters, use_numba=True)
            dr = np.abs(reg_np - reg_nb).max()
            ds = np.abs(ss_np - ss_nb).max()
            agree = max(dr, ds)
            line += (f" | numba {iters / t_nb:>10.0f} it/s ({t_nb:6.2f}s) | "
                     f"speedup {t_np / t_nb:5.1f}x | max |diff| {agree:.2e}")
            if agree > 1e-9 * max(1.0, np.abs(reg_np).max()):
                raise SystemExit(f"{game}: backends disagree ({agree:.3e})")
        print(line)


if __name__ == "__main__":
    main()
