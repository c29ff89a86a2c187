"""Command-line entry point: solve, best-response tables, NE-vs-toys tables,
training, evaluation, and gradient checking.

Exit codes: 0 success, 1 runtime failure, 2 unknown subcommand / bad usage,
3 invalid configuration or argument values.
"""
from __future__ import annotations

import argparse
import csv
import os
import sys

import numpy as np

from . import engine, evalharness, net, oracle, solver, toys, trainer

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, EXIT_CONFIG = 0, 1, 2, 3


class CliConfigError(ValueError):
    pass


def _out_path(args, name: str) -> str:
    os.makedirs(args.out, exist_ok=True)
    return os.path.join(args.out, name)


def _cmd_solve(args) -> int:
    spec = engine.game_spec(args.game)
    if args.alpha is not None:
        if args.game != engine.KUHN:
            raise CliConfigError("--alpha applies to Kuhn only")
        policy = solver.kuhn_ne_profile(args.alpha)
    else:
        iters = args.cfr_iters or (100_000 if args.game == engine.KUHN
                                   else 1_000_000)
        policy, _ = solver.cfr_solve(spec, iters)
    path = _out_path(args, f"{args.game}_policy.csv")
    policy.to_csv(path)
    expl = solver.exploitability(spec, policy)
    print(f"policy written to {path}")
    print(f"exploitability: {expl:.6f}")
    return EXIT_OK


def _cmd_br_table(args) -> int:
    spec = engine.game_spec(args.game)
    pools = ("id", "ood") if args.pool == "all" else (args.pool,)
    rows = []
    for pool in pools:
        entries = []
        for toy in toys.pool(args.game, pool):
            if toy.stationary:
                ceiling = oracle.br_ceiling(spec, toy)
            else:
                ceiling = oracle.SWITCH_MF_REPORTED_CEILING
            entries.append((toy.toy_id, pool, ceiling))
        entries.sort(key=lambda e: -e[2])
        rows.extend(entries)
    path = _out_path(args, f"{args.game}_br_ceilings.csv")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["toy_id", "pool", "br_ceiling"])
        for toy_id, pool, ceiling in rows:
            w.writerow([toy_id, pool, f"{ceiling:.6f}"])
    print(f"BR ceilings written to {path}")
    return EXIT_OK


def _cmd_ne_vs_toys(args) -> int:
    rows = evalharness.ne_vs_toys_report(args.game, seed=args.seed)
    path = _out_path(args, f"{args.game}_ne_vs_toys.csv")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["toy_id", "pool", "mode", "hands",
                    "ne_first_actor", "ne_second_actor", "mean"])
        for r in rows:
            w.writerow([r["toy_id"], r["pool"], r["mode"], r["hands"],
                        f"{r['seat0_mean']:.6f}", f"{r['seat1_mean']:.6f}",
                        f"{r['mean']:.6f}"])
    print(f"NE-vs-toys table written to {path}")
    if args.game == engine.LEDUC:
        print("note: Leduc rows are Monte Carlo against one CFR equilibrium; "
              "equilibrium non-uniqueness and MC error both apply")
    return EXIT_OK


def _cmd_train(args) -> int:
    if args.config:
        tcfg = trainer.load_train_config(args.config)
    else:
        if not args.game:
            raise CliConfigError("train needs --config or --game")
        tcfg = trainer.train_config(args.game)
    if args.seed is not None:
        tcfg.seed = args.seed
    tcfg.out_dir = args.out
    _, _, metrics = trainer.train(tcfg)
    print(f"metrics written to {metrics}")
    return EXIT_OK


def _cmd_eval(args) -> int:
    params, cfg = net.load_checkpoint(args.checkpoint)
    reports, aggregate = evalharness.evaluate_pool(
        params, cfg, args.pool, mode=args.mode,
        hands_per_toy=args.hands, seed=args.seed)
    stem = f"{cfg.game_id}_{args.pool}_{args.mode}"
    evalharness.reports_to_csv(reports, _out_path(args, stem + ".csv"))
    evalharness.reports_to_json(reports, _out_path(args, stem + ".json"))
    print(f"pool aggregate ({args.pool}, {args.mode}): {aggregate:+.6f}")
    return EXIT_OK


def _cmd_gradcheck(args) -> int:
    cfg = net.net_config(args.game)
    spec = engine.game_spec(args.game)
    params = net.init_params(cfg, args.seed)
    rng = np.random.default_rng(args.seed)
    mb = _random_minibatch(cfg, spec, rng)
    err = net.grad_check(params, cfg, mb, net.LossSpec(),
                         sample_count=args.coords, seed=args.seed)
    print(f"grad_check max relative error: {err:.3e}")
    return EXIT_OK if err < 1e-4 else EXIT_RUNTIME


def _random_minibatch(cfg, spec, rng, batch: int = 8) -> net.Minibatch:
    from . import histenc
    from .evalharness import play_hand

    class _Uniform:
        def begin_session(self):
            pass

        def act(self, state, seat, r):
            legal = engine.legal_actions(state)
            return legal[r.integers(len(legal))]

        def end_hand(self, hand, seat):
            pass

    obs_list, chosen, oldlp, adv, ret = [], [], [], [], []
    uni = _Uniform()
    for i in range(batch):
        history = []
        for _ in range(i % 4):
            hand = play_hand(spec, {0: uni, 1: uni}, int(rng.integers(2)), rng)
            history.append(histenc.tokenize_hand(hand, 0))
        deal, _ = engine.enumerate_deals(spec)[rng.integers(
            len(engine.enumerate_deals(spec)))]
        state = engine.new_hand(spec, deal, dealer_seat=0)
        obs = net.observation_from_state(spec, state, 0, tuple(history))
        legal = np.flatnonzero(obs.legal_mask)
        obs_list.append(obs)
        chosen.append(int(legal[rng.integers(len(legal))]))
        oldlp.append(float(-np.log(len(legal)) + rng.normal() * 0.05))
        adv.append(float(rng.normal()))
        ret.append(float(rng.normal()))
    return net.pack_minibatch(cfg, obs_list, chosen, oldlp, adv, ret)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="exploitlab",
        description="Kuhn/Leduc exploitation lab: solvers, oracles, "
                    "training, and evaluation.")
    sub = parser.add_subparsers(dest="command")

    def common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default=".")
        p.add_argument("--workers", type=int, default=1,
                       help="parallel workers (1 = fully deterministic)")

    p = sub.add_parser("solve", help="NE policy via closed form or CFR")
    p.add_argument("--game", required=True, choices=[engine.KUHN, engine.LEDUC])
    p.add_argument("--alpha", type=float, default=None,
                   help="Kuhn closed-form family parameter in [0, 1/3]")
    p.add_argument("--cfr-iters", type=int, default=None)
    common(p)

    p = sub.add_parser("br-table", help="best-response ceiling table")
    p.add_argument("--game", required=True, choices=[engine.KUHN, engine.LEDUC])
    p.add_argument("--pool", default="all", choices=["id", "ood", "all"])
    common(p)

    p = sub.add_parser("ne-vs-toys", help="NE reward against the toy pools")
    p.add_argument("--game", required=True, choices=[engine.KUHN, engine.LEDUC])
    common(p)

    p = sub.add_parser("train", help="PPO league training")
    p.add_argument("--config", default=None, help="JSON TrainConfig file")
    p.add_argument("--game", default=None,
                   choices=[engine.KUHN, engine.LEDUC])
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default="runs")
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("eval", help="evaluate a checkpoint against a pool")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--pool", required=True, choices=["id", "ood"])
    p.add_argument("--mode", default="exploiter",
                   choices=["exploiter", "masked"])
    p.add_argument("--hands", type=int, default=2000)
    common(p)

    p = sub.add_parser("gradcheck", help="finite-difference gradient check")
    p.add_argument("--game", required=True, choices=[engine.KUHN, engine.LEDUC])
    p.add_argument("--coords", type=int, default=200)
    common(p)
    return parser


COMMANDS = {"solve": _cmd_solve, "br-table": _cmd_br_table,
            "ne-vs-toys": _cmd_ne_vs_toys, "train": _cmd_train,
            "eval": _cmd_eval, "gradcheck": _cmd_gradcheck}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    if args.command is None:
        parser.print_help()
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except (CliConfigError, solver.SolverError, trainer.TrainerError,
            net.NetError, toys.ToyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # runtime failure
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
