"""Command-line front end: ``aqe <subcommand> ...``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from .errors import AQEError, ConfigError

log = logging.getLogger("aqe")

GRADCHECK_LIMIT = 1e-5


def _parse_overrides(extra: List[str]) -> Dict[str, str]:
    """Turn ``--key value`` / ``--key=value`` pairs into a dict."""
    out = {}
    i = 0
    while i < len(extra):
        tok = extra[i]
        if not tok.startswith("--"):
            raise ConfigError(tok, "expected --key value")
        key = tok[2:]
        if "=" in key:
            key, value = key.split("=", 1)
            i += 1
        else:
            if i + 1 >= len(extra):
                raise ConfigError(key, "missing value")
            value = extra[i + 1]
            i += 2
        out[key.replace("-", "_")] = value
    return out


def _seed_range(text: str) -> List[int]:
    lo, sep, hi = text.partition("..")
    return list(range(int(lo), int(hi) + 1)) if sep else [int(lo)]


def cmd_train(args, extra) -> int:
    from .config import parse_config
    from .runner import run_training

    overrides = _parse_overrides(extra)
    seeds = _seed_range(args.seeds) if args.seeds else [None]
    for seed in seeds:
        over = dict(overrides)
        if seed is not None:
            over["seed"] = str(seed)
        cfg = parse_config(args.config, over)
        if seed is not None and len(seeds) > 1:
            cfg.run_name = f"{cfg.run_name}_seed{seed}"
        res = run_training(cfg, resume_from=args.resume)
        last = res.records[-1] if res.records else None
        print(json.dumps({
            "run_name": cfg.run_name,
            "env_steps": res.agent.env_steps,
            "final_eval_return": last.eval_return_mean if last else None,
            "metrics": str(res.metrics_path),
            "checkpoint": str(res.checkpoint_path),
        }))
    return 0


def _load(args):
    from .checkpoint import load_agent, read_header
    from .envs import make_env

    header = read_header(args.checkpoint)
    spec = args.env or header.get("env_spec") or "pendulum"
    env = make_env(spec)
    return load_agent(args.checkpoint, env), spec


def cmd_eval(args, extra) -> int:
    from .agent import episode_returns
    from .envs import make_env

    agent, spec = _load(args)
    returns = episode_returns(agent.policy, make_env(spec), args.episodes, seed=args.seed)
    print(json.dumps({"episodes": len(returns), "mean": float(np.mean(returns)), "std": float(np.std(returns))}))
    return 0


def cmd_bias(args, extra) -> int:
    from .diagnostics import normalized_bias
    from .envs import make_env

    agent, spec = _load(args)
    rep = normalized_bias(agent, make_env(spec), args.pairs, args.gamma, args.horizon, np.random.default_rng(args.seed))
    print(json.dumps(rep.__dict__))
    return 0


def cmd_tabular(args, extra) -> int:
    from .envs import make_env, value_iteration
    from .theory import TabularEnsemble, run_tabular_aqe

    mdp = make_env(args.env)
    if args.gamma is not None:
        mdp.gamma = args.gamma
    q_star = value_iteration(mdp)
    ens = TabularEnsemble.zeros(args.N, args.K, mdp.S, mdp.A, alpha=args.alpha, gamma=mdp.gamma)
    run = run_tabular_aqe(
        mdp, ens, args.behavior, args.steps, args.seed, epsilon=args.epsilon,
        lr_exponent=args.lr_exponent, log_every=args.log_every, q_star=q_star,
    )
    print(json.dumps({
        "N": args.N, "K": args.K, "gamma": mdp.gamma, "steps": args.steps,
        "final_sup_error": run.trace[-1][1] if run.trace else None,
        "trace": run.trace,
    }))
    return 0


def cmd_theorem1(args, extra) -> int:
    from .theory import theorem1_suite

    report = theorem1_suite(seed=args.seed, num_samples=args.samples)
    print(json.dumps(report.as_dict(), indent=2))
    return 0 if report.passed else 1


def cmd_gradcheck(args, extra) -> int:
    from .gradcheck import random_gradcheck

    err = random_gradcheck(args.nets, args.seed)
    print(f"max relative error: {err:.3e}")
    return 0 if err <= GRADCHECK_LIMIT else 1


def cmd_plot(args, extra) -> int:
    from .plot import plot

    out = plot(args.metrics, args.field, args.out)
    print(out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="aqe", description="Aggressive Q-learning with ensembles")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, metavar="{train,eval,bias,tabular,theorem1,gradcheck,plot}")

    t = sub.add_parser("train", help="train an agent; any config key may be given as --key value")
    t.add_argument("--config", help="flat key = value config file")
    t.add_argument("--seeds", help="seed or inclusive range a..b")
    t.add_argument("--resume", help="checkpoint to continue from")
    t.set_defaults(func=cmd_train, accepts_extra=True)

    for name, func in (("eval", cmd_eval), ("bias", cmd_bias)):
        e = sub.add_parser(name, help=f"{name} a checkpoint")
        e.add_argument("checkpoint")
        e.add_argument("--env", help="env spec (defaults to the one stored in the checkpoint)")
        e.add_argument("--seed", type=int, default=0)
        if name == "eval":
            e.add_argument("--episodes", type=int, default=10)
        else:
            e.add_argument("--pairs", type=int, default=20)
            e.add_argument("--horizon", type=int, default=200)
            e.add_argument("--gamma", type=float, default=0.99)
        e.set_defaults(func=func)

    tb = sub.add_parser("tabular", help="run tabular AQE on a random MDP")
    tb.add_argument("--env", default="random_mdp:S=5,A=3,seed=0")
    tb.add_argument("--N", type=int, default=4)
    tb.add_argument("--K", type=int, default=4)
    tb.add_argument("--gamma", type=float)
    tb.add_argument("--steps", type=int, default=100_000)
    tb.add_argument("--seed", type=int, default=0)
    tb.add_argument("--behavior", default="epsilon-greedy", choices=("epsilon-greedy", "uniform"))
    tb.add_argument("--epsilon", type=float, default=0.1)
    tb.add_argument("--alpha", type=float, default=0.1, help="constant step size")
    tb.add_argument("--lr-exponent", type=float, default=0.8, help="decaying step 1/(1+n)^x; negative for constant")
    tb.add_argument("--log-every", type=int, default=1000)
    tb.set_defaults(func=cmd_tabular)

    th = sub.add_parser("theorem1", help="Monte Carlo checks of the keep-K bias ordering")
    th.add_argument("--seed", type=int, default=0)
    th.add_argument("--samples", type=int, default=1_000_000)
    th.set_defaults(func=cmd_theorem1)

    g = sub.add_parser("gradcheck", help="finite-difference check of backprop")
    g.add_argument("--nets", type=int, default=100)
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(func=cmd_gradcheck)

    pl = sub.add_parser("plot", help="SVG learning curves")
    pl.add_argument("metrics", nargs="+")
    pl.add_argument("--field", default="eval_return_mean")
    pl.add_argument("--out", required=True)
    pl.set_defaults(func=cmd_plot)
    return p


def cli_main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args, extra = parser.parse_known_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if extra and not getattr(args, "accepts_extra", False):
        print(f"aqe: error: unrecognized arguments: {' '.join(extra)}", file=sys.stderr)
        return 2
    if args.command == "tabular" and args.lr_exponent is not None and args.lr_exponent < 0:
        args.lr_exponent = None
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return args.func(args, extra)
    except (AQEError, OSError) as exc:
        print(f"aqe {args.command}: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli_main())
