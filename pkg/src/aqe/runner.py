"""Experiment harness: train, evaluate periodically, persist metrics and checkpoints."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

import numpy as np

from .agent import Agent, episode_returns
from .checkpoint import load_agent, save_agent
from .config import RunConfig, write_echo
from .diagnostics import normalized_bias
from .envs import make_env, parse_env_spec
from .errors import NumericError, UnsupportedFeature
from .metrics import MetricRecord, append_metrics

log = logging.getLogger(__name__)

EVAL_SEED_OFFSET = 1_000_003
BIAS_SEED_OFFSET = 2_000_029


@dataclass
class RunResult:
    records: List[MetricRecord]
    metrics_path: Path
    checkpoint_path: Path
    agent: Agent


def _make_train_env(cfg: RunConfig):
    kind, _ = parse_env_spec(cfg.env_spec)
    if kind == "random_mdp":
        raise UnsupportedFeature("random_mdp is tabular; use the 'tabular' subcommand")
    return make_env(cfg.env_spec)


def eval_record(agent: Agent, cfg: RunConfig, eval_env, bias_env, started) -> MetricRecord:
    returns = episode_returns(agent.policy, eval_env, cfg.eval_episodes, seed=cfg.seed + EVAL_SEED_OFFSET)
    losses = [c for c, _ in agent.pending if c is not None]
    objs = [o for _, o in agent.pending if o is not None]
    rec = MetricRecord(
        env_steps=agent.env_steps,
        eval_return_mean=float(np.mean(returns)),
        eval_return_std=float(np.std(returns)),
        critic_loss_mean=float(np.mean(losses)) if losses else None,
        actor_objective=float(np.mean(objs)) if objs else None,
        alpha=agent.alpha,
    )
    if cfg.bias_pairs > 0:
        rng = np.random.default_rng([cfg.seed + BIAS_SEED_OFFSET, agent.env_steps])
        bias_env.seed(rng.integers(2**63))
        rep = normalized_bias(agent, bias_env, cfg.bias_pairs, cfg.gamma, cfg.bias_horizon, rng)
        rec.bias_mean, rec.bias_std = rep.mean_normalized_bias, rep.std_normalized_bias
    if cfg.log_wallclock:
        rec.wallclock_s = time.perf_counter() - started
    return rec


def run_training(cfg: RunConfig, resume_from=None, max_steps: Optional[int] = None) -> RunResult:
    """Train for ``cfg.total_env_steps`` steps, evaluating every ``eval_every``.

    Writes ``<output_dir>/<run_name>.metrics.jsonl`` (appended to when
    resuming), the resolved config echo, and ``<run_name>.ckpt``, which is
    rewritten at every evaluation so a diverged run leaves its last good
    state behind. ``max_steps`` stops early after that many steps in this
    call (used to produce resumable partial runs).
    """
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    metrics_path = out / f"{cfg.run_name}.metrics.jsonl"
    ckpt_path = out / f"{cfg.run_name}.ckpt"
    env = _make_train_env(cfg)
    if resume_from is not None:
        agent = load_agent(resume_from, env)
    else:
        write_echo(cfg)
        metrics_path.write_text("")
        agent = Agent(cfg.agent_config(), env)
    agent.env_spec = cfg.env_spec
    eval_env = make_env(cfg.env_spec)
    bias_env = make_env(cfg.env_spec)
    started = time.perf_counter()
    records: List[MetricRecord] = []

    def emit():
        rec = eval_record(agent, cfg, eval_env, bias_env, started)
        agent.pending = []
        append_metrics(rec, metrics_path)
        records.append(rec)
        save_agent(agent, ckpt_path)
        log.info("step %d return %.1f", rec.env_steps, rec.eval_return_mean)
        return rec

    if agent.env_steps == 0:
        rec = emit()
        if cfg.target_return is not None and rec.eval_return_mean >= cfg.target_return:
            return RunResult(records, metrics_path, ckpt_path, agent)
    steps_this_call = 0
    try:
        while agent.env_steps < cfg.total_env_steps:
            if max_steps is not None and steps_this_call >= max_steps:
                break
            m = agent.train_step()
            agent.pending.append((m["critic_loss"], m["actor_objective"]))
            steps_this_call += 1
            if agent.env_steps % cfg.eval_every == 0:
                rec = emit()
                if cfg.target_return is not None and rec.eval_return_mean >= cfg.target_return:
                    break
    except NumericError as exc:
        raise NumericError(f"{exc}; last good checkpoint: {ckpt_path}") from exc
    finally:
        agent.close()
    if agent.env_steps % cfg.eval_every != 0:
        save_agent(agent, ckpt_path)
    return RunResult(records, metrics_path, ckpt_path, agent)
