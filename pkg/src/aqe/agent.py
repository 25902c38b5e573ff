"""The AQE training loop: act, G critic rounds, one actor/temperature step."""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional

import numpy as np

from .buffer import ReplayBuffer, Transition
from .config import AgentConfig
from .critic import CriticEnsemble, compute_targets, critic_update, make_ensemble, polyak_update
from .errors import InvalidArgument, NumericError
from .policy import (
    PolicyParams,
    actor_update,
    deterministic_action,
    make_policy,
    make_temperature,
    policy_dist,
    sample_action,
    temperature_update,
)

log = logging.getLogger(__name__)

# order of the streams spawned from the run seed
_STREAMS = ("policy_init", "critic_init", "act", "sample", "noise", "env")


class Agent:
    """AQE agent bound to one training environment.

    Random streams (policy init, critic init, acting, batch sampling, policy
    noise, environment) are independent children of the run seed, so the
    whole run is a deterministic function of (config, seed).
    """

    def __init__(self, config: AgentConfig, env):
        config.validate()
        self.config = config
        self.env = env
        self.agg = config.make_aggregator()
        seqs = dict(zip(_STREAMS, np.random.SeedSequence(config.seed).spawn(len(_STREAMS))))
        self.policy: PolicyParams = make_policy(
            env.state_dim, env.action_low, env.action_high, config.hidden_sizes, seqs["policy_init"]
        )
        self.critics: CriticEnsemble = make_ensemble(
            config.N, config.h, env.state_dim, env.action_dim, config.hidden_sizes, seqs["critic_init"]
        )
        fixed = config.alpha_mode == "fixed"
        no_entropy = fixed and config.fixed_alpha == 0.0
        init = 1.0 if no_entropy else (config.fixed_alpha if fixed else config.init_alpha)
        self.temp = make_temperature(env.action_dim, init, fixed, config.target_entropy)
        if no_entropy:
            self.temp.log_alpha = -np.inf  # alpha = 0: no entropy bonus anywhere
        self.buffer = ReplayBuffer(config.buffer_size, env.state_dim, env.action_dim)
        self.rng_act = np.random.default_rng(seqs["act"])
        self.rng_sample = np.random.default_rng(seqs["sample"])
        self.rng_noise = np.random.default_rng(seqs["noise"])
        env.seed(np.random.default_rng(seqs["env"]).integers(2**63))
        self.obs = env.reset()
        self.env_steps = 0
        self.critic_rounds = 0
        self.actor_updates = 0
        self.episode_return = 0.0
        # (critic_loss, actor_objective) per step since the last metric record; checkpointed
        self.pending: List[tuple] = []
        self.executor = ThreadPoolExecutor(max_workers=config.N) if config.parallel_critics else None
        # called with (targets, batch) after every target computation; for instrumentation
        self.target_hooks: List[Callable] = []

    @property
    def alpha(self) -> float:
        return self.temp.alpha

    def close(self):
        if self.executor is not None:
            self.executor.shutdown()
            self.executor = None

    def act(self) -> np.ndarray:
        if self.env_steps < self.config.start_steps:
            return self.rng_act.uniform(self.env.action_low, self.env.action_high)
        action, _ = sample_action(policy_dist(self.policy, self.obs), self.rng_act)
        return action

    def critic_round(self) -> float:
        cfg = self.config
        batch = self.buffer.sample(cfg.batch_size, self.rng_sample)
        y = compute_targets(batch, self.critics.target, self.policy, self.alpha, cfg.gamma, self.agg, self.rng_noise)
        for hook in self.target_hooks:
            hook(y, batch)
        losses = critic_update(self.critics.online, batch, y, cfg.lr, self.executor)
        polyak_update(self.critics.target, self.critics.online, cfg.polyak_retain)
        self.critic_rounds += 1
        return float(np.mean(losses))

    def policy_round(self) -> float:
        cfg = self.config
        batch = self.buffer.sample(cfg.batch_size, self.rng_sample)
        obj, log_probs = actor_update(self.policy, self.critics, batch.states, self.alpha, cfg.lr, rng=self.rng_noise)
        temperature_update(self.temp, log_probs, cfg.lr)
        self.actor_updates += 1
        return obj

    def train_step(self) -> dict:
        """One environment step followed by G critic rounds and one actor update."""
        step = self.env_steps
        try:
            action = self.act()
            next_obs, reward, terminated, truncated = self.env.step(action)
            self.buffer.push(Transition(self.obs, action, reward, next_obs, terminated))
            self.env_steps += 1
            self.episode_return += reward
            metrics = {"env_steps": self.env_steps, "reward": reward, "critic_loss": None, "actor_objective": None}
            if terminated or truncated:
                metrics["episode_return"] = self.episode_return
                self.episode_return = 0.0
                self.obs = self.env.reset()
            else:
                self.obs = next_obs
            if len(self.buffer) >= self.config.batch_size:
                losses = [self.critic_round() for _ in range(self.config.G)]
                metrics["critic_loss"] = float(np.mean(losses))
                metrics["actor_objective"] = self.policy_round()
            metrics["alpha"] = self.alpha
            return metrics
        except NumericError as exc:
            raise NumericError(f"env step {step}: {exc}") from exc


def episode_returns(policy: PolicyParams, env, episodes: int = 10, seed=None, max_steps: int = 100_000) -> np.ndarray:
    """Undiscounted returns of the deterministic (mean) policy."""
    if episodes < 1:
        raise InvalidArgument("episodes must be >= 1")
    if seed is not None:
        env.seed(seed)
    out = []
    for _ in range(episodes):
        obs = env.reset()
        total = 0.0
        for _ in range(max_steps):
            obs, r, terminated, truncated = env.step(deterministic_action(policy_dist(policy, obs)))
            total += r
            if terminated or truncated:
                break
        out.append(total)
    return np.array(out)


def evaluate(policy: PolicyParams, env, episodes: int = 10, seed=None) -> float:
    return float(np.mean(episode_returns(policy, env, episodes, seed)))
