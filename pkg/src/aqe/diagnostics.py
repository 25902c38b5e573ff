"""Monte Carlo returns and normalized Q-bias."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .critic import q_all_heads
from .errors import InvalidArgument, UnsupportedFeature
from .policy import policy_dist, sample_action

BIAS_EPS = 1e-6


@dataclass
class BiasReport:
    mean_normalized_bias: float
    std_normalized_bias: float
    num_pairs: int
    mc_horizon: int


def mc_return(env, policy: Callable, start_state, start_action, gamma: float, horizon: int) -> float:
    """Discounted return of ``start_action`` followed by up to ``horizon`` policy actions.

    The environment's time limit is ignored here; only true terminal states
    end the rollout early.
    """
    if not getattr(env, "supports_state_injection", False):
        raise UnsupportedFeature(f"{type(env).__name__} does not support state injection")
    env.set_state(start_state)
    obs, r, terminated, _ = env.step(start_action)
    total, discount = r, 1.0
    for _ in range(horizon):
        if terminated:
            break
        discount *= gamma
        obs, r, terminated, _ = env.step(policy(obs))
        total += discount * r
    return float(total)


def normalized_bias(
    agent,
    env,
    num_pairs: int,
    gamma: float,
    horizon: int = 200,
    rng: Optional[np.random.Generator] = None,
    q_fn: Optional[Callable] = None,
) -> BiasReport:
    """Normalized bias of the ensemble-mean Q against Monte Carlo returns.

    Pairs come from fresh stochastic-policy rollouts of random length. For
    each pair, bias_i = Qbar(s_i, a_i) - G_i, where Qbar averages every online
    head. The reported statistics are the mean and (population) standard
    deviation of bias_i / max(|mean_i G_i|, 1e-6). ``q_fn(obs, action)``
    replaces the critic estimate when given.
    """
    if num_pairs < 1:
        raise InvalidArgument("num_pairs must be >= 1")
    rng = np.random.default_rng() if rng is None else rng
    policy = agent.policy

    def act(obs):
        return sample_action(policy_dist(policy, obs), rng)[0]

    episode_len = int(getattr(env, "horizon", 200))
    qs, gs = [], []
    for _ in range(num_pairs):
        obs = env.reset()
        for _ in range(int(rng.integers(episode_len))):
            obs, _, terminated, _ = env.step(act(obs))
            if terminated:
                obs = env.reset()
        state = env.get_state()
        action = act(obs)
        if q_fn is None:
            q = float(q_all_heads(agent.critics.online, obs[None, :], action[None, :]).mean())
        else:
            q = float(q_fn(obs, action))
        qs.append(q)
        gs.append(mc_return(env, act, state, action, gamma, horizon))
    qs, gs = np.array(qs), np.array(gs)
    scale = max(abs(float(np.mean(gs))), BIAS_EPS)
    nb = (qs - gs) / scale
    return BiasReport(float(np.mean(nb)), float(np.std(nb)), num_pairs, horizon)
