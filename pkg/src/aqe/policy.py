"""Tanh-squashed Gaussian policy and entropy temperature."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import InvalidArgument, NumericError
from .nn import NetworkParams, adam_step, adam_update, backward, forward, init_network

LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)
_LOG2 = math.log(2.0)


@dataclass
class PolicyParams:
    net: NetworkParams
    action_low: np.ndarray
    action_high: np.ndarray

    @property
    def action_dim(self) -> int:
        return self.action_low.shape[0]

    @property
    def state_dim(self) -> int:
        return self.net.layer_sizes[0]

    @property
    def scale(self) -> np.ndarray:
        return (self.action_high - self.action_low) / 2.0

    @property
    def center(self) -> np.ndarray:
        return (self.action_high + self.action_low) / 2.0


@dataclass
class PolicyDist:
    mean: np.ndarray
    log_std: np.ndarray
    action_low: np.ndarray
    action_high: np.ndarray
    # pre-clamp log-std; the clamp has zero gradient outside [LOG_STD_MIN, LOG_STD_MAX]
    raw_log_std: Optional[np.ndarray] = None


def make_policy(state_dim, action_low, action_high, hidden=(256, 256), seed=0) -> PolicyParams:
    low = np.atleast_1d(np.asarray(action_low, dtype=np.float64))
    high = np.atleast_1d(np.asarray(action_high, dtype=np.float64))
    if low.shape != high.shape or not np.all(low < high):
        raise InvalidArgument("action_low must be elementwise below action_high")
    sizes = [state_dim, *hidden, 2 * low.shape[0]]
    return PolicyParams(init_network(sizes, seed), low, high)


def _split(policy: PolicyParams, out: np.ndarray) -> PolicyDist:
    if not np.all(np.isfinite(out)):
        raise NumericError("policy network produced non-finite output")
    d = policy.action_dim
    mean = out[..., :d]
    raw = out[..., d:]
    return PolicyDist(mean, np.clip(raw, LOG_STD_MIN, LOG_STD_MAX), policy.action_low, policy.action_high, raw)


def policy_dist(policy: PolicyParams, state: np.ndarray) -> PolicyDist:
    out, _ = forward(policy.net, state)
    return _split(policy, out)


def squash_correction(u: np.ndarray) -> np.ndarray:
    """log(1 - tanh(u)^2) in the overflow-free form 2(log 2 - u - softplus(-2u))."""
    return 2.0 * (_LOG2 - u - np.logaddexp(0.0, -2.0 * u))


def _log_prob(u, eps, log_std, scale):
    gauss = -0.5 * eps**2 - log_std - _HALF_LOG_2PI
    return np.sum(gauss - squash_correction(u) - np.log(scale), axis=-1)


def sample_action(dist: PolicyDist, rng: np.random.Generator, noise: Optional[np.ndarray] = None):
    """Reparameterized draw. Returns (action, log_prob).

    ``noise`` overrides the standard-normal draw; zero noise gives the
    deterministic action.
    """
    eps = rng.standard_normal(dist.mean.shape) if noise is None else np.asarray(noise, dtype=np.float64)
    u = dist.mean + np.exp(dist.log_std) * eps
    scale = (dist.action_high - dist.action_low) / 2.0
    center = (dist.action_high + dist.action_low) / 2.0
    action = center + scale * np.tanh(u)
    # tanh saturates to +-1 in float64 for |u| > ~19; keep actions strictly inside the box
    action = np.clip(action, np.nextafter(dist.action_low, dist.action_high), np.nextafter(dist.action_high, dist.action_low))
    return action, _log_prob(u, eps, dist.log_std, scale)


def deterministic_action(dist: PolicyDist) -> np.ndarray:
    scale = (dist.action_high - dist.action_low) / 2.0
    center = (dist.action_high + dist.action_low) / 2.0
    return center + scale * np.tanh(dist.mean)


def actor_update(policy: PolicyParams, ensemble, states, alpha: float, lr: float, rng=None, noise=None):
    """One Adam ascent step on mean_s[ Qbar(s, a~) - alpha * log pi(a~|s) ].

    Qbar averages every head of every online critic. The ensemble is read
    only. Returns ``(objective_before_step, log_probs)``.
    """
    obj, log_probs, grads = actor_objective_and_grad(policy, ensemble, states, alpha, rng=rng, noise=noise)
    if not np.isfinite(obj):
        raise NumericError("non-finite actor objective; update skipped")
    adam_step(policy.net, grads, lr)
    return obj, log_probs


def actor_objective_and_grad(policy: PolicyParams, ensemble, states, alpha, rng=None, noise=None):
    """Objective value and gradients of the *negated* objective (for descent)."""
    states = np.atleast_2d(np.asarray(states, dtype=np.float64))
    batch = states.shape[0]
    out, cache = forward(policy.net, states)
    dist = _split(policy, out)
    eps = rng.standard_normal(dist.mean.shape) if noise is None else np.asarray(noise, dtype=np.float64)
    std = np.exp(dist.log_std)
    u = dist.mean + std * eps
    t = np.tanh(u)
    scale = policy.scale
    actions = policy.center + scale * t
    log_probs = _log_prob(u, eps, dist.log_std, scale)

    q_mean, dq_da = ensemble.mean_q_and_action_grad(states, actions)
    obj = float(np.mean(q_mean - alpha * log_probs))

    # d(-obj)/du, per sample
    d_u = -(dq_da * scale * (1.0 - t * t) - alpha * 2.0 * t) / batch
    d_mean = d_u
    d_log_std = d_u * std * eps - alpha / batch
    inside = (dist.raw_log_std >= LOG_STD_MIN) & (dist.raw_log_std <= LOG_STD_MAX)
    d_out = np.concatenate([d_mean, d_log_std * inside], axis=1)
    grads, _ = backward(policy.net, cache, d_out)
    return obj, log_probs, grads


@dataclass
class TemperatureState:
    log_alpha: float
    target_entropy: float
    fixed: bool = False
    adam_m: np.ndarray = field(default_factory=lambda: np.zeros(1))
    adam_v: np.ndarray = field(default_factory=lambda: np.zeros(1))
    adam_t: int = 0

    @property
    def alpha(self) -> float:
        return math.exp(self.log_alpha)


def make_temperature(action_dim: int, init_alpha: float = 1.0, fixed: bool = False, target_entropy=None):
    if init_alpha <= 0:
        raise InvalidArgument("alpha must be positive")
    te = -float(action_dim) if target_entropy is None else float(target_entropy)
    return TemperatureState(math.log(init_alpha), te, fixed)


def temperature_update(temp: TemperatureState, batch_log_probs: Sequence[float], lr: float) -> TemperatureState:
    """Adam step on log_alpha for loss mean(-alpha * (log_prob + target_entropy))."""
    if temp.fixed:
        return temp
    lp = np.asarray(batch_log_probs, dtype=np.float64)
    if not np.all(np.isfinite(lp)):
        raise NumericError("non-finite log-probabilities in temperature update")
    grad = -temp.alpha * float(np.mean(lp + temp.target_entropy))
    p = np.array([temp.log_alpha])
    temp.adam_t += 1
    adam_update([p], [np.array([grad])], [temp.adam_m], [temp.adam_v], temp.adam_t, lr)
    temp.log_alpha = float(p[0])
    return temp
