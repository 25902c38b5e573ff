"""Multi-head critic ensemble with keep-K target aggregation."""
from __future__ import annotations

from concurrent.futures import Executor
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .errors import InvalidArgument, NumericError, ShapeError
from .nn import NetworkParams, adam_step, backward, forward, init_network
from .policy import PolicyParams, policy_dist, sample_action

KEEP_K = "keepk"
MEAN = "mean"
MEDIAN = "median"
REMOVE_MIN_MAX = "removeminmax"
MODES = (KEEP_K, MEAN, MEDIAN, REMOVE_MIN_MAX)


@dataclass(frozen=True)
class Aggregator:
    mode: str = KEEP_K
    k: Optional[int] = None

    def validate(self, n: int) -> None:
        if self.mode not in MODES:
            raise InvalidArgument(f"unknown aggregator mode {self.mode!r}")
        if self.mode == KEEP_K and (self.k is None or not 1 <= self.k <= n):
            raise InvalidArgument(f"K={self.k} out of range 1..{n}")
        if self.mode == REMOVE_MIN_MAX and n < 3:
            raise InvalidArgument("RemoveMinMax needs at least 3 values")

    def __str__(self) -> str:
        return f"keepk({self.k})" if self.mode == KEEP_K else self.mode


def keep_k(k: int) -> Aggregator:
    return Aggregator(KEEP_K, int(k))


def default_keep(n_total: int) -> int:
    """Keep 80% of the N*h estimates (16 of 20)."""
    return max(1, int(round(0.8 * n_total)))


def aggregate_rows(values: np.ndarray, agg: Aggregator) -> np.ndarray:
    """Aggregate along the last axis.

    Sums run left to right over the sorted values (via cumsum), so the result
    is bitwise reproducible against a sequential sort-then-add loop.
    """
    values = np.asarray(values, dtype=np.float64)
    n = values.shape[-1]
    agg.validate(n)
    s = np.sort(values, axis=-1)
    if agg.mode == KEEP_K:
        return np.cumsum(s[..., : agg.k], axis=-1)[..., -1] / agg.k
    if agg.mode == MEAN:
        return np.cumsum(s, axis=-1)[..., -1] / n
    if agg.mode == MEDIAN:
        if n % 2:
            return s[..., n // 2]
        return (s[..., n // 2 - 1] + s[..., n // 2]) / 2.0
    return np.cumsum(s[..., 1:-1], axis=-1)[..., -1] / (n - 2)


def aggregate(values: Sequence[float], agg: Aggregator) -> float:
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 1:
        raise ShapeError("aggregate expects a 1-D vector")
    if not np.all(np.isfinite(values)):
        raise NumericError("non-finite values passed to aggregate")
    return float(aggregate_rows(values, agg))


@dataclass
class CriticEnsemble:
    online: List[NetworkParams]
    target: List[NetworkParams]
    heads: int

    @property
    def n(self) -> int:
        return len(self.online)

    @property
    def n_total(self) -> int:
        return self.n * self.heads

    def mean_q_and_action_grad(self, states, actions):
        """Mean over all N*h online heads, and its gradient w.r.t. the action."""
        x = np.concatenate([states, actions], axis=1)
        d_act = actions.shape[1]
        total = np.zeros(x.shape[0])
        grad = np.zeros_like(actions)
        g_out = np.full((x.shape[0], self.heads), 1.0 / self.n_total)
        for net in self.online:
            q, cache = forward(net, x)
            total += q.sum(axis=1)
            _, gx = backward(net, cache, g_out, need_param_grads=False)
            grad += gx[:, -d_act:]
        return total / self.n_total, grad


def make_ensemble(n: int, heads: int, state_dim: int, action_dim: int, hidden=(256, 256), seed=0) -> CriticEnsemble:
    if n < 1 or heads < 1:
        raise InvalidArgument("N and h must be positive")
    sizes = [state_dim + action_dim, *hidden, heads]
    seq = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    seeds = seq.spawn(n)
    online = [init_network(sizes, s) for s in seeds]
    return CriticEnsemble(online, [net.copy() for net in online], heads)


def q_all_heads(nets: Sequence[NetworkParams], states, actions) -> np.ndarray:
    """(batch, N*h) matrix; column j*h + m is head m of network j."""
    x = np.concatenate([np.atleast_2d(states), np.atleast_2d(actions)], axis=1)
    widths = {net.layer_sizes[0] for net in nets}
    if len(widths) != 1 or x.shape[1] not in widths:
        raise ShapeError(f"state+action width {x.shape[1]} does not match critic input {widths}")
    return np.concatenate([forward(net, x)[0] for net in nets], axis=1)


def compute_targets(batch, target_nets, policy: PolicyParams, alpha, gamma, agg: Aggregator, rng, noise=None):
    """y = r + gamma * (1 - done) * (agg(target heads at (s', a~')) - alpha * log pi(a~'|s')).

    a~' is drawn fresh for every transition. Only ``target_nets`` are read.
    """
    dist = policy_dist(policy, batch.next_states)
    next_actions, log_probs = sample_action(dist, rng, noise=noise)
    q = q_all_heads(target_nets, batch.next_states, next_actions)
    soft = aggregate_rows(q, agg) - alpha * log_probs
    y = batch.rewards + gamma * (1.0 - batch.dones) * soft
    if not np.all(np.isfinite(y)):
        raise NumericError("non-finite Q target")
    return y


def critic_loss_and_grads(net: NetworkParams, x: np.ndarray, y: np.ndarray):
    """Mean over batch and heads of (head - y)^2, with its parameter gradients."""
    q, cache = forward(net, x)
    diff = q - y[:, None]
    loss = float(np.mean(diff * diff))
    grads, _ = backward(net, cache, 2.0 * diff / diff.size)
    return loss, grads


def _update_one(net, x, y, lr):
    loss, grads = critic_loss_and_grads(net, x, y)
    if not np.isfinite(loss):
        raise NumericError("non-finite critic loss; step skipped")
    adam_step(net, grads, lr)
    return loss


def critic_update(online: Sequence[NetworkParams], batch, targets, lr, executor: Optional[Executor] = None) -> np.ndarray:
    """One Adam step per network toward the shared targets. Returns per-network losses.

    With an ``executor`` the networks are updated concurrently; each job owns
    its network, so results are identical to the sequential path.
    """
    x = np.concatenate([batch.states, batch.actions], axis=1)
    y = np.asarray(targets, dtype=np.float64)
    if executor is None:
        losses = [_update_one(net, x, y, lr) for net in online]
    else:
        losses = list(executor.map(lambda net: _update_one(net, x, y, lr), online))
    return np.array(losses)


def polyak_update(target_nets: Sequence[NetworkParams], online_nets: Sequence[NetworkParams], retain: float):
    """p_t <- retain * p_t + (1 - retain) * p_o for every parameter."""
    if not 0.0 <= retain <= 1.0:
        raise InvalidArgument(f"retain must lie in [0, 1], got {retain}")
    for tgt, src in zip(target_nets, online_nets):
        for pt, po in zip(tgt.arrays(), src.arrays()):
            if retain == 0.0:
                pt[...] = po
            else:
                # difference form keeps online == target an exact fixed point
                pt += (1.0 - retain) * (po - pt)
        tgt.touch()
    return target_nets
