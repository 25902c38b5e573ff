"""Small deterministic environments and tabular MDP oracles."""
from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument, NumericError


def angle_normalize(x):
    """Map an angle into (-pi, pi]."""
    y = math.remainder(x, 2.0 * math.pi)
    return math.pi if y == -math.pi else y


class PendulumEnv:
    """Pendulum swing-up, theta = 0 upright.

    Semi-implicit Euler with dt = 0.05; episodes end by truncation after
    ``horizon`` steps (never a terminal state).
    """

    g = 10.0
    mass = 1.0
    length = 1.0
    dt = 0.05
    max_torque = 2.0
    max_speed = 8.0

    state_dim = 3
    action_dim = 1
    supports_state_injection = True

    def __init__(self, seed=None, horizon=200):
        self.horizon = horizon
        self.action_low = np.array([-self.max_torque])
        self.action_high = np.array([self.max_torque])
        self.rng = np.random.default_rng(seed)
        self.theta = 0.0
        self.theta_dot = 0.0
        self.t = 0

    def seed(self, seed):
        self.rng = np.random.default_rng(seed)

    def obs(self):
        return np.array([math.cos(self.theta), math.sin(self.theta), self.theta_dot])

    def reset(self):
        self.theta = float(-self.rng.uniform(-math.pi, math.pi))  # (-pi, pi]
        self.theta_dot = float(self.rng.uniform(-1.0, 1.0))
        self.t = 0
        return self.obs()

    def step(self, action):
        """Returns (obs, reward, terminated, truncated)."""
        u = float(np.clip(np.asarray(action, dtype=np.float64).reshape(-1)[0], -self.max_torque, self.max_torque))
        th, thdot = self.theta, self.theta_dot
        reward = -(angle_normalize(th) ** 2 + 0.1 * thdot**2 + 0.001 * u**2)
        acc = 3.0 * self.g / (2.0 * self.length) * math.sin(th) + 3.0 / (self.mass * self.length**2) * u
        thdot = min(max(thdot + acc * self.dt, -self.max_speed), self.max_speed)
        self.theta = th + thdot * self.dt
        self.theta_dot = thdot
        self.t += 1
        return self.obs(), reward, False, self.t >= self.horizon

    def get_state(self):
        return {"theta": self.theta, "theta_dot": self.theta_dot, "t": self.t, "rng": self.rng.bit_generator.state}

    def set_state(self, state):
        self.theta = float(state["theta"])
        self.theta_dot = float(state["theta_dot"])
        self.t = int(state.get("t", 0))
        if "rng" in state:
            self.rng.bit_generator.state = state["rng"]

    def set_physical_state(self, theta, theta_dot):
        self.theta, self.theta_dot, self.t = float(theta), float(theta_dot), 0


class Chain3Env:
    """Three-step chain: one-hot position, reward 1 per step, truncated after 3 steps.

    The last transition of each episode is a time-limit truncation, so its
    bootstrap must survive.
    """

    state_dim = 3
    action_dim = 1
    horizon = 3
    supports_state_injection = True

    def __init__(self, seed=None):
        self.action_low = np.array([-1.0])
        self.action_high = np.array([1.0])
        self.pos = 0
        self.t = 0

    def seed(self, seed):
        pass

    def obs(self):
        o = np.zeros(3)
        o[self.pos] = 1.0
        return o

    def reset(self):
        self.pos = 0
        self.t = 0
        return self.obs()

    def step(self, action):
        self.pos = min(self.pos + 1, 2)
        self.t += 1
        return self.obs(), 1.0, False, self.t >= self.horizon

    def get_state(self):
        return {"pos": self.pos, "t": self.t}

    def set_state(self, state):
        self.pos = int(state["pos"])
        self.t = int(state["t"])


@dataclass
class TabularMdp:
    P: np.ndarray  # (S, A, S)
    R: np.ndarray  # (S, A)
    gamma: float

    @property
    def S(self):
        return self.R.shape[0]

    @property
    def A(self):
        return self.R.shape[1]


def make_random_mdp(S, A, seed, reward_scale=1.0, gamma=0.9) -> TabularMdp:
    """Dirichlet(1) transition rows and uniform [0, reward_scale] rewards."""
    if S < 1 or A < 1:
        raise InvalidArgument("S and A must be at least 1")
    rng = np.random.default_rng(seed)
    P = rng.dirichlet(np.ones(S), size=(S, A))
    P /= P.sum(axis=-1, keepdims=True)
    R = rng.uniform(0.0, reward_scale, size=(S, A))
    return TabularMdp(P, R, gamma)


def _fixed_point(mdp, backup, tol, max_iter):
    if not 0.0 <= mdp.gamma < 1.0:
        raise InvalidArgument("value iteration needs gamma < 1")
    Q = np.zeros_like(mdp.R)
    prev_delta = None
    for _ in range(max_iter):
        Q_new = mdp.R + mdp.gamma * (mdp.P @ backup(Q))
        delta = float(np.max(np.abs(Q_new - Q)))
        # gamma-contraction of successive residuals (slack for rounding)
        if prev_delta is not None and delta > mdp.gamma * prev_delta + 1e-12:
            raise NumericError(f"residual grew from {prev_delta} to {delta}")
        Q, prev_delta = Q_new, delta
        if delta < tol:
            return Q
    raise NumericError(f"no convergence within {max_iter} iterations")


def value_iteration(mdp: TabularMdp, tol=1e-12, max_iter=100_000) -> np.ndarray:
    return _fixed_point(mdp, lambda Q: Q.max(axis=1), tol, max_iter)


def q_pi_evaluation(mdp: TabularMdp, policy_table, tol=1e-12, max_iter=100_000) -> np.ndarray:
    """Q^pi for a stochastic policy table pi[s, a]."""
    pi = np.asarray(policy_table, dtype=np.float64)
    return _fixed_point(mdp, lambda Q: (pi * Q).sum(axis=1), tol, max_iter)


def bellman_residual(mdp: TabularMdp, Q, policy_table=None) -> float:
    V = Q.max(axis=1) if policy_table is None else (policy_table * Q).sum(axis=1)
    return float(np.max(np.abs(mdp.R + mdp.gamma * (mdp.P @ V) - Q)))


_MDP_RE = re.compile(r"^random_mdp:(.*)$")


def parse_env_spec(spec: str) -> tuple:
    """Returns (kind, kwargs) for an env spec string."""
    spec = spec.strip()
    if spec in ("pendulum", "chain3"):
        return spec, {}
    m = _MDP_RE.match(spec)
    if m:
        kw = {}
        for part in filter(None, m.group(1).split(",")):
            key, _, val = part.partition("=")
            key = key.strip()
            if key not in ("S", "A", "seed", "gamma", "reward_scale"):
                raise InvalidArgument(f"unknown random_mdp field {key!r}")
            kw[key] = float(val) if key in ("gamma", "reward_scale") else int(val)
        if "S" not in kw or "A" not in kw:
            raise InvalidArgument("random_mdp needs S and A")
        kw.setdefault("seed", 0)
        return "random_mdp", kw
    raise InvalidArgument(f"unknown env spec {spec!r}")


def make_env(spec: str, seed=None):
    kind, kw = parse_env_spec(spec)
    if kind == "pendulum":
        return PendulumEnv(seed)
    if kind == "chain3":
        return Chain3Env(seed)
    return make_random_mdp(**kw)
