"""Transitions and the FIFO replay buffer."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidState, ShapeError


@dataclass
class Transition:
    state: np.ndarray
    action: np.ndarray
    reward: float
    next_state: np.ndarray
    done: bool  # genuine terminal only; time-limit truncation stays False


@dataclass
class Batch:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    dones: np.ndarray

    def __len__(self):
        return self.rewards.shape[0]

    @classmethod
    def from_transitions(cls, transitions):
        return cls(
            np.array([t.state for t in transitions], dtype=np.float64),
            np.array([t.action for t in transitions], dtype=np.float64),
            np.array([t.reward for t in transitions], dtype=np.float64),
            np.array([t.next_state for t in transitions], dtype=np.float64),
            np.array([float(t.done) for t in transitions]),
        )


class ReplayBuffer:
    """Ring buffer over preallocated arrays; the oldest entry is overwritten once full."""

    def __init__(self, capacity, state_dim, action_dim):
        self.capacity = int(capacity)
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.states = np.zeros((self.capacity, state_dim))
        self.actions = np.zeros((self.capacity, action_dim))
        self.rewards = np.zeros(self.capacity)
        self.next_states = np.zeros((self.capacity, state_dim))
        self.dones = np.zeros(self.capacity)
        self.cursor = 0
        self.size = 0

    def __len__(self):
        return self.size

    def push(self, t: Transition) -> None:
        state = np.asarray(t.state, dtype=np.float64)
        action = np.atleast_1d(np.asarray(t.action, dtype=np.float64))
        next_state = np.asarray(t.next_state, dtype=np.float64)
        if state.shape != (self.state_dim,) or next_state.shape != (self.state_dim,):
            raise ShapeError(f"state must have shape ({self.state_dim},)")
        if action.shape != (self.action_dim,):
            raise ShapeError(f"action must have shape ({self.action_dim},)")
        if not np.isfinite(t.reward):
            raise ShapeError("reward must be finite")
        i = self.cursor
        self.states[i] = state
        self.actions[i] = action
        self.rewards[i] = t.reward
        self.next_states[i] = next_state
        self.dones[i] = float(bool(t.done))
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def __getitem__(self, idx: int) -> Transition:
        """Item ``idx`` in insertion order (0 is the oldest still stored)."""
        if not 0 <= idx < self.size:
            raise IndexError(idx)
        j = (self.cursor - self.size + idx) % self.capacity
        return Transition(
            self.states[j].copy(), self.actions[j].copy(), float(self.rewards[j]),
            self.next_states[j].copy(), bool(self.dones[j]),
        )

    def sample_indices(self, batch_size, rng: np.random.Generator) -> np.ndarray:
        if self.size == 0:
            raise InvalidState("cannot sample from an empty replay buffer")
        return rng.integers(0, self.size, size=batch_size)

    def sample(self, batch_size, rng: np.random.Generator) -> Batch:
        """Uniform sample with replacement."""
        idx = self.sample_indices(batch_size, rng)
        return Batch(
            self.states[idx], self.actions[idx], self.rewards[idx],
            self.next_states[idx], self.dones[idx],
        )

    def state_dict(self) -> dict:
        n = self.size
        return {
            "capacity": self.capacity, "cursor": self.cursor, "size": n,
            "states": self.states[:n].copy() if n < self.capacity else self.states.copy(),
            "actions": self.actions[:n].copy() if n < self.capacity else self.actions.copy(),
            "rewards": self.rewards[:n].copy() if n < self.capacity else self.rewards.copy(),
            "next_states": self.next_states[:n].copy() if n < self.capacity else self.next_states.copy(),
            "dones": self.dones[:n].copy() if n < self.capacity else self.dones.copy(),
        }

    def load_state_dict(self, d: dict) -> None:
        if int(d["capacity"]) != self.capacity:
            raise InvalidState("replay buffer capacity mismatch")
        n = len(d["rewards"])
        for name in ("states", "actions", "rewards", "next_states", "dones"):
            getattr(self, name)[:n] = d[name]
        self.cursor = int(d["cursor"])
        self.size = int(d["size"])
