"""Agent checkpoints.

File layout (little-endian throughout)::

    magic      8 bytes  b"AQECKPT\\0"
    version    u32
    header     u64 length + UTF-8 JSON (config, counters, RNG states,
               environment state, temperature, current observation)
    policy     one network record (see aqe.nn)
    ensemble   magic b"AQEENS\\0\\0" | u32 N | u32 h | u32 n_sizes | u32 sizes[]
               | N online network records | N target network records
    buffer     u64 capacity | u64 cursor | u64 size | u64 stored_rows
               | f64 states | f64 actions | f64 rewards | f64 next_states | f64 dones
               (each array row-major over stored_rows)

Floats in the JSON header are written with ``repr`` and round-trip exactly.
"""
from __future__ import annotations

import dataclasses
import json
import os
import struct
from pathlib import Path
from typing import BinaryIO

import numpy as np

from .config import AgentConfig, RunConfig
from .critic import CriticEnsemble
from .errors import InvalidState
from .nn import read_network, write_network

CKPT_MAGIC = b"AQECKPT\x00"
ENS_MAGIC = b"AQEENS\x00\x00"
CKPT_VERSION = 1


def write_ensemble(ens: CriticEnsemble, fh: BinaryIO) -> None:
    sizes = ens.online[0].layer_sizes
    fh.write(ENS_MAGIC)
    fh.write(struct.pack("<III", ens.n, ens.heads, len(sizes)))
    fh.write(struct.pack(f"<{len(sizes)}I", *sizes))
    for net in ens.online + ens.target:
        write_network(net, fh)


def read_ensemble(fh: BinaryIO) -> CriticEnsemble:
    if fh.read(8) != ENS_MAGIC:
        raise InvalidState("bad ensemble block magic")
    n, heads, k = struct.unpack("<III", fh.read(12))
    sizes = list(struct.unpack(f"<{k}I", fh.read(4 * k)))
    nets = [read_network(fh) for _ in range(2 * n)]
    if any(net.layer_sizes != sizes for net in nets):
        raise InvalidState("ensemble header does not match network records")
    return CriticEnsemble(nets[:n], nets[n:], heads)


_BUF_FIELDS = ("states", "actions", "rewards", "next_states", "dones")


def _write_buffer(buf, fh):
    d = buf.state_dict()
    rows = len(d["rewards"])
    fh.write(struct.pack("<QQQQ", d["capacity"], d["cursor"], d["size"], rows))
    for name in _BUF_FIELDS:
        fh.write(np.ascontiguousarray(d[name], dtype="<f8").tobytes())


def _read_buffer(buf, fh):
    capacity, cursor, size, rows = struct.unpack("<QQQQ", fh.read(32))
    widths = {"states": buf.state_dim, "actions": buf.action_dim, "rewards": 0,
              "next_states": buf.state_dim, "dones": 0}
    d = {"capacity": capacity, "cursor": cursor, "size": size}
    for name in _BUF_FIELDS:
        w = widths[name]
        count = rows * max(w, 1)
        arr = np.frombuffer(fh.read(8 * count), dtype="<f8").astype(np.float64)
        d[name] = arr.reshape(rows, w) if w else arr
    buf.load_state_dict(d)


def _header(agent) -> dict:
    t = agent.temp
    return {
        "config": dataclasses.asdict(agent.config),
        "config_class": type(agent.config).__name__,
        "env_spec": getattr(agent, "env_spec", None),
        "env_steps": agent.env_steps,
        "critic_rounds": agent.critic_rounds,
        "actor_updates": agent.actor_updates,
        "episode_return": agent.episode_return,
        "pending": [list(p) for p in agent.pending],
        "obs": [float(x) for x in agent.obs],
        "rng": {
            "act": agent.rng_act.bit_generator.state,
            "sample": agent.rng_sample.bit_generator.state,
            "noise": agent.rng_noise.bit_generator.state,
        },
        "env": agent.env.get_state(),
        "temperature": {
            "log_alpha": t.log_alpha, "target_entropy": t.target_entropy, "fixed": t.fixed,
            "adam_m": float(t.adam_m[0]), "adam_v": float(t.adam_v[0]), "adam_t": t.adam_t,
        },
    }


def save_agent(agent, path) -> Path:
    """Write atomically: a temp file is renamed over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    header = json.dumps(_header(agent), sort_keys=True).encode()
    with open(tmp, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<I", CKPT_VERSION))
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        write_network(agent.policy.net, fh)
        write_ensemble(agent.critics, fh)
        _write_buffer(agent.buffer, fh)
    os.replace(tmp, path)
    return path


def read_header(path) -> dict:
    with open(path, "rb") as fh:
        return _read_header(fh)


def _read_header(fh) -> dict:
    if fh.read(8) != CKPT_MAGIC:
        raise InvalidState("not an AQE checkpoint")
    (version,) = struct.unpack("<I", fh.read(4))
    if version != CKPT_VERSION:
        raise InvalidState(f"unsupported checkpoint version {version}")
    (n,) = struct.unpack("<Q", fh.read(8))
    return json.loads(fh.read(n).decode())


def load_agent(path, env):
    """Rebuild an agent from a checkpoint; ``env`` must match the saved env kind."""
    from .agent import Agent

    with open(path, "rb") as fh:
        h = _read_header(fh)
        cls = RunConfig if h.get("config_class") == "RunConfig" else AgentConfig
        cfg = cls(**h["config"])
        agent = Agent(cfg, env)
        agent.policy.net = read_network(fh)
        agent.critics = read_ensemble(fh)
        _read_buffer(agent.buffer, fh)
    agent.env_spec = h.get("env_spec")
    agent.env_steps = h["env_steps"]
    agent.critic_rounds = h["critic_rounds"]
    agent.actor_updates = h["actor_updates"]
    agent.episode_return = h["episode_return"]
    agent.pending = [tuple(p) for p in h.get("pending", [])]
    agent.obs = np.array(h["obs"])
    agent.rng_act.bit_generator.state = h["rng"]["act"]
    agent.rng_sample.bit_generator.state = h["rng"]["sample"]
    agent.rng_noise.bit_generator.state = h["rng"]["noise"]
    env.set_state(h["env"])
    t = h["temperature"]
    agent.temp.log_alpha = t["log_alpha"]
    agent.temp.target_entropy = t["target_entropy"]
    agent.temp.fixed = t["fixed"]
    agent.temp.adam_m[0] = t["adam_m"]
    agent.temp.adam_v[0] = t["adam_v"]
    agent.temp.adam_t = t["adam_t"]
    return agent
