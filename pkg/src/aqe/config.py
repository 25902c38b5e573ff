"""Flat ``key = value`` run configuration.

Defaults follow the published hyperparameter table (lr 3e-4, gamma 0.99,
buffer 1e6, batch 256, two hidden layers of 256, N = 10, h = 2, G = 5).
"""
from __future__ import annotations

import dataclasses
import os
import typing
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Dict, Iterable, Mapping, Optional

from .critic import MODES, REMOVE_MIN_MAX, Aggregator, default_keep
from .errors import ConfigError


@dataclass
class AgentConfig:
    N: int = 10
    h: int = 2
    K: Optional[int] = None  # None resolves to round(0.8 * N * h)
    aggregator: str = "keepk"
    G: int = 5
    gamma: float = 0.99
    polyak_retain: float = 0.995
    lr: float = 3e-4
    batch_size: int = 256
    buffer_size: int = 1_000_000
    hidden: int = 256
    hidden_layers: int = 2
    alpha_mode: str = "auto"
    fixed_alpha: float = 0.2
    init_alpha: float = 1.0
    target_entropy: Optional[float] = None
    start_steps: int = 1000
    seed: int = 0
    total_env_steps: int = 100_000
    eval_every: int = 1000
    eval_episodes: int = 10
    parallel_critics: bool = False

    @property
    def hidden_sizes(self):
        return (self.hidden,) * self.hidden_layers

    def make_aggregator(self) -> Aggregator:
        if self.aggregator == "keepk":
            return Aggregator("keepk", self.K)
        return Aggregator(self.aggregator)

    def validate(self) -> None:
        n_total = self.N * self.h
        checks = [
            ("N", self.N >= 1, "must be >= 1"),
            ("h", self.h >= 1, "must be >= 1"),
            ("G", self.G >= 1, "must be >= 1"),
            ("batch_size", self.batch_size >= 1, "must be >= 1"),
            ("buffer_size", self.buffer_size >= 1, "must be >= 1"),
            ("gamma", 0.0 <= self.gamma < 1.0, "must lie in [0, 1)"),
            ("polyak_retain", 0.0 <= self.polyak_retain <= 1.0, "must lie in [0, 1]"),
            ("lr", self.lr > 0, "must be positive"),
            ("hidden", self.hidden >= 1, "must be >= 1"),
            ("hidden_layers", self.hidden_layers >= 0, "must be >= 0"),
            ("alpha_mode", self.alpha_mode in ("auto", "fixed"), "must be 'auto' or 'fixed'"),
            ("fixed_alpha", self.fixed_alpha >= 0, "must be >= 0"),
            ("init_alpha", self.init_alpha > 0, "must be positive"),
            ("start_steps", self.start_steps >= 0, "must be >= 0"),
            ("total_env_steps", self.total_env_steps >= 0, "must be >= 0"),
            ("eval_every", self.eval_every >= 1, "must be >= 1"),
            ("eval_episodes", self.eval_episodes >= 1, "must be >= 1"),
            ("aggregator", self.aggregator in MODES, f"must be one of {', '.join(MODES)}"),
        ]
        for key, ok, msg in checks:
            if not ok:
                raise ConfigError(key, f"{msg} (got {getattr(self, key)!r})")
        if self.aggregator == "keepk" and not (self.K is not None and 1 <= self.K <= n_total):
            raise ConfigError("K", f"must lie in 1..N*h = 1..{n_total} (got {self.K})")
        if self.aggregator == REMOVE_MIN_MAX and n_total < 3:
            raise ConfigError("aggregator", "removeminmax needs N*h >= 3")


@dataclass
class RunConfig(AgentConfig):
    env_spec: str = "pendulum"
    output_dir: str = "runs"
    run_name: str = "run"
    target_return: Optional[float] = None  # stop once an evaluation reaches this
    bias_pairs: int = 0  # normalized-bias pairs per evaluation; 0 disables
    bias_horizon: int = 200
    log_wallclock: bool = False

    def validate(self) -> None:
        super().validate()
        if self.bias_pairs < 0:
            raise ConfigError("bias_pairs", "must be >= 0")
        if self.bias_horizon < 0:
            raise ConfigError("bias_horizon", "must be >= 0")

    def agent_config(self) -> AgentConfig:
        names = {f.name for f in fields(AgentConfig)}
        return AgentConfig(**{k: v for k, v in dataclasses.asdict(self).items() if k in names})


_FIELDS = {f.name: f for f in fields(RunConfig)}
_HINTS = typing.get_type_hints(RunConfig)


def _base_type(key):
    tp = _HINTS[key]
    args = typing.get_args(tp)
    if args:
        return next(a for a in args if a is not type(None)), True
    return tp, False


def _convert(key: str, raw):
    tp, optional = _base_type(key)
    if isinstance(raw, str):
        text = raw.strip()
        if optional and text.lower() in ("none", "null", ""):
            return None
        try:
            if tp is bool:
                low = text.lower()
                if low in ("true", "1", "yes", "on"):
                    return True
                if low in ("false", "0", "no", "off"):
                    return False
                raise ValueError(text)
            if tp is int:
                try:
                    return int(text)
                except ValueError:
                    f = float(text)  # allow 1e6
                    if not f.is_integer():
                        raise
                    return int(f)
            if tp is float:
                return float(text)
            return text
        except ValueError:
            raise ConfigError(key, f"expected {tp.__name__}, got {text!r}") from None
    if raw is None:
        if optional:
            return None
        raise ConfigError(key, "may not be empty")
    if tp is float and isinstance(raw, (int, float)) and not isinstance(raw, bool):
        return float(raw)
    if not isinstance(raw, tp) or (tp is int and isinstance(raw, bool)):
        raise ConfigError(key, f"expected {tp.__name__}, got {raw!r}")
    return raw


def parse_text(text: str) -> Dict[str, str]:
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"line {lineno}", f"expected 'key = value', got {line!r}")
        out[key.strip()] = value.strip()
    return out


def build_config(values: Mapping[str, object], overrides: Optional[Mapping[str, object]] = None) -> RunConfig:
    """Merge file values and overrides (overrides win) onto the defaults."""
    merged = dict(values)
    merged.update(overrides or {})
    unknown = sorted(set(merged) - set(_FIELDS))
    if unknown:
        raise ConfigError(unknown[0], "unknown key")
    kwargs = {k: _convert(k, v) for k, v in merged.items()}
    if "seed" not in kwargs and os.environ.get("AQE_SEED"):
        kwargs["seed"] = _convert("seed", os.environ["AQE_SEED"])
    cfg = RunConfig(**kwargs)
    if cfg.K is None and cfg.aggregator == "keepk":
        cfg.K = default_keep(cfg.N * cfg.h)
    cfg.validate()
    return cfg


def parse_config(path=None, overrides: Optional[Mapping[str, object]] = None) -> RunConfig:
    text = Path(path).read_text() if path is not None else ""
    return build_config(parse_text(text), overrides)


def _fmt(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def echo_config(cfg: RunConfig) -> str:
    return "".join(f"{f.name} = {_fmt(getattr(cfg, f.name))}\n" for f in fields(RunConfig))


def write_echo(cfg: RunConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{cfg.run_name}.config"
    path.write_text(echo_config(cfg))
    return path


def config_keys() -> Iterable[str]:
    return list(_FIELDS)
