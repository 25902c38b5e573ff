"""Tabular AQE and a Monte Carlo lab for the keep-K post-update bias.

For i.i.d. zero-mean errors e^j(a) added to true action values q(a), the
post-update bias of the keep-K target is

    Z_{K,N} = gamma * (max_a mean_of_K_lowest_j(q(a) + e^j(a)) - max_a q(a)).

The lab estimates E[Z_{K,N}] and checks the ordering properties it obeys:
non-negative at K = N, nondecreasing in K, nonincreasing in N, and negative
for K = 1 once N is large (approaching gamma * (max_a(q(a) + inf e) - max_a q(a))).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy import stats

from .envs import TabularMdp, value_iteration
from .errors import InvalidArgument

Z_99 = float(stats.norm.ppf(0.995))


# ---------------------------------------------------------------------------
# tabular AQE


@dataclass
class TabularEnsemble:
    Q: np.ndarray  # (N, S, A)
    K: int
    alpha: float = 0.1
    gamma: float = 0.9

    def __post_init__(self):
        if not 1 <= self.K <= self.N:
            raise InvalidArgument(f"K={self.K} must lie in 1..{self.N}")

    @property
    def N(self) -> int:
        return self.Q.shape[0]

    @classmethod
    def zeros(cls, N, K, S, A, alpha=0.1, gamma=0.9):
        return cls(np.zeros((N, S, A)), K, alpha, gamma)

    def mean_q(self) -> np.ndarray:
        return self.Q.mean(axis=0)


def keep_k_target(ens: TabularEnsemble, r: float, s_next: int) -> float:
    """r + gamma * max_a' (mean of the K lowest members at (s', a'))."""
    vals = np.sort(ens.Q[:, s_next, :], axis=0)
    kept = np.cumsum(vals[: ens.K], axis=0)[-1] / ens.K
    return r + ens.gamma * float(kept.max())


def tabular_aqe_update(ens: TabularEnsemble, s, a, r, s_next, lr=None) -> TabularEnsemble:
    """Move every member's Q^j(s, a) toward the shared keep-K target."""
    y = keep_k_target(ens, r, s_next)
    step = ens.alpha if lr is None else lr
    col = ens.Q[:, s, a]
    ens.Q[:, s, a] = col + step * (y - col)
    return ens


@dataclass
class TabularRun:
    ensemble: TabularEnsemble
    trace: List[tuple]  # (step, sup-norm error of ensemble mean vs Q*)
    visits: np.ndarray


def sample_next_state(cdf_row: np.ndarray, u: float) -> int:
    """Inverse-CDF draw; ``cdf_row`` is the cumulative sum of a transition row."""
    return min(int(np.searchsorted(cdf_row, u, side="right")), cdf_row.shape[0] - 1)


def run_tabular_aqe(
    mdp: TabularMdp,
    ens: TabularEnsemble,
    behavior: str = "epsilon-greedy",
    steps: int = 100_000,
    seed: int = 0,
    epsilon: float = 0.1,
    lr_exponent: Optional[float] = None,
    log_every: int = 1000,
    q_star: Optional[np.ndarray] = None,
) -> TabularRun:
    """Run tabular AQE along a single trajectory.

    Random draws per step, in order: explore coin (epsilon-greedy only),
    exploratory action, next-state uniform. ``lr_exponent`` switches the
    step size to 1 / (1 + visits(s, a)) ** lr_exponent.
    """
    if behavior not in ("epsilon-greedy", "uniform"):
        raise InvalidArgument(f"unknown behavior {behavior!r}")
    if ens.gamma != mdp.gamma:
        raise InvalidArgument("ensemble and MDP discount differ")
    if q_star is None:
        q_star = value_iteration(mdp)
    rng = np.random.default_rng(seed)
    cdf = np.cumsum(mdp.P, axis=-1)
    visits = np.zeros((mdp.S, mdp.A), dtype=np.int64)
    trace = []
    s = int(rng.integers(mdp.S))
    for step in range(1, steps + 1):
        if behavior == "uniform" or rng.random() < epsilon:
            a = int(rng.integers(mdp.A))
        else:
            a = int(np.argmax(ens.Q[:, s, :].mean(axis=0)))
        s_next = sample_next_state(cdf[s, a], rng.random())
        lr = None if lr_exponent is None else 1.0 / (1.0 + visits[s, a]) ** lr_exponent
        tabular_aqe_update(ens, s, a, float(mdp.R[s, a]), s_next, lr=lr)
        visits[s, a] += 1
        s = s_next
        if step % log_every == 0:
            trace.append((step, float(np.max(np.abs(ens.mean_q() - q_star)))))
    return TabularRun(ens, trace, visits)


# ---------------------------------------------------------------------------
# post-update bias lab

ERROR_DISTS = ("uniform", "gaussian", "beta")


@dataclass
class ZSampleConfig:
    N: int
    K: int
    gamma: float = 0.99
    num_actions: int = 3
    q_pi: Optional[Sequence[float]] = None  # defaults to all-equal (zeros)
    error_dist: str = "uniform"
    spread: float = 1.0  # c for Uniform(-c, c) / scaled Beta(2,2); sigma for Gaussian

    def __post_init__(self):
        if not 1 <= self.K <= self.N:
            raise InvalidArgument(f"K={self.K} must lie in 1..{self.N}")
        if self.spread < 0:
            raise InvalidArgument("spread must be non-negative")
        if self.error_dist not in ERROR_DISTS:
            raise InvalidArgument(f"unknown error distribution {self.error_dist!r}")
        if self.q_pi is not None and len(self.q_pi) != self.num_actions:
            raise InvalidArgument("q_pi must have one entry per action")

    def q_vector(self) -> np.ndarray:
        return np.zeros(self.num_actions) if self.q_pi is None else np.asarray(self.q_pi, dtype=np.float64)

    def error_lower_bound(self) -> float:
        """inf of the error support (-inf for Gaussian)."""
        return -math.inf if self.error_dist == "gaussian" else -self.spread


def draw_errors(dist: str, spread: float, shape, rng: np.random.Generator) -> np.ndarray:
    """Zero-mean i.i.d. errors. ``beta`` is a symmetric Beta(2,2) rescaled to (-spread, spread)."""
    if dist == "uniform":
        return rng.uniform(-spread, spread, size=shape)
    if dist == "gaussian":
        return rng.normal(0.0, spread, size=shape)
    if dist == "beta":
        return spread * (2.0 * rng.beta(2.0, 2.0, size=shape) - 1.0)
    raise InvalidArgument(f"unknown error distribution {dist!r}")


def keep_k_means(Q: np.ndarray, K: int) -> np.ndarray:
    """Mean of the K lowest entries along the last axis."""
    if K == 1:
        return Q.min(axis=-1)
    if K == Q.shape[-1]:
        return Q.mean(axis=-1)
    low = np.partition(Q, K - 1, axis=-1)[..., :K]
    return low.mean(axis=-1)


def z_from_errors(errors: np.ndarray, q_pi: np.ndarray, K: int, gamma: float) -> np.ndarray:
    """Z for each draw; ``errors`` has shape (..., |A|, N)."""
    Q = q_pi[:, None] + errors
    return gamma * (keep_k_means(Q, K).max(axis=-1) - q_pi.max())


def sample_Z(cfg: ZSampleConfig, rng: np.random.Generator) -> float:
    e = draw_errors(cfg.error_dist, cfg.spread, (cfg.num_actions, cfg.N), rng)
    return float(z_from_errors(e, cfg.q_vector(), cfg.K, cfg.gamma))


@dataclass
class EZEstimate:
    mean: float
    half_width_99: float
    samples: int

    @property
    def lower(self) -> float:
        return self.mean - self.half_width_99

    @property
    def upper(self) -> float:
        return self.mean + self.half_width_99

    def as_dict(self) -> dict:
        return {"mean": self.mean, "half_width_99": self.half_width_99, "samples": self.samples}


class _Moments:
    """Chunked mean/variance accumulator; chunks are combined in a fixed order."""

    def __init__(self):
        self.n = 0
        self.mean = 0.0
        self.m2 = 0.0

    def add(self, x: np.ndarray) -> None:
        n_b = x.size
        if n_b == 0:
            return
        mean_b = float(np.mean(x))
        m2_b = float(np.sum((x - mean_b) ** 2))
        n = self.n + n_b
        delta = mean_b - self.mean
        self.mean += delta * n_b / n
        self.m2 += m2_b + delta * delta * self.n * n_b / n
        self.n = n

    def estimate(self) -> EZEstimate:
        var = self.m2 / (self.n - 1) if self.n > 1 else 0.0
        return EZEstimate(self.mean, Z_99 * math.sqrt(var / self.n), self.n)


def estimate_EZ(cfg: ZSampleConfig, num_samples: int, rng: np.random.Generator, chunk: int = 50_000) -> EZEstimate:
    """Sample mean of Z with a normal-approximation 99% confidence interval."""
    if num_samples < 10_000:
        raise InvalidArgument("num_samples must be at least 1e4")
    q = cfg.q_vector()
    acc = _Moments()
    done = 0
    while done < num_samples:
        m = min(chunk, num_samples - done)
        e = draw_errors(cfg.error_dist, cfg.spread, (m, cfg.num_actions, cfg.N), rng)
        acc.add(z_from_errors(e, q, cfg.K, cfg.gamma))
        done += m
    return acc.estimate()


# ---------------------------------------------------------------------------
# coupled suite


@dataclass
class Check:
    name: str
    passed: bool
    detail: Dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"name": self.name, "passed": bool(self.passed), **self.detail}


@dataclass
class SuiteReport:
    checks: List[Check]
    seed: int

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def as_dict(self) -> dict:
        return {"seed": self.seed, "passed": self.passed, "checks": [c.as_dict() for c in self.checks]}


def coupled_estimates(
    pairs: Sequence[tuple],
    num_samples: int,
    rng: np.random.Generator,
    num_actions=3,
    gamma=0.99,
    error_dist="uniform",
    spread=1.0,
    q_pi=None,
    chunk=None,
    monotonicity_upto: int = 0,
):
    """Estimate E[Z_{K,N}] for several (K, N) pairs from one shared error draw.

    Member j's error is the same across every pair, so the variants differ
    only by which prefix of the ensemble they see. When ``monotonicity_upto``
    is positive, the samplewise orderings in K and N are checked exactly for
    every draw with N up to that bound; the number of violations is returned.
    """
    n_max = max(max(n for _, n in pairs), monotonicity_upto)
    q = np.zeros(num_actions) if q_pi is None else np.asarray(q_pi, dtype=np.float64)
    if chunk is None:
        chunk = max(1000, min(100_000, 20_000_000 // (num_actions * n_max)))
    accs = {p: _Moments() for p in pairs}
    violations = {"K": 0, "N": 0}
    done = 0
    while done < num_samples:
        m = min(chunk, num_samples - done)
        e = draw_errors(error_dist, spread, (m, num_actions, n_max), rng)
        Q = q[None, :, None] + e
        for K, N in pairs:
            accs[(K, N)].add(gamma * (keep_k_means(Q[..., :N], K).max(axis=-1) - q.max()))
        if monotonicity_upto:
            v = samplewise_violations(Q[..., :monotonicity_upto])
            violations["K"] += v["K"]
            violations["N"] += v["N"]
        done += m
    return {p: a.estimate() for p, a in accs.items()}, violations


def samplewise_violations(Q: np.ndarray) -> Dict[str, int]:
    """Count draws where a keep-K mean breaks its exact ordering.

    For each prefix size N, the keep-K means (K = 1..N) are running averages
    of the sorted prefix. They must be nondecreasing in K, and adding member
    N+1 must never raise the keep-K mean for any K <= N.
    """
    n_max = Q.shape[-1]
    bad_k = bad_n = 0
    prev = None
    for N in range(1, n_max + 1):
        s = np.sort(Q[..., :N], axis=-1)
        means = np.cumsum(s, axis=-1) / np.arange(1, N + 1)
        bad_k += int(np.count_nonzero(np.any(np.diff(means, axis=-1) < -1e-12, axis=-1)))
        if prev is not None:
            bad_n += int(np.count_nonzero(np.any(means[..., : N - 1] > prev + 1e-12, axis=-1)))
        prev = means
    return {"K": bad_k, "N": bad_n}


def theorem1_suite(seed: int = 0, num_samples: int = 1_000_000, gamma: float = 0.99) -> SuiteReport:
    """Run every bias-ordering check with Uniform(-1, 1) errors.

    1. E[Z_{N,N}] >= 0 (within one 99% half-width), N in {1, 2, 5, 10}, |A| = 3.
    2. Exact samplewise monotonicity in K and N on every coupled draw, and the
       estimates nondecreasing in K within overlapping intervals.
    3. E[Z_{1,1}] with |A| = 2 equals gamma / 3 to within 0.01.
    4. E[Z_{1,N}] < 0 for N >= 20, and within 0.02 of -gamma at N = 1000.
    """
    rng = np.random.default_rng(seed)
    checks: List[Check] = []

    part1_n = (1, 2, 5, 10)
    k_sweep = [(k, 10) for k in range(1, 11)]
    big_n = (20, 50, 100, 1000)
    pairs = sorted({(n, n) for n in part1_n} | set(k_sweep) | {(1, n) for n in (1, 2, 5) + big_n})
    est, viol = coupled_estimates(pairs, num_samples, rng, num_actions=3, gamma=gamma, monotonicity_upto=20)

    for n in part1_n:
        e = est[(n, n)]
        checks.append(Check(f"nonneg_full_keep_N{n}", e.mean >= -e.half_width_99, {"K": n, "N": n, **e.as_dict()}))

    checks.append(Check("samplewise_monotone_K", viol["K"] == 0, {"violations": viol["K"], "draws": num_samples}))
    checks.append(Check("samplewise_monotone_N", viol["N"] == 0, {"violations": viol["N"], "draws": num_samples}))

    sweep = [est[p] for p in k_sweep]
    ok = all(b.upper >= a.lower for a, b in zip(sweep, sweep[1:]))
    checks.append(Check("estimates_nondecreasing_in_K", ok, {"N": 10, "means": [e.mean for e in sweep]}))
    ones = [est[(1, n)] for n in (1, 2, 5) + big_n]
    ok = all(b.lower <= a.upper for a, b in zip(ones, ones[1:]))
    checks.append(Check("estimates_nonincreasing_in_N", ok, {"K": 1, "N": [1, 2, 5, *big_n], "means": [e.mean for e in ones]}))

    two = estimate_EZ(ZSampleConfig(N=1, K=1, gamma=gamma, num_actions=2), num_samples, rng)
    expected = gamma / 3.0
    checks.append(Check("two_action_closed_form", abs(two.mean - expected) <= 0.01, {"expected": expected, **two.as_dict()}))

    for n in big_n:
        e = est[(1, n)]
        checks.append(Check(f"negative_K1_N{n}", e.upper < 0.0, {"K": 1, "N": n, **e.as_dict()}))
    limit = gamma * (-1.0 - 0.0)  # gamma * (max_a(q + inf e) - max_a q) with q = 0, inf e = -1
    e = est[(1, 1000)]
    checks.append(Check("limit_K1_N1000", abs(e.mean - limit) <= 0.02, {"limit": limit, **e.as_dict()}))

    crossover = next((n for n in (1, 2, 5) + big_n if est[(1, n)].upper < 0.0), None)
    checks.append(Check("crossover_N_for_K1", crossover is not None, {"first_negative_N": crossover}))
    return SuiteReport(checks, seed)
