"""Seeded Monte Carlo evaluation of power allocation policies.

Within a slot: observe the channel, choose power from the policy, accrue the
discounted reward, then the recharge arrives and the battery is capped.
Slot 0 uses the start state's channel; later channels are drawn i.i.d.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import Pmf, ProblemSpec, State
from .solver import InvalidPolicyError


@dataclass(frozen=True)
class TraceConfig:
    horizon: int
    n_traces: int
    seed: int
    start_state: State

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.n_traces < 1:
            raise ValueError("n_traces must be >= 1")
        object.__setattr__(self, "start_state", State(*self.start_state))


@dataclass(frozen=True)
class SimReport:
    estimate: float
    std_error: float
    truncation_bias_bound: float
    n_traces: int
    horizon: int
    seed: int
    start_state: State


def truncation_bias(spec: ProblemSpec, horizon: int) -> float:
    return spec.discount**horizon * spec.value_bound()


def horizon_for_bias(spec: ProblemSpec, bias: float) -> int:
    """Smallest horizon whose truncation bias bound is strictly below ``bias``."""
    bound = spec.value_bound()
    if bound < bias:
        return 1
    T = max(1, math.ceil(math.log(bias / bound) / math.log(spec.discount)))
    while truncation_bias(spec, T) >= bias:
        T += 1
    return T


def cdf_table(pmf: Pmf) -> np.ndarray:
    """Cumulative table for inverse-CDF sampling with ``u`` in (0, 1].

    The entry of the last positive-probability index (and everything after it)
    is forced to exactly 1 so rounding never sends a draw past the support.
    """
    probs = pmf.array
    cdf = np.cumsum(probs)
    last = int(np.flatnonzero(probs > 0)[-1])
    cdf[last:] = 1.0
    return cdf


def sample(cdf: np.ndarray, u: np.ndarray) -> np.ndarray:
    # smallest index with cdf >= u; a draw landing on a boundary goes to the lower index
    return np.searchsorted(cdf, u, side="left")


def _trace_uniforms(seed: int, n_traces: int, horizon: int) -> np.ndarray:
    """``(n_traces, horizon, 2)`` uniforms in (0, 1]; trace ``i`` uses stream (seed, i)."""
    out = np.empty((n_traces, horizon, 2))
    for i in range(n_traces):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(i,))))
        out[i] = 1.0 - rng.random((horizon, 2))
    return out


def sample_trajectories(spec: ProblemSpec, policy, config: TraceConfig):
    """Simulate all traces; returns ``(energy, channel_column, power)`` arrays of
    shape ``(n_traces, horizon)``.
    """
    start = config.start_state.validate(spec)
    policy = np.asarray(policy)
    if policy.shape != spec.shape:
        raise InvalidPolicyError(f"policy has shape {policy.shape}, expected {spec.shape}")
    n, T = config.n_traces, config.horizon
    u = _trace_uniforms(config.seed, n, T)
    channel_cdf = cdf_table(spec.channel_pmf)
    recharge_cdf = cdf_table(spec.recharge_pmf)
    cap = spec.battery_capacity

    energy = np.empty((n, T), dtype=np.int64)
    channel = np.empty((n, T), dtype=np.int64)
    power = np.empty((n, T), dtype=np.int64)
    e = np.full(n, start.energy, dtype=np.int64)
    for t in range(T):
        h = np.full(n, start.channel_index - 1) if t == 0 else sample(channel_cdf, u[:, t, 0])
        p = policy[e, h]
        bad = np.flatnonzero((p < 0) | (p > e))
        if bad.size:
            k = bad[0]
            raise InvalidPolicyError(
                f"infeasible power {int(p[k])} at visited state "
                f"(energy={int(e[k])}, channel_index={int(h[k]) + 1})"
            )
        energy[:, t], channel[:, t], power[:, t] = e, h, p
        x = sample(recharge_cdf, u[:, t, 1])
        e = np.minimum(e - p + x, cap)
    return energy, channel, power


def simulate_policy(spec: ProblemSpec, policy, config: TraceConfig) -> SimReport:
    """Mean discounted return over independent traces, with its standard error."""
    _, channel, power = sample_trajectories(spec, policy, config)
    rewards = spec.reward_table[channel, power]
    weights = spec.discount ** np.arange(config.horizon)
    returns = rewards @ weights
    n = config.n_traces
    # fixed summation order over trace index
    mean = math.fsum(returns) / n
    if n > 1:
        var = math.fsum((returns - mean) ** 2) / (n - 1)
        se = math.sqrt(var / n)
    else:
        se = 0.0
    return SimReport(
        estimate=mean,
        std_error=se,
        truncation_bias_bound=truncation_bias(spec, config.horizon),
        n_traces=n,
        horizon=config.horizon,
        seed=config.seed,
        start_state=config.start_state,
    )


BASELINES = ("spend-all", "zero", "fixed-fraction")


def baseline_policy(kind: str, spec: ProblemSpec, q: float | None = None) -> np.ndarray:
    """Simple comparison policies: spend everything, spend nothing, or spend
    ``floor(q * energy)``.
    """
    energy = np.arange(spec.battery_capacity + 1, dtype=np.int64)[:, None]
    ones = np.ones((1, spec.n_channels), dtype=np.int64)
    if kind == "spend-all":
        return energy * ones
    if kind == "zero":
        return np.zeros(spec.shape, dtype=np.int64)
    if kind == "fixed-fraction":
        if q is None or not 0 <= q <= 1:
            raise ValueError(f"fixed-fraction needs 0 <= q <= 1, got {q!r}")
        return np.floor(q * energy).astype(np.int64) * ones
    raise ValueError(f"unknown baseline {kind!r}; expected one of {BASELINES}")
