"""Problem definition for power allocation from an energy-harvesting battery.

A transmitter holds ``energy`` units in a battery of capacity ``battery_capacity``.
Each slot it observes the channel gain, spends ``power`` units (at most what is
stored) and earns ``log(1 + gain * power / noise)``.  At the end of the slot a
random recharge ``X`` arrives and the battery is capped at capacity.

Channel indices in the public API are 1-based (``1..N``); array columns are
0-based, so column ``j`` holds channel index ``j + 1``.
"""

from __future__ import annotations

import inspect
import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, NamedTuple, Sequence

import numpy as np

PMF_TOLERANCE = 1e-9

RewardFn = Callable[[float, float], float]


class InvalidSpecError(ValueError):
    """Raised when a problem instance violates one of its invariants.

    ``field`` names the offending input so config loaders can report it.
    """

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class InvalidActionError(ValueError):
    pass


class RewardPropertyError(ValueError):
    pass


@dataclass(frozen=True)
class Pmf:
    """Finite probability mass function stored as an immutable tuple."""

    probabilities: tuple[float, ...]

    def __post_init__(self):
        probs = tuple(float(p) for p in self.probabilities)
        object.__setattr__(self, "probabilities", probs)
        if not probs:
            raise InvalidSpecError("probabilities", "pmf must have at least one entry")
        for i, p in enumerate(probs):
            if not math.isfinite(p) or p < 0:
                raise InvalidSpecError("probabilities", f"entry {i} is {p!r}; must be finite and >= 0")
        total = math.fsum(probs)
        if abs(total - 1.0) > PMF_TOLERANCE:
            raise InvalidSpecError(
                "probabilities", f"entries sum to {total!r}; must equal 1 within {PMF_TOLERANCE:g}"
            )

    def __len__(self):
        return len(self.probabilities)

    def __getitem__(self, i):
        return self.probabilities[i]

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.probabilities, dtype=float)

    def mean(self, start: int = 0) -> float:
        """Mean of the distribution when entry ``i`` sits at value ``start + i``."""
        return math.fsum((start + i) * p for i, p in enumerate(self.probabilities))

    def tail(self, k: int) -> float:
        """P{X >= k} for a pmf supported on 0..len-1."""
        if k <= 0:
            return 1.0
        return math.fsum(self.probabilities[k:])


def log_reward(noise: float) -> RewardFn:
    """Shannon-capacity reward ``log(1 + h * P / noise)`` (natural log)."""

    def reward(channel_value, power):
        return np.log1p(np.multiply(channel_value, power) / noise)

    reward.__name__ = f"log_reward(noise={noise:g})"
    return reward


@dataclass(frozen=True)
class ProblemSpec:
    """One instance of the battery/channel power allocation MDP.

    ``reward_fn`` replaces the default log reward when given.  It must accept
    ``(channel_value, power)`` and broadcast over numpy arrays; it never sees
    the battery level.
    """

    battery_capacity: int
    recharge_pmf: Pmf
    channel_states: tuple[float, ...]
    channel_pmf: Pmf
    noise: float
    discount: float
    reward_fn: RewardFn | None = field(default=None, compare=False)

    def __post_init__(self):
        if not isinstance(self.recharge_pmf, Pmf):
            object.__setattr__(self, "recharge_pmf", Pmf(tuple(self.recharge_pmf)))
        if not isinstance(self.channel_pmf, Pmf):
            object.__setattr__(self, "channel_pmf", Pmf(tuple(self.channel_pmf)))
        object.__setattr__(self, "channel_states", tuple(float(e) for e in self.channel_states))

        cap = self.battery_capacity
        if isinstance(cap, bool) or int(cap) != cap or cap < 0:
            raise InvalidSpecError("battery_capacity", f"must be a non-negative integer, got {cap!r}")
        object.__setattr__(self, "battery_capacity", int(cap))

        states = self.channel_states
        if not states:
            raise InvalidSpecError("channel_states", "at least one channel state is required")
        if any(not math.isfinite(e) or e <= 0 for e in states):
            raise InvalidSpecError("channel_states", "all channel values must be finite and > 0")
        if any(b <= a for a, b in zip(states, states[1:])):
            raise InvalidSpecError("channel_states", "channel values must be strictly increasing")
        if len(self.channel_pmf) != len(states):
            raise InvalidSpecError(
                "channel_pmf",
                f"has {len(self.channel_pmf)} entries but there are {len(states)} channel states",
            )
        if not (math.isfinite(self.noise) and self.noise > 0):
            raise InvalidSpecError("noise", f"must be > 0, got {self.noise!r}")
        if not (0 < self.discount < 1):
            raise InvalidSpecError("discount", f"must lie in (0, 1), got {self.discount!r}")

        zero = [i + 1 for i, p in enumerate(self.channel_pmf.probabilities) if p == 0]
        if zero:
            warnings.warn(
                f"channel indices {zero} have zero probability; their states are unreachable",
                stacklevel=3,
            )

    @property
    def n_channels(self) -> int:
        return len(self.channel_states)

    @property
    def max_recharge(self) -> int:
        return len(self.recharge_pmf) - 1

    @property
    def shape(self) -> tuple[int, int]:
        """Shape of value/policy tables: (capacity + 1, number of channels)."""
        return (self.battery_capacity + 1, self.n_channels)

    @property
    def n_states(self) -> int:
        return (self.battery_capacity + 1) * self.n_channels

    @property
    def reward_function(self) -> RewardFn:
        return self.reward_fn if self.reward_fn is not None else log_reward(self.noise)

    @cached_property
    def reward_table(self) -> np.ndarray:
        """``table[j, P]`` = reward at channel column ``j`` with power ``P``."""
        h = np.asarray(self.channel_states)[:, None]
        p = np.arange(self.battery_capacity + 1, dtype=float)[None, :]
        table = np.asarray(self.reward_function(h, p), dtype=float)
        table = np.broadcast_to(table, (self.n_channels, self.battery_capacity + 1)).copy()
        if not np.all(np.isfinite(table)):
            raise InvalidSpecError("reward_fn", "reward is not finite on the state/action grid")
        table.flags.writeable = False
        return table

    @cached_property
    def energy_kernel(self) -> np.ndarray:
        """``kernel[y, n]`` = P{next energy = n | residual energy y = energy - power}."""
        cap = self.battery_capacity
        probs = self.recharge_pmf.array
        kernel = np.zeros((cap + 1, cap + 1))
        for y in range(cap + 1):
            for n in range(y, cap):
                k = n - y
                if k < len(probs):
                    kernel[y, n] = probs[k]
            kernel[y, cap] = self.recharge_pmf.tail(cap - y)
        kernel.flags.writeable = False
        return kernel

    @property
    def max_reward(self) -> float:
        return float(self.reward_table.max())

    def value_bound(self) -> float:
        """Upper bound ``R_max / (1 - discount)`` on any discounted return."""
        return self.max_reward / (1.0 - self.discount)

    def with_discount(self, discount: float) -> "ProblemSpec":
        return _replace(self, discount=discount)

    def with_recharge(self, recharge_pmf: Pmf) -> "ProblemSpec":
        return _replace(self, recharge_pmf=recharge_pmf)

    def with_reward(self, reward_fn: RewardFn | None) -> "ProblemSpec":
        return _replace(self, reward_fn=reward_fn)


def _replace(spec: ProblemSpec, **changes) -> ProblemSpec:
    import dataclasses

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return dataclasses.replace(spec, **changes)


class State(NamedTuple):
    energy: int
    channel_index: int

    def validate(self, spec: ProblemSpec) -> "State":
        if not 0 <= self.energy <= spec.battery_capacity:
            raise InvalidSpecError("energy", f"{self.energy} outside 0..{spec.battery_capacity}")
        if not 1 <= self.channel_index <= spec.n_channels:
            raise InvalidSpecError("channel_index", f"{self.channel_index} outside 1..{spec.n_channels}")
        return self


def reward(spec: ProblemSpec, channel_index: int, power: int) -> float:
    if not 1 <= channel_index <= spec.n_channels:
        raise InvalidActionError(f"channel index {channel_index} outside 1..{spec.n_channels}")
    if power < 0:
        raise InvalidActionError(f"power must be >= 0, got {power}")
    return float(spec.reward_function(spec.channel_states[channel_index - 1], power))


def next_energy(energy: int, power: int, recharge: int, capacity: int) -> int:
    """Battery update ``min(energy - power + recharge, capacity)``."""
    if power < 0 or power > energy:
        raise InvalidActionError(f"power {power} infeasible with {energy} units stored")
    if energy > capacity:
        raise InvalidActionError(f"energy {energy} exceeds capacity {capacity}")
    if recharge < 0:
        raise InvalidActionError(f"recharge must be >= 0, got {recharge}")
    return min(energy - power + recharge, capacity)


def transition_prob(spec: ProblemSpec, energy: int, power: int, next_energy_level: int) -> float:
    """Probability that the battery holds ``next_energy_level`` next slot.

    The channel component of the kernel is ``spec.channel_pmf`` regardless of
    state and action, so only the energy part is returned here.
    """
    cap = spec.battery_capacity
    if not 0 <= energy <= cap or power < 0 or power > energy:
        raise InvalidActionError(f"power {power} infeasible at energy {energy} (capacity {cap})")
    if not 0 <= next_energy_level <= cap:
        raise InvalidActionError(f"next energy {next_energy_level} outside 0..{cap}")
    residual = energy - power
    if next_energy_level == cap:
        return spec.recharge_pmf.tail(cap - residual)
    k = next_energy_level - residual
    if k < 0 or k > spec.max_recharge:
        return 0.0
    return spec.recharge_pmf[k]


@dataclass(frozen=True)
class RewardPropertyReport:
    """Outcome of the four structural conditions on a candidate reward.

    The conditions are: independence from the battery level, concavity in
    power, monotonicity in the channel value, and non-negative cross
    difference (increasing differences in power and channel value).  Each
    ``*_witness`` holds the first violating grid location, if any.
    """

    independent_of_energy: bool
    concave_in_power: bool
    increasing_in_channel: bool
    increasing_differences: bool
    concave_witness: tuple | None = None
    channel_witness: tuple | None = None
    cross_witness: tuple | None = None

    @property
    def passed(self) -> bool:
        return (
            self.independent_of_energy
            and self.concave_in_power
            and self.increasing_in_channel
            and self.increasing_differences
        )


def check_reward_properties(
    reward_fn: RewardFn,
    channel_grid: Sequence[float],
    power_grid: Sequence[int],
    tolerance: float = 1e-9,
) -> RewardPropertyReport:
    """Check a reward function on a grid with finite differences.

    Energy independence holds by construction: the reward is called with
    ``(channel_value, power)`` only, and callables that need more arguments
    are rejected with ``TypeError``.
    """
    h = np.asarray(channel_grid, dtype=float)
    p = np.asarray(power_grid, dtype=float)
    if h.size < 3 or p.size < 3:
        raise ValueError("channel and power grids need at least 3 points each")
    if np.any(np.diff(h) <= 0) or np.any(np.diff(p) <= 0):
        raise ValueError("grids must be strictly increasing")

    try:
        inspect.signature(reward_fn).bind(0.0, 0.0)
    except TypeError:
        raise TypeError("reward must be callable as reward(channel_value, power)") from None
    except ValueError:
        pass  # builtins without introspectable signatures
    independent = True

    r = np.empty((h.size, p.size))
    for i, hv in enumerate(h):
        for j, pv in enumerate(p):
            val = float(reward_fn(float(hv), float(pv)))
            if not math.isfinite(val):
                raise RewardPropertyError(f"reward is {val!r} at channel={hv:g}, power={pv:g}")
            r[i, j] = val

    # concavity in P: slopes between consecutive grid points are non-increasing
    slopes = np.diff(r, axis=1) / np.diff(p)[None, :]
    second = np.diff(slopes, axis=1)
    concave_witness = _first(second > tolerance, lambda i, j: (h[i], p[j], p[j + 1], p[j + 2], second[i, j]))

    dh = np.diff(r, axis=0)
    channel_witness = _first(dh < -tolerance, lambda i, j: (h[i], h[i + 1], p[j], dh[i, j]))

    cross = np.diff(dh, axis=1)
    cross_witness = _first(cross < -tolerance, lambda i, j: (h[i], h[i + 1], p[j], p[j + 1], cross[i, j]))

    return RewardPropertyReport(
        independent_of_energy=independent,
        concave_in_power=concave_witness is None,
        increasing_in_channel=channel_witness is None,
        increasing_differences=cross_witness is None,
        concave_witness=concave_witness,
        channel_witness=channel_witness,
        cross_witness=cross_witness,
    )


def _first(mask: np.ndarray, describe):
    hits = np.argwhere(mask)
    if hits.size == 0:
        return None
    i, j = (int(v) for v in hits[0])
    return tuple(float(v) for v in describe(i, j))
