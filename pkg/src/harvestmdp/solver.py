"""Value iteration for the battery MDP, plus exact policy evaluation and a
brute-force oracle over all stationary deterministic policies.

Value and policy tables are numpy arrays of shape ``spec.shape``, indexed
``[energy, channel_column]``.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .model import ProblemSpec

TIE_RTOL = 1e-9
DENSE_LIMIT = 2000
BRUTE_FORCE_LIMIT = 10**6


class InvalidPolicyError(ValueError):
    pass


class InstanceTooLargeError(ValueError):
    def __init__(self, n_policies: int, limit: int):
        super().__init__(f"instance has {n_policies:,} stationary policies; limit is {limit:,}")
        self.n_policies = n_policies
        self.limit = limit


@dataclass(frozen=True)
class SolveDiagnostics:
    iterations: int
    final_sup_norm_delta: float
    error_bound: float
    wall_time: float
    converged: bool
    discount: float
    epsilon: float


class Solution(NamedTuple):
    values: np.ndarray
    policy: np.ndarray
    diagnostics: SolveDiagnostics


def _check_values(spec: ProblemSpec, J) -> np.ndarray:
    J = np.asarray(J, dtype=float)
    if J.shape != spec.shape:
        raise ValueError(f"value table has shape {J.shape}, expected {spec.shape}")
    if not np.all(np.isfinite(J)):
        raise ValueError("value table has non-finite entries")
    return J


def continuation(spec: ProblemSpec, J: np.ndarray) -> np.ndarray:
    """Expected next-slot value ``C[y]`` for residual energy ``y = energy - power``.

    The channel is i.i.d., so the next-state value is first averaged over the
    channel pmf and then pushed through the energy kernel.
    """
    channel_avg = J @ spec.channel_pmf.array
    return spec.energy_kernel @ channel_avg


def action_values(spec: ProblemSpec, J) -> np.ndarray:
    """``Q[energy, column, power]``; infeasible powers (power > energy) are -inf."""
    J = _check_values(spec, J)
    cap = spec.battery_capacity
    cont = continuation(spec, J)
    energy = np.arange(cap + 1)[:, None]
    power = np.arange(cap + 1)[None, :]
    residual = energy - power
    feasible = residual >= 0
    future = np.where(feasible, spec.discount * cont[np.clip(residual, 0, cap)], -np.inf)
    # Q = r(h, P) + discount * C(energy - P)
    return spec.reward_table[None, :, :] + future[:, None, :]


def greedy(Q: np.ndarray, largest: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Max over the last axis with a relative tie window.

    Ties (within ``TIE_RTOL * (1 + |max|)``) resolve to the smallest power, or
    the largest one when ``largest`` is set.
    """
    best = Q.max(axis=-1)
    tied = Q >= (best - TIE_RTOL * (1.0 + np.abs(best)))[..., None]
    if largest:
        idx = Q.shape[-1] - 1 - np.argmax(tied[..., ::-1], axis=-1)
    else:
        idx = np.argmax(tied, axis=-1)
    return best, idx.astype(np.int64)


def bellman_backup(spec: ProblemSpec, J) -> tuple[np.ndarray, np.ndarray]:
    """One application of the Bellman operator; returns (new values, greedy policy)."""
    return greedy(action_values(spec, J))


def value_iteration(
    spec: ProblemSpec, epsilon: float = 1e-6, max_iterations: int = 100_000
) -> Solution:
    """Iterate the backup from ``J0 = 0`` until the returned table is within
    ``epsilon`` of the optimum in sup-norm.

    Stops once successive iterates differ by at most
    ``epsilon * (1 - discount) / (2 * discount)``.  If ``max_iterations`` runs
    out first, the last iterate is returned with ``converged=False``.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be > 0")
    if max_iterations < 1:
        raise ValueError("max_iterations must be >= 1")
    lam = spec.discount
    threshold = epsilon * (1 - lam) / (2 * lam)
    start = time.perf_counter()
    J = np.zeros(spec.shape)
    converged = False
    delta = math.inf
    it = 0
    while it < max_iterations:
        J_new, policy = bellman_backup(spec, J)
        it += 1
        delta = float(np.max(np.abs(J_new - J)))
        J = J_new
        if delta <= threshold:
            converged = True
            break
    diag = SolveDiagnostics(
        iterations=it,
        final_sup_norm_delta=delta,
        error_bound=lam * delta / (1 - lam),
        wall_time=time.perf_counter() - start,
        converged=converged,
        discount=lam,
        epsilon=epsilon,
    )
    return Solution(J, policy, diag)


def check_policy(spec: ProblemSpec, policy) -> np.ndarray:
    policy = np.asarray(policy)
    if policy.shape != spec.shape:
        raise InvalidPolicyError(f"policy has shape {policy.shape}, expected {spec.shape}")
    if not np.issubdtype(policy.dtype, np.integer):
        if not np.all(policy == np.round(policy)):
            raise InvalidPolicyError("policy entries must be integers")
        policy = policy.astype(np.int64)
    energy = np.arange(spec.battery_capacity + 1)[:, None]
    bad = np.argwhere((policy < 0) | (policy > energy))
    if bad.size:
        e, j = (int(v) for v in bad[0])
        raise InvalidPolicyError(
            f"infeasible power {int(policy[e, j])} at state (energy={e}, channel_index={j + 1})"
        )
    return policy


def policy_system(spec: ProblemSpec, policy: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Reward vector and transition matrix of the chain induced by ``policy``.

    States are flattened row-major: ``s = energy * N + column``.  Leading
    batch dimensions on ``policy`` are carried through.
    """
    energy = np.arange(spec.battery_capacity + 1)[:, None]
    columns = np.arange(spec.n_channels)[None, :]
    residual = energy - policy
    r = spec.reward_table[columns, policy]
    P = spec.energy_kernel[residual][..., None] * spec.channel_pmf.array
    lead = policy.shape[:-2]
    n = spec.n_states
    return r.reshape(*lead, n), P.reshape(*lead, n, n)


def evaluate_policy(spec: ProblemSpec, policy, tol: float = 1e-12) -> np.ndarray:
    """Exact discounted value of a stationary policy: solve ``V = r + lam P V``."""
    policy = check_policy(spec, policy)
    r, P = policy_system(spec, policy)
    lam = spec.discount
    if spec.n_states <= DENSE_LIMIT:
        V = np.linalg.solve(np.eye(r.size) - lam * P, r)
    else:
        V = np.zeros_like(r)
        while True:
            V_new = r + lam * (P @ V)
            done = np.max(np.abs(V_new - V)) <= tol
            V = V_new
            if done:
                break
    return V.reshape(spec.shape)


def count_policies(spec: ProblemSpec) -> int:
    return math.prod((e + 1) ** spec.n_channels for e in range(spec.battery_capacity + 1))


def brute_force_optimal(
    spec: ProblemSpec, limit: int = BRUTE_FORCE_LIMIT, batch: int = 4096
) -> tuple[np.ndarray, np.ndarray]:
    """Enumerate every feasible stationary deterministic policy and keep the best.

    Returns the pointwise maximum of all policy values together with a policy
    attaining it.  Raises ``RuntimeError`` if no single policy attains the
    pointwise maximum, which would contradict standard MDP theory.
    """
    total = count_policies(spec)
    if total > limit:
        raise InstanceTooLargeError(total, limit)

    shape = spec.shape
    lam = spec.discount
    eye = np.eye(spec.n_states)
    choices = [range(e + 1) for e in range(shape[0]) for _ in range(shape[1])]

    def batches():
        it = itertools.product(*choices)
        while chunk := list(itertools.islice(it, batch)):
            pols = np.asarray(chunk, dtype=np.int64).reshape(len(chunk), *shape)
            R, P = policy_system(spec, pols)
            yield pols, np.linalg.solve(eye - lam * P, R[..., None])[..., 0]

    best = np.full(spec.n_states, -np.inf)
    for _, V in batches():
        best = np.maximum(best, V.max(axis=0))

    # second pass: some single policy must attain the pointwise maximum
    tol = 1e-9 * (1 + np.abs(best).max())
    closest = np.inf
    for pols, V in batches():
        shortfall = (best[None, :] - V).max(axis=1)
        k = int(np.argmin(shortfall))
        closest = min(closest, float(shortfall[k]))
        if shortfall[k] <= tol:
            return best.reshape(shape), pols[k]
    raise RuntimeError(f"no single policy attains the pointwise maximum (closest misses by {closest:.3g})")
