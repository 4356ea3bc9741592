"""Numerical checks of the structural properties of solved instances.

On any instance the optimal value should be non-decreasing in battery level
and channel gain, concave in battery level (hence submodular along each
channel), and the optimal power should be non-decreasing in both state
coordinates.  Each check returns a :class:`CheckResult` whose ``witness``
pins down the first violation found.

States in witnesses are ``(energy, channel_index)`` with 1-based channel
indices, matching the rest of the public API.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import Pmf, ProblemSpec
from .solver import Solution, action_values, greedy, value_iteration

CHECK_NAMES = (
    "value_monotone_channel",
    "value_monotone_energy",
    "value_concave_energy",
    "value_submodular",
    "policy_monotone_channel",
    "policy_monotone_energy",
)

TOLERANCE_FACTOR = 100.0


@dataclass(frozen=True)
class CheckResult:
    passed: bool
    witness: tuple | None = None

    def __bool__(self):
        return self.passed


PASS = CheckResult(True)


def _state(e, j):
    return (int(e), int(j) + 1)


def _monotone_along(table: np.ndarray, axis: int, tolerance: float) -> CheckResult:
    table = np.asarray(table)
    diff = np.diff(table, axis=axis)
    hits = np.argwhere(diff < -tolerance)
    if hits.size == 0:
        return PASS
    e, j = (int(v) for v in hits[0])
    lo = (e, j)
    hi = (e + 1, j) if axis == 0 else (e, j + 1)
    return CheckResult(False, (_state(*lo), _state(*hi), table[lo].item(), table[hi].item()))


def check_monotone_value(J, tolerance: float = 0.0, axis: str = "both") -> CheckResult:
    """Non-decreasing in channel (``axis='channel'``), energy, or both.

    Adjacent pairs suffice: a violation between any ordered pair implies one
    between some adjacent pair.
    """
    if axis not in ("channel", "energy", "both"):
        raise ValueError(f"unknown axis {axis!r}")
    J = np.asarray(J, dtype=float)
    if axis in ("channel", "both"):
        res = _monotone_along(J, 1, tolerance)
        if not res:
            return res
    if axis in ("energy", "both"):
        return _monotone_along(J, 0, tolerance)
    return PASS


def check_concave_value(J, tolerance: float = 0.0) -> CheckResult:
    """Discrete concavity in energy per channel: increments are non-increasing.

    Witness is ``((e, h), (e+1, h), (e+2, h), increment_before, increment_after)``.
    """
    J = np.asarray(J, dtype=float)
    if J.shape[0] < 3:
        return PASS
    inc = np.diff(J, axis=0)
    second = np.diff(inc, axis=0)
    hits = np.argwhere(second > tolerance)
    if hits.size == 0:
        return PASS
    e, j = (int(v) for v in hits[0])
    return CheckResult(
        False,
        (_state(e, j), _state(e + 1, j), _state(e + 2, j), float(inc[e, j]), float(inc[e + 1, j])),
    )


def check_submodularity(J, tolerance: float = 0.0) -> CheckResult:
    """``J(x) + J(y) <= J(w) + J(z)`` for ``x <= w <= z <= y`` with ``x + y = w + z``.

    Every such quadruple is ``(x, x + d, y - d, y)`` with ``0 <= d <= (y - x) / 2``,
    so only those are enumerated.  Witness: ``(channel_index, (x, w, z, y),
    J(x) + J(y), J(w) + J(z))``.
    """
    J = np.asarray(J, dtype=float)
    m = J.shape[0]
    quads = [
        (x, x + d, y - d, y)
        for x in range(m)
        for y in range(x, m)
        for d in range((y - x) // 2 + 1)
    ]
    if not quads:
        return PASS
    x, w, z, y = np.asarray(quads).T
    outer = J[x] + J[y]
    inner = J[w] + J[z]
    hits = np.argwhere(outer - inner > tolerance)
    if hits.size == 0:
        return PASS
    q, j = (int(v) for v in hits[0])
    return CheckResult(False, (j + 1, tuple(int(v) for v in quads[q]), float(outer[q, j]), float(inner[q, j])))


def check_monotone_policy(policy, axis: str = "both") -> CheckResult:
    """Exact integer check that power is non-decreasing in channel and energy."""
    if axis not in ("channel", "energy", "both"):
        raise ValueError(f"unknown axis {axis!r}")
    policy = np.asarray(policy, dtype=np.int64)
    if axis in ("channel", "both"):
        res = _monotone_along(policy, 1, 0)
        if not res or axis == "channel":
            return res
    return _monotone_along(policy, 0, 0)


def near_ties(spec: ProblemSpec, J, window: float) -> list[tuple[int, int]]:
    """States whose two best distinct powers score within ``window`` of each other.

    These are the states where a solver-sized perturbation of the values could
    change the selected power.
    """
    Q = action_values(spec, J)
    best, chosen = greedy(Q)
    Q = Q.copy()
    np.put_along_axis(Q, chosen[..., None], -np.inf, axis=-1)
    runner_up = Q.max(axis=-1)
    flagged = np.argwhere(best - runner_up <= window)
    return [_state(e, j) for e, j in flagged]


@dataclass
class StructureReport:
    value_monotone_channel: CheckResult
    value_monotone_energy: CheckResult
    value_concave_energy: CheckResult
    value_submodular: CheckResult
    policy_monotone_channel: CheckResult
    policy_monotone_energy: CheckResult
    tolerance_used: float
    near_ties: list = field(default_factory=list)
    # reported only; largest-maximizer selection is not asserted
    largest_maximizer_monotone: CheckResult | None = None

    def checks(self) -> dict[str, CheckResult]:
        return {name: getattr(self, name) for name in CHECK_NAMES}

    @property
    def passed(self) -> bool:
        return all(self.checks().values())

    def failures(self) -> dict[str, tuple]:
        return {k: v.witness for k, v in self.checks().items() if not v}


def check_structure(J, policy, tolerance: float) -> StructureReport:
    return StructureReport(
        value_monotone_channel=check_monotone_value(J, tolerance, "channel"),
        value_monotone_energy=check_monotone_value(J, tolerance, "energy"),
        value_concave_energy=check_concave_value(J, tolerance),
        value_submodular=check_submodularity(J, tolerance),
        policy_monotone_channel=check_monotone_policy(policy, "channel"),
        policy_monotone_energy=check_monotone_policy(policy, "energy"),
        tolerance_used=tolerance,
    )


def verify_solution(spec: ProblemSpec, solution: Solution) -> StructureReport:
    """Run every structural check on a value-iteration result.

    Value checks use 100x the solver's guaranteed error bound as tolerance.
    Near-ties are flagged where the top two powers are closer than twice that
    bound.
    """
    J, policy, diag = solution
    tolerance = TOLERANCE_FACTOR * diag.error_bound
    report = check_structure(J, policy, tolerance)
    report.near_ties = near_ties(spec, J, 2 * diag.error_bound)
    _, largest = greedy(action_values(spec, J), largest=True)
    report.largest_maximizer_monotone = check_monotone_policy(largest)
    return report


def verify_spec(spec: ProblemSpec, epsilon: float = 1e-9, max_iterations: int = 100_000):
    solution = value_iteration(spec, epsilon, max_iterations)
    return solution, verify_solution(spec, solution)


@dataclass
class SweepReport:
    seed: int
    n_instances: int
    check_counts: dict = field(default_factory=lambda: {name: 0 for name in CHECK_NAMES})
    failures: list = field(default_factory=list)  # (instance, check, witness)
    errors: list = field(default_factory=list)  # (instance, message)
    largest_maximizer_failures: int = 0
    max_tolerance: float = 0.0

    @property
    def passed(self) -> bool:
        return not self.failures and not self.errors


def random_spec(rng: np.random.Generator, max_capacity=20, max_channels=8, max_recharge=25) -> ProblemSpec:
    """Random instance: pmfs uniform on the simplex, discount uniform in [0.1, 0.95]."""
    cap = int(rng.integers(1, max_capacity + 1))
    n = int(rng.integers(1, max_channels + 1))
    a = int(rng.integers(0, max_recharge + 1))
    channels = np.cumsum(rng.uniform(0.1, 5.0, n))
    return ProblemSpec(
        battery_capacity=cap,
        recharge_pmf=Pmf(tuple(rng.dirichlet(np.ones(a + 1)))),
        channel_states=tuple(channels),
        channel_pmf=Pmf(tuple(rng.dirichlet(np.ones(n)))),
        noise=float(rng.uniform(0.5, 20.0)),
        discount=float(rng.uniform(0.1, 0.95)),
    )


def randomized_structure_sweep(
    seed: int,
    n_instances: int,
    max_capacity: int = 20,
    max_channels: int = 8,
    max_recharge: int = 25,
    epsilon: float = 1e-9,
    max_iterations: int = 100_000,
) -> SweepReport:
    """Solve ``n_instances`` random instances and run every structural check.

    Instance ``i`` is drawn from its own child seed of ``seed``, so results
    are reproducible and do not depend on ``n_instances``.
    """
    report = SweepReport(seed=seed, n_instances=n_instances)
    children = np.random.SeedSequence(seed).spawn(n_instances)
    for i, child in enumerate(children):
        rng = np.random.default_rng(child)
        try:
            spec = random_spec(rng, max_capacity, max_channels, max_recharge)
            solution, structure = verify_spec(spec, epsilon, max_iterations)
        except Exception as exc:  # recorded per instance; the sweep continues
            report.errors.append((i, f"{type(exc).__name__}: {exc}"))
            continue
        if not solution.diagnostics.converged:
            report.errors.append((i, f"not converged after {solution.diagnostics.iterations} iterations"))
            continue
        report.max_tolerance = max(report.max_tolerance, structure.tolerance_used)
        for name, res in structure.checks().items():
            if res:
                report.check_counts[name] += 1
            else:
                report.failures.append((i, name, res.witness))
        if not structure.largest_maximizer_monotone:
            report.largest_maximizer_failures += 1
    return report
