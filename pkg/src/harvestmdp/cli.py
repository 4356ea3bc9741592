"""Command line front end.

    harvestmdp solve     --config cfg.json [--out DIR] [--epsilon E]
    harvestmdp verify    --config cfg.json [--random N --seed S | --self-test]
    harvestmdp figures   --config cfg.json
    harvestmdp simulate  --config cfg.json [--policy optimal|zero|spend-all|fixed-fraction:Q|table.csv]
    harvestmdp sweep     --config cfg.json

Exit codes: 0 success, 1 structural check failure, 2 invalid input,
3 solver did not converge.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, ExperimentConfig, build_named_pmf, fmt, load_config, read_table, write_table
from .model import InvalidSpecError, ProblemSpec, State
from .sim import TraceConfig, baseline_policy, horizon_for_bias, simulate_policy
from .solver import InvalidPolicyError, Solution, value_iteration
from .structure import (
    CHECK_NAMES,
    StructureReport,
    check_structure,
    randomized_structure_sweep,
    verify_solution,
)

log = logging.getLogger("harvestmdp")

EXIT_OK, EXIT_CHECK_FAILED, EXIT_INVALID, EXIT_NOT_CONVERGED = 0, 1, 2, 3

REWARD_NOTE = "reward: natural logarithm, log(1 + channel_value * power / noise)"


class NotConverged(RuntimeError):
    pass


def _out_dir(args, cfg: ExperimentConfig) -> Path:
    out = Path(args.out or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_lines(path: Path, lines) -> None:
    path.write_text("".join(f"{line}\n" for line in lines))


def _solve(cfg: ExperimentConfig, spec: ProblemSpec | None = None, epsilon: float | None = None) -> Solution:
    spec = spec or cfg.problem
    sol = value_iteration(spec, epsilon or cfg.epsilon, cfg.max_iterations)
    d = sol.diagnostics
    log.info("solved %d states in %d iterations (%.3fs)", spec.n_states, d.iterations, d.wall_time)
    return sol


def _require_converged(sol: Solution) -> None:
    if not sol.diagnostics.converged:
        raise NotConverged(
            f"value iteration stopped after {sol.diagnostics.iterations} iterations "
            f"(last change {sol.diagnostics.final_sup_norm_delta:.3g})"
        )


def diagnostics_lines(spec: ProblemSpec, sol: Solution) -> list[str]:
    d = sol.diagnostics
    return [
        f"status: {'converged' if d.converged else 'NOT CONVERGED (partial output)'}",
        f"iterations: {d.iterations}",
        f"final_sup_norm_delta: {fmt(d.final_sup_norm_delta)}",
        f"error_bound: {fmt(d.error_bound)}",
        f"epsilon: {fmt(d.epsilon)}",
        f"discount: {fmt(spec.discount)}",
        f"battery_capacity: {spec.battery_capacity}",
        f"channels: {spec.n_channels}",
        f"states: {spec.n_states}",
        REWARD_NOTE,
    ]


def cmd_solve(args, cfg: ExperimentConfig) -> int:
    out = _out_dir(args, cfg)
    spec = cfg.problem
    sol = _solve(cfg)
    prefix = "" if sol.diagnostics.converged else "partial_"
    write_table(out / f"{prefix}values.csv", spec, sol.values, "value")
    write_table(out / f"{prefix}policy.csv", spec, sol.policy, "policy")
    _write_lines(out / f"{prefix}diagnostics.txt", diagnostics_lines(spec, sol))
    if not sol.diagnostics.converged:
        log.error("value iteration did not converge; outputs written with 'partial_' prefix")
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def _describe(result) -> str:
    return "pass" if result else f"FAIL witness={result.witness}"


def structure_lines(report: StructureReport) -> list[str]:
    lines = [f"tolerance: {fmt(report.tolerance_used)}"]
    lines += [f"{name}: {_describe(res)}" for name, res in report.checks().items()]
    if report.largest_maximizer_monotone is not None:
        lines.append(f"largest_maximizer_policy_monotone (reported only): {_describe(report.largest_maximizer_monotone)}")
    lines.append(f"near_tie_states: {len(report.near_ties)}")
    lines += [f"  near_tie (energy={e}, channel_index={h})" for e, h in report.near_ties]
    lines.append(f"overall: {'pass' if report.passed else 'FAIL'}")
    return lines


def self_test_table(n_energy: int = 6, n_channels: int = 2) -> np.ndarray:
    """Hand-built value table that is monotone but convex in energy."""
    e = np.arange(n_energy, dtype=float)[:, None]
    return e**2 + np.arange(n_channels)[None, :]


def cmd_verify(args, cfg: ExperimentConfig) -> int:
    out = _out_dir(args, cfg)
    if args.self_test:
        J = self_test_table()
        policy = np.zeros(J.shape, dtype=np.int64)
        report = check_structure(J, policy, 1e-9)
        _write_lines(out / "self_test_report.txt", ["mode: self-test (injected convex table)"] + structure_lines(report))
        return EXIT_OK if report.passed else EXIT_CHECK_FAILED

    if args.random is not None:
        rnd = dict(cfg.sweep.get("random", {}))
        seed = args.seed if args.seed is not None else int(rnd.get("seed", 42))
        report = randomized_structure_sweep(
            seed,
            args.random,
            max_capacity=int(rnd.get("max_capacity", 20)),
            max_channels=int(rnd.get("max_channels", 8)),
            max_recharge=int(rnd.get("max_recharge", 25)),
            epsilon=args.epsilon or 1e-9,
            max_iterations=cfg.max_iterations,
        )
        lines = [f"mode: randomized sweep", f"seed: {seed}", f"instances: {report.n_instances}"]
        lines += [f"{name}: {report.check_counts[name]} passed" for name in CHECK_NAMES]
        lines.append(f"max_tolerance: {fmt(report.max_tolerance)}")
        lines.append(f"largest_maximizer_monotone_failures (reported only): {report.largest_maximizer_failures}")
        lines += [f"failure instance={i} check={name} witness={w}" for i, name, w in report.failures]
        lines += [f"error instance={i} {msg}" for i, msg in report.errors]
        lines.append(f"overall: {'pass' if report.passed else 'FAIL'}")
        _write_lines(out / "sweep_report.txt", lines)
        return EXIT_OK if report.passed else EXIT_CHECK_FAILED

    spec = cfg.problem
    sol = _solve(cfg)
    _require_converged(sol)
    report = verify_solution(spec, sol)
    _write_lines(out / "structure_report.txt", diagnostics_lines(spec, sol) + structure_lines(report))
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED


FIGURE_DEFAULTS = {
    "fig1_channels": [5, 15],
    "fig2_channels": [5, 10],
    "fig3_channel": 10,
    "fig3_recharge": ["decreasing", "increasing"],
    "fig4_channel": 15,
    "fig4_discounts": [0.5, 0.85, 0.9],
}


def _channel_column(spec: ProblemSpec, index, where: str) -> int:
    if isinstance(index, bool) or not isinstance(index, int) or not 1 <= index <= spec.n_channels:
        raise ConfigError(where, f"channel index {index!r} outside 1..{spec.n_channels}")
    return index - 1


def _write_series(path: Path, series: list[tuple[str, np.ndarray]], integer: bool) -> None:
    lines = ["energy,series,value"]
    for label, column in series:
        for e, v in enumerate(column):
            lines.append(f"{e},{label},{int(v) if integer else fmt(float(v))}")
    _write_lines(path, lines)


def figure_data(cfg: ExperimentConfig, epsilon: float | None = None) -> dict[str, list]:
    """Series for the four comparison plots, keyed by file stem.

    fig1: optimal power vs energy at two channels; fig2: optimal value vs
    energy at two channels; fig3: optimal power under two recharge pmfs;
    fig4: optimal power under several discounts.
    """
    opts = {**FIGURE_DEFAULTS, **cfg.figures}
    spec = cfg.problem
    base = _solve(cfg, epsilon=epsilon)
    _require_converged(base)

    fig1 = [(f"h={h}", base.policy[:, _channel_column(spec, h, "figures.fig1_channels")]) for h in opts["fig1_channels"]]
    fig2 = [(f"h={h}", base.values[:, _channel_column(spec, h, "figures.fig2_channels")]) for h in opts["fig2_channels"]]

    col3 = _channel_column(spec, opts["fig3_channel"], "figures.fig3_channel")
    fig3 = []
    for name in opts["fig3_recharge"]:
        try:
            pmf = build_named_pmf(name, len(spec.recharge_pmf))
        except ValueError as exc:
            raise ConfigError("figures.fig3_recharge", str(exc)) from None
        sol = _solve(cfg, spec.with_recharge(pmf), epsilon)
        _require_converged(sol)
        fig3.append((f"recharge={name}", sol.policy[:, col3]))

    col4 = _channel_column(spec, opts["fig4_channel"], "figures.fig4_channel")
    fig4 = []
    for lam in opts["fig4_discounts"]:
        try:
            s = spec.with_discount(float(lam))
        except InvalidSpecError as exc:
            raise ConfigError("figures.fig4_discounts", str(exc)) from None
        sol = _solve(cfg, s, epsilon)
        _require_converged(sol)
        fig4.append((f"lambda={fmt(float(lam))}", sol.policy[:, col4]))
    return {"fig1_policy": fig1, "fig2_value": fig2, "fig3_recharge": fig3, "fig4_discount": fig4}


def cmd_figures(args, cfg: ExperimentConfig) -> int:
    out = _out_dir(args, cfg)
    data = figure_data(cfg, args.epsilon)
    for stem, series in data.items():
        _write_series(out / f"{stem}.csv", series, integer=stem != "fig2_value")
    return EXIT_OK


def resolve_policy(source: str, spec: ProblemSpec, cfg: ExperimentConfig, optimal: Solution | None):
    if source == "optimal":
        return optimal.policy
    if source in ("zero", "spend-all"):
        return baseline_policy(source, spec)
    if source.startswith("fixed-fraction"):
        _, _, q = source.partition(":")
        try:
            return baseline_policy("fixed-fraction", spec, float(q))
        except ValueError as exc:
            raise ConfigError("--policy", str(exc)) from None
    path = Path(source)
    if not path.exists():
        raise ConfigError("--policy", f"{source!r} is neither a policy name nor an existing CSV file")
    return read_table(path, spec, "policy")


def cmd_simulate(args, cfg: ExperimentConfig) -> int:
    out = _out_dir(args, cfg)
    spec = cfg.problem
    sim = cfg.simulation
    start = args.start or sim.get("start_state") or [spec.battery_capacity, spec.n_channels]
    try:
        start = State(*(int(v) for v in start)).validate(spec)
    except (TypeError, InvalidSpecError) as exc:
        raise ConfigError("simulation.start_state", str(exc)) from None
    bias = float(sim.get("bias", 0.01))
    horizon = args.horizon or sim.get("horizon") or horizon_for_bias(spec, bias)
    n_traces = args.traces or int(sim.get("n_traces", 10_000))
    seed = args.seed if args.seed is not None else int(sim.get("seed", 0))
    source = args.policy or sim.get("policy", "optimal")

    optimal = None
    if source == "optimal":
        optimal = _solve(cfg)
        _require_converged(optimal)
    policy = resolve_policy(source, spec, cfg, optimal)
    try:
        config = TraceConfig(horizon=int(horizon), n_traces=int(n_traces), seed=seed, start_state=start)
    except ValueError as exc:
        raise ConfigError("simulation", str(exc)) from None
    report = simulate_policy(spec, policy, config)

    lines = [
        f"policy: {source}",
        f"start_state: energy={start.energy} channel_index={start.channel_index}",
        f"estimate: {fmt(report.estimate)}",
        f"std_error: {fmt(report.std_error)}",
        f"truncation_bias_bound: {fmt(report.truncation_bias_bound)}",
        f"n_traces: {report.n_traces}",
        f"horizon: {report.horizon}",
        f"seed: {report.seed}",
        REWARD_NOTE,
    ]
    if optimal is not None:
        target = float(optimal.values[start.energy, start.channel_index - 1])
        gap = abs(report.estimate - target)
        threshold = 3 * report.std_error + report.truncation_bias_bound
        lines += [
            f"optimal_value: {fmt(target)}",
            f"gap: {fmt(gap)}",
            f"threshold: {fmt(threshold)}",
            f"within_threshold: {'yes' if gap <= threshold else 'no'}",
        ]
        print(f"gap |estimate - J*(start)| = {gap:.6g}, threshold 3*SE + bias = {threshold:.6g}")
    _write_lines(out / "simulation_report.txt", lines)
    return EXIT_OK


def cmd_sweep(args, cfg: ExperimentConfig) -> int:
    """Solve over the configured discount values and recharge pmfs."""
    out = _out_dir(args, cfg)
    spec = cfg.problem
    points = []
    for lam in cfg.sweep.get("discounts", []):
        try:
            points.append((f"discount={fmt(float(lam))}", spec.with_discount(float(lam))))
        except (InvalidSpecError, TypeError, ValueError) as exc:
            raise ConfigError("sweep.discounts", str(exc)) from None
    for name in cfg.sweep.get("recharge_pmfs", []):
        try:
            points.append((f"recharge={name}", spec.with_recharge(build_named_pmf(name, len(spec.recharge_pmf)))))
        except ValueError as exc:
            raise ConfigError("sweep.recharge_pmfs", str(exc)) from None
    if not points:
        raise ConfigError("sweep", "needs 'discounts' and/or 'recharge_pmfs'")

    rows = ["point,energy,channel_index,channel_value,value,power"]
    summary = []
    status = EXIT_OK
    for label, s in points:
        sol = _solve(cfg, s, args.epsilon)
        if not sol.diagnostics.converged:
            status = EXIT_NOT_CONVERGED
            summary.append(f"{label}: NOT CONVERGED")
            continue
        report = verify_solution(s, sol)
        if not report.passed and status == EXIT_OK:
            status = EXIT_CHECK_FAILED
        summary.append(f"{label}: structure {'pass' if report.passed else 'FAIL'} iterations={sol.diagnostics.iterations}")
        for e in range(s.battery_capacity + 1):
            for j, hv in enumerate(s.channel_states):
                rows.append(f"{label},{e},{j + 1},{fmt(hv)},{fmt(float(sol.values[e, j]))},{int(sol.policy[e, j])}")
    _write_lines(out / "sweep.csv", rows)
    _write_lines(out / "sweep_summary.txt", summary)
    return status


COMMANDS = {
    "solve": cmd_solve,
    "verify": cmd_verify,
    "figures": cmd_figures,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="harvestmdp", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON experiment config")
        p.add_argument("--out", help="output directory (default: config output_dir)")
        p.add_argument("--seed", type=int)
        p.add_argument("--epsilon", type=float, help="solver accuracy (sup-norm distance to optimum)")
        p.add_argument("--traces", type=int)
        p.add_argument("--horizon", type=int)
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "verify":
            p.add_argument("--random", type=int, metavar="N", help="randomized sweep over N instances")
            p.add_argument("--self-test", action="store_true", help="check an injected non-concave table")
        if name == "simulate":
            p.add_argument("--policy", help="optimal, zero, spend-all, fixed-fraction:Q, or a policy CSV")
            p.add_argument("--start", type=int, nargs=2, metavar=("ENERGY", "CHANNEL_INDEX"))
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        if args.epsilon is not None and args.epsilon <= 0:
            raise ConfigError("--epsilon", "must be > 0")
        if args.epsilon is not None:
            cfg.epsilon = args.epsilon
        return COMMANDS[args.command](args, cfg)
    except (ConfigError, InvalidSpecError, InvalidPolicyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NotConverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED


if __name__ == "__main__":
    sys.exit(main())
