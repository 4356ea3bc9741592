"""JSON experiment configs, named distribution builders and CSV table I/O."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from math import comb
from pathlib import Path

import numpy as np

from .model import InvalidSpecError, Pmf, ProblemSpec

PMF_NAMES = ("decreasing", "increasing", "bell", "uniform", "explicit")


class ConfigError(ValueError):
    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


def build_named_pmf(name: str, size: int, params: dict | None = None) -> Pmf:
    """Canonical distributions over ``size`` consecutive support points.

    decreasing: ``p_i ∝ size - i``; increasing: ``p_i ∝ i + 1``; bell:
    Binomial(size - 1, 1/2); uniform: ``1/size``; explicit: ``params["probabilities"]``.
    A recharge pmf on ``{0..a}`` has ``size = a + 1``.
    """
    params = params or {}
    if name == "explicit":
        probs = params.get("probabilities")
        if probs is None:
            raise ValueError("explicit pmf needs params['probabilities']")
        if size is not None and len(probs) != size:
            raise ValueError(f"explicit pmf has {len(probs)} entries, expected {size}")
        return Pmf(tuple(probs))
    if int(size) != size or size < 1:
        raise ValueError(f"pmf size must be a positive integer, got {size!r}")
    size = int(size)
    if name == "decreasing":
        w = np.arange(size, 0, -1, dtype=float)
    elif name == "increasing":
        w = np.arange(1, size + 1, dtype=float)
    elif name == "bell":
        w = np.array([comb(size - 1, k) for k in range(size)], dtype=float)
    elif name == "uniform":
        w = np.ones(size)
    else:
        raise ValueError(f"unknown pmf {name!r}; expected one of {PMF_NAMES}")
    return Pmf(tuple(w / w.sum()))


@dataclass
class ExperimentConfig:
    problem: ProblemSpec
    epsilon: float = 1e-6
    max_iterations: int = 100_000
    simulation: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=dict)
    figures: dict = field(default_factory=dict)
    output_dir: str = "results"
    recharge_name: str = "explicit"


def _pmf_from(entry, size: int, where: str) -> tuple[Pmf, str]:
    try:
        if isinstance(entry, list):
            return build_named_pmf("explicit", size, {"probabilities": entry}), "explicit"
        if isinstance(entry, str):
            return build_named_pmf(entry, size), entry
        if isinstance(entry, dict):
            kind = entry.get("kind")
            if kind is None:
                raise ConfigError(where, "missing 'kind'")
            return build_named_pmf(kind, size, entry), kind
    except InvalidSpecError as exc:
        raise ConfigError(where, str(exc)) from None
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(where, str(exc)) from None
    raise ConfigError(where, "must be a list of probabilities, a name, or an object with 'kind'")


def _require(d: dict, key: str, where: str):
    if key not in d:
        raise ConfigError(f"{where}.{key}", "required field is missing")
    return d[key]


def _number(value, where: str, integer: bool = False):
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ConfigError(where, f"must be a finite number, got {value!r}")
    if integer and int(value) != value:
        raise ConfigError(where, f"must be an integer, got {value!r}")
    return int(value) if integer else float(value)


def recharge_size(problem: dict) -> int:
    entry = problem.get("recharge_pmf")
    if isinstance(entry, dict) and "max" in entry:
        return _number(entry["max"], "problem.recharge_pmf.max", integer=True) + 1
    if isinstance(entry, dict) and "probabilities" in entry:
        return len(entry["probabilities"])
    if isinstance(entry, list):
        return len(entry)
    if "max_recharge" in problem:
        return _number(problem["max_recharge"], "problem.max_recharge", integer=True) + 1
    raise ConfigError("problem.recharge_pmf", "named pmf needs 'max' (largest recharge amount)")


def parse_problem(problem: dict) -> tuple[ProblemSpec, str]:
    where = "problem"
    if not isinstance(problem, dict):
        raise ConfigError(where, "must be an object")
    cap = _number(_require(problem, "battery_capacity", where), "problem.battery_capacity", integer=True)

    states = _require(problem, "channel_states", where)
    if isinstance(states, dict):
        lo = _number(_require(states, "start", "problem.channel_states"), "problem.channel_states.start")
        hi = _number(_require(states, "stop", "problem.channel_states"), "problem.channel_states.stop")
        step = _number(states.get("step", 1), "problem.channel_states.step")
        states = list(np.arange(lo, hi + step / 2, step))
    if not isinstance(states, list) or not states:
        raise ConfigError("problem.channel_states", "must be a non-empty list of positive numbers")
    states = [_number(v, f"problem.channel_states[{i}]") for i, v in enumerate(states)]

    size = recharge_size(problem)
    if size < 1:
        raise ConfigError("problem.recharge_pmf", "support must contain at least one point")
    recharge, recharge_name = _pmf_from(_require(problem, "recharge_pmf", where), size, "problem.recharge_pmf")
    channel, _ = _pmf_from(_require(problem, "channel_pmf", where), len(states), "problem.channel_pmf")
    noise = _number(_require(problem, "noise", where), "problem.noise")
    discount = _number(_require(problem, "discount", where), "problem.discount")
    try:
        spec = ProblemSpec(cap, recharge, tuple(states), channel, noise, discount)
    except InvalidSpecError as exc:
        raise ConfigError(f"problem.{exc.field}", str(exc).split(": ", 1)[-1]) from None
    return spec, recharge_name


def parse_config(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    spec, recharge_name = parse_problem(_require(data, "problem", "<root>"))
    solver = data.get("solver", {})
    eps = _number(solver.get("epsilon", 1e-6), "solver.epsilon")
    if eps <= 0:
        raise ConfigError("solver.epsilon", "must be > 0")
    iters = _number(solver.get("max_iterations", 100_000), "solver.max_iterations", integer=True)
    if iters < 1:
        raise ConfigError("solver.max_iterations", "must be >= 1")
    for key in ("simulation", "sweep", "figures"):
        if not isinstance(data.get(key, {}), dict):
            raise ConfigError(key, "must be an object")
    return ExperimentConfig(
        problem=spec,
        epsilon=eps,
        max_iterations=iters,
        simulation=data.get("simulation", {}),
        sweep=data.get("sweep", {}),
        figures=data.get("figures", {}),
        output_dir=str(data.get("output_dir", "results")),
        recharge_name=recharge_name,
    )


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("--config", f"cannot read {path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("--config", f"invalid JSON: {exc}") from None
    return parse_config(data)


def fmt(x) -> str:
    return f"{x:.12g}"


VALUE_HEADER = ("energy", "channel_index", "channel_value", "value")
POLICY_HEADER = ("energy", "channel_index", "channel_value", "power")


def write_table(path, spec: ProblemSpec, table, kind: str = "value") -> None:
    """Write a value or policy table as CSV, rows ordered by (energy, channel_index)."""
    table = np.asarray(table)
    header = VALUE_HEADER if kind == "value" else POLICY_HEADER
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for e in range(table.shape[0]):
            for j, hv in enumerate(spec.channel_states):
                cell = fmt(float(table[e, j])) if kind == "value" else str(int(table[e, j]))
                w.writerow((e, j + 1, fmt(hv), cell))


def read_table(path, spec: ProblemSpec, kind: str = "value") -> np.ndarray:
    """Load a table written by :func:`write_table`, checking it fits ``spec``."""
    header = VALUE_HEADER if kind == "value" else POLICY_HEADER
    out = np.zeros(spec.shape, dtype=float if kind == "value" else np.int64)
    seen = np.zeros(spec.shape, dtype=bool)
    with open(path, newline="") as fh:
        rows = csv.reader(fh)
        first = next(rows, None)
        if first is None or tuple(first) != header:
            raise ConfigError(str(path), f"expected header {','.join(header)}")
        for lineno, row in enumerate(rows, start=2):
            if len(row) != 4:
                raise ConfigError(str(path), f"line {lineno}: expected 4 columns")
            try:
                e, j = int(row[0]), int(row[1])
                cell = float(row[3]) if kind == "value" else int(row[3])
            except ValueError:
                raise ConfigError(str(path), f"line {lineno}: malformed number") from None
            if not (0 <= e < spec.shape[0] and 1 <= j <= spec.shape[1]):
                raise ConfigError(str(path), f"line {lineno}: state ({e}, {j}) outside {spec.shape}")
            out[e, j - 1] = cell
            seen[e, j - 1] = True
    if not seen.all():
        e, j = np.argwhere(~seen)[0]
        raise ConfigError(str(path), f"missing row for state ({int(e)}, {int(j) + 1})")
    return out
