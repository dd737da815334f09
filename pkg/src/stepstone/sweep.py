"""Parameter sweeps over scenarios: swing time, push impulse, or noise scale.

Each (value, repetition) pair runs an independent seeded scenario; seeds are
base_seed + run index so sweeps are reproducible and may fan out over worker
processes without changing the output.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, replace

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .metrics import compute_metrics
from .runner import run_scenario
from .scenario import ScenarioConfig, ScenarioError, load_scenario

SWEEP_PARAMETERS = ("swing_time", "push_impulse", "noise_sigma")

SUMMARY_COLUMNS = (
    "value,repetition,seed,success,steps_completed,mean_tracking_error_m,"
    "max_tracking_error_m,max_cmp_cop_gap_m"
)


@dataclass(frozen=True)
class SweepSpec:
    parameter: str
    values: tuple
    repetitions: int
    base_scenario: ScenarioConfig
    base_seed: int = 0

    def __post_init__(self):
        if self.parameter not in SWEEP_PARAMETERS:
            raise ScenarioError(f"sweep parameter '{self.parameter}' not in {SWEEP_PARAMETERS}")
        if not self.values:
            raise ScenarioError("sweep values must not be empty")
        if self.repetitions < 1:
            raise ScenarioError("repetitions must be >= 1")


def load_sweep(path) -> SweepSpec:
    import os

    with open(path, "rb") as fh:
        raw = tomllib.load(fh)
    table = raw.get("sweep", {})
    try:
        base_path = table["base_scenario"]
    except KeyError as exc:
        raise ScenarioError("sweep.base_scenario missing") from exc
    if not os.path.isabs(base_path):
        base_path = os.path.join(os.path.dirname(os.path.abspath(path)), base_path)
    base = load_scenario(base_path)
    return SweepSpec(
        parameter=table.get("parameter", "swing_time"),
        values=tuple(table["values"]),
        repetitions=int(table.get("repetitions", 1)),
        base_scenario=base,
        base_seed=int(table.get("base_seed", 0)),
    )


def apply_parameter(cfg: ScenarioConfig, parameter: str, value: float) -> ScenarioConfig:
    if parameter == "swing_time":
        return replace(cfg, swing_time=float(value))
    if parameter == "push_impulse":
        # Rescale every push to the given impulse magnitude, keeping direction.
        def rescale(imp):
            imp = np.asarray(imp, dtype=float)
            nrm = float(np.linalg.norm(imp))
            direction = imp / nrm if nrm > 1e-12 else np.array([0.0, -1.0])
            return tuple(direction * float(value))

        pushes = tuple((t, rescale(imp)) for t, imp in cfg.pushes)
        ms = tuple((k, rescale(imp)) for k, imp in cfg.mid_swing_pushes)
        if not pushes and not ms:
            raise ScenarioError("push_impulse sweep needs at least one push in the base scenario")
        return replace(cfg, pushes=pushes, mid_swing_pushes=ms)
    if parameter == "noise_sigma":
        return replace(cfg, noise=cfg.noise.scaled(float(value)))
    raise ScenarioError(parameter)


def _run_one(args):
    spec, vi, rep = args
    value = spec.values[vi]
    idx = vi * spec.repetitions + rep
    cfg = apply_parameter(spec.base_scenario, spec.parameter, value)
    cfg = replace(cfg, seed=spec.base_seed + idx)
    log, outcome = run_scenario(cfg)
    metrics = compute_metrics(cfg, log, outcome)
    return (vi, rep, cfg.seed, metrics)


def run_sweep(spec: SweepSpec, jobs: int = 1):
    """Run all (value x repetition) scenarios; returns rows sorted by
    (value index, repetition): (value, repetition, seed, MetricsSummary)."""
    tasks = [(spec, vi, rep) for vi in range(len(spec.values)) for rep in range(spec.repetitions)]
    if jobs > 1:
        import multiprocessing as mp

        with mp.Pool(jobs) as pool:
            results = pool.map(_run_one, tasks)
    else:
        results = [_run_one(t) for t in tasks]
    results.sort(key=lambda r: (r[0], r[1]))
    return [(spec.values[vi], rep, seed, metrics) for vi, rep, seed, metrics in results]


def success_rates(spec: SweepSpec, rows) -> dict:
    rates = {}
    for value in spec.values:
        vals = [m.success for v, _, _, m in rows if v == value]
        rates[value] = sum(vals) / len(vals) if vals else math.nan
    return rates


def summary_csv(rows) -> str:
    out = [SUMMARY_COLUMNS]
    for value, rep, seed, m in rows:
        out.append(
            "%.10g,%d,%d,%d,%d,%.10g,%.10g,%.10g"
            % (
                value, rep, seed, int(m.success), m.steps_completed,
                m.mean_tracking_error, m.max_tracking_error, m.max_cmp_cop_gap,
            )
        )
    return "\n".join(out) + "\n"
