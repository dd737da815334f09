"""Command line front end: run scenarios, sweep parameters, probe footholds.

Exit codes: 0 completed, 2 fell, 1 configuration/input error.
"""

from __future__ import annotations

import json
import logging
import os
import sys
from dataclasses import replace

import click

from .logs import write_outputs
from .metrics import compute_metrics
from .plots import plot_sweep, render_run_figures
from .runner import run_scenario
from .scenario import ScenarioError, load_scenario
from .sweep import load_sweep, run_sweep, success_rates, summary_csv

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_FELL = 2

log = logging.getLogger("stepstone")


def _setup_logging():
    level = os.environ.get("STEPSTONE_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


class QpDumpWriter:
    """Per-tick QP dump as JSON lines: {"t", "A", "b", "J", "p", "P", "r",
    "Q_com", "W_g", "rho_min", "vdot_min", "vdot_max", "weights", "solution"}."""

    def __init__(self, path):
        self.fh = open(path, "w")

    def append(self, problem, sol, t):
        rec = {
            "t": t,
            "A": problem.A.tolist(),
            "b": problem.b.tolist(),
            "J": problem.J.tolist(),
            "p": problem.p.tolist(),
            "P": problem.P.tolist(),
            "r": problem.r.tolist(),
            "Q_com": problem.Q_com.tolist(),
            "W_g": problem.W_g.tolist(),
            "rho_min": problem.rho_min.tolist(),
            "vdot_min": problem.vdot_min.tolist(),
            "vdot_max": problem.vdot_max.tolist(),
            "weights": {
                "C_h": problem.C_h.tolist(),
                "C_J": problem.C_J.tolist(),
                "C_P": problem.C_P.tolist(),
                "C_rho": problem.C_rho.tolist(),
                "C_vdot": problem.C_vdot.tolist(),
            },
            "solution": {"vdot": sol.vdot.tolist(), "rho": sol.rho.tolist(),
                         "iterations": sol.iterations},
        }
        self.fh.write(json.dumps(rec) + "\n")

    def close(self):
        self.fh.close()


def _load_or_exit(path):
    try:
        return load_scenario(path)
    except (OSError, ScenarioError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)


@click.group()
def main():
    """Reduced-biped walking on partial footholds: simulate, sweep, explore."""
    _setup_logging()


@main.command()
@click.argument("scenario_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "outdir", default="out", show_default=True, help="Output directory.")
@click.option("--seed", type=int, default=None, help="Override the scenario seed.")
@click.option("--qp-dump", is_flag=True, help="Dump every QP (JSON lines) for offline inspection.")
@click.option("--plots/--no-plots", default=True, show_default=True, help="Render figures.")
def run(scenario_path, outdir, seed, qp_dump, plots):
    """Run one scenario; write CSV + JSON logs and print metrics as JSON."""
    cfg = _load_or_exit(scenario_path)
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    os.makedirs(outdir, exist_ok=True)
    dump = QpDumpWriter(os.path.join(outdir, f"{cfg.name}_qp_dump.jsonl")) if qp_dump else None
    try:
        run_log, outcome = run_scenario(cfg, qp_dump=dump)
    finally:
        if dump:
            dump.close()
    metrics = compute_metrics(cfg, run_log, outcome)
    sidecar_echo = {"name": cfg.name, "seed": cfg.seed, "dt": cfg.dt,
                    "swing_time": cfg.swing_time}
    csv_path, json_path = write_outputs(outdir, cfg.name, run_log, outcome, sidecar_echo)
    log.info("wrote %s and %s", csv_path, json_path)
    if plots:
        with open(json_path) as fh:
            sidecar = json.load(fh)
        for p in render_run_figures(outdir, cfg.name, run_log, sidecar):
            log.info("wrote %s", p)
    click.echo(json.dumps(metrics.to_json(), sort_keys=True))
    sys.exit(EXIT_OK if outcome["status"] == "completed" else EXIT_FELL)


@main.command()
@click.argument("sweep_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "outdir", default="out", show_default=True)
@click.option("--jobs", type=int, default=1, show_default=True, help="Parallel worker processes.")
@click.option("--plots/--no-plots", default=True, show_default=True)
def sweep(sweep_path, outdir, jobs, plots):
    """Run a parameter sweep; write a summary CSV (and a success-rate figure)."""
    try:
        spec = load_sweep(sweep_path)
    except (OSError, KeyError, ScenarioError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    rows = run_sweep(spec, jobs=jobs)
    os.makedirs(outdir, exist_ok=True)
    csv_path = os.path.join(outdir, f"sweep_{spec.parameter}.csv")
    with open(csv_path, "w") as fh:
        fh.write(summary_csv(rows))
    if plots:
        plot_sweep([r[0] for r in rows], rows, spec.parameter,
                   os.path.join(outdir, f"sweep_{spec.parameter}.png"))
    rates = success_rates(spec, rows)
    click.echo(json.dumps({"schema": "stepstone-sweep/1", "parameter": spec.parameter,
                           "success_rates": {str(k): v for k, v in rates.items()}},
                          sort_keys=True))
    sys.exit(EXIT_OK)


@main.command()
@click.argument("scenario_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "outdir", default="out", show_default=True)
@click.option("--plots/--no-plots", default=True, show_default=True)
def explore(scenario_path, outdir, plots):
    """Run a single-step exploration scenario; print the estimated foothold
    and its error against the scenario's ground truth."""
    cfg = _load_or_exit(scenario_path)
    if not cfg.exploration.enabled:
        click.echo("error: scenario has exploration disabled", err=True)
        sys.exit(EXIT_CONFIG)
    run_log, outcome = run_scenario(cfg)
    metrics = compute_metrics(cfg, run_log, outcome)
    sidecar_echo = {"name": cfg.name, "seed": cfg.seed}
    csv_path, json_path = write_outputs(outdir, cfg.name, run_log, outcome, sidecar_echo)
    if plots:
        with open(json_path) as fh:
            sidecar = json.load(fh)
        render_run_figures(outdir, cfg.name, run_log, sidecar)
    report = {
        "schema": "stepstone-explore/1",
        "outcome": outcome,
        "explorations": [
            {**run_log.exploration[i],
             "error": metrics.to_json()["foothold_errors"][i] if i < len(metrics.foothold_errors) else None}
            for i in range(len(run_log.exploration))
        ],
    }
    click.echo(json.dumps(report, sort_keys=True))
    sys.exit(EXIT_OK if outcome["status"] == "completed" else EXIT_FELL)


if __name__ == "__main__":
    main()
