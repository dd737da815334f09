"""Post-hoc metrics computed from run logs, never inside the controller."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import FootholdPolygon, Line2, Transform2
from .logs import GroundReferenceLog
from .scenario import ScenarioConfig
from .sim import terrain_contact

METRICS_SCHEMA = "stepstone-metrics/1"


@dataclass
class FootholdError:
    step: int
    kind: str
    angle_deg: float | None = None
    offset_m: float | None = None
    position_err_m: float | None = None


@dataclass
class MetricsSummary:
    success: bool
    outcome: dict
    mean_tracking_error: float
    max_tracking_error: float
    max_cmp_cop_gap: float
    exploration_durations: list
    foothold_errors: list
    steps_completed: int

    @property
    def success_rate(self) -> float:
        return 1.0 if self.success else 0.0

    def to_json(self) -> dict:
        return {
            "schema": METRICS_SCHEMA,
            "success": self.success,
            "outcome": self.outcome,
            "steps_completed": self.steps_completed,
            "mean_tracking_error_m": self.mean_tracking_error,
            "max_tracking_error_m": self.max_tracking_error,
            "max_cmp_cop_gap_m": self.max_cmp_cop_gap,
            "exploration_durations_s": list(self.exploration_durations),
            "foothold_errors": [
                {
                    "step": e.step,
                    "kind": e.kind,
                    "angle_deg": e.angle_deg,
                    "offset_m": e.offset_m,
                    "position_err_m": e.position_err_m,
                }
                for e in self.foothold_errors
            ],
        }


def strip_axis(poly: FootholdPolygon) -> Line2:
    """Major axis of a (near-)rectangular 4-corner foothold estimate."""
    v = poly.vertices
    best_len, best = -1.0, None
    n = v.shape[0]
    for i in range(n):
        e = v[(i + 1) % n] - v[i]
        ln = float(np.linalg.norm(e))
        if ln > best_len:
            best_len, best = ln, (0.5 * (v[i] + v[(i + 1) % n]), e / max(ln, 1e-12))
    c = poly.centroid()
    return Line2(c, best[1])


def foothold_error_for_step(cfg: ScenarioConfig, entry: dict, placement_events) -> FootholdError:
    """Compare an exploration's final foothold against the true contact in the
    actual sole frame."""
    k = entry["step"]
    step = cfg.footsteps[k]
    est = FootholdPolygon.from_json(entry["final_foothold"])
    planned = Transform2(step.yaw, np.asarray(step.position, dtype=float))
    actual_pos = placement_events.get(k)
    actual = Transform2(step.yaw, np.asarray(actual_pos, dtype=float)) if actual_pos is not None else planned
    sole = FootholdPolygon(cfg.sole_polygon_vertices(), "sole")
    true_c = terrain_contact(sole, step.terrain, planned, actual)
    if true_c is None:
        return FootholdError(step=k, kind=step.terrain.kind)

    if step.terrain.kind == "line":
        axis = strip_axis(est)
        tv = true_c.vertices
        true_dir = tv[1] - tv[0]
        true_dir = true_dir / np.linalg.norm(true_dir)
        cosang = min(abs(float(axis.direction @ true_dir)), 1.0)
        angle = math.degrees(math.acos(cosang))
        mid = 0.5 * (tv[0] + tv[1])
        offset = axis.distance(mid)
        return FootholdError(step=k, kind="line", angle_deg=angle, offset_m=float(offset))
    if step.terrain.kind == "point":
        err = float(np.linalg.norm(est.centroid() - true_c.centroid()))
        return FootholdError(step=k, kind="point", position_err_m=err)
    # Full foothold: report the centroid offset of the estimate.
    err = float(np.linalg.norm(est.centroid() - sole.centroid()))
    return FootholdError(step=k, kind="full", position_err_m=err)


def compute_metrics(cfg: ScenarioConfig, log: GroundReferenceLog, outcome: dict) -> MetricsSummary:
    n = log.n
    err = np.linalg.norm(log.icp[:n] - log.icp_ref[:n], axis=1)
    walk = log.phase_mask("transfer", "swing")
    if walk.any():
        mean_err = float(err[walk].mean())
        max_err = float(err[walk].max())
    else:
        mean_err = max_err = 0.0
    gap = float(np.linalg.norm(log.cmp[:n] - log.cop[:n], axis=1).max()) if n else 0.0

    placements = {}
    for ev in log.events:
        if ev["kind"] == "touchdown":
            placements[ev["step"]] = ev["position"]
    foothold_errors = [foothold_error_for_step(cfg, e, placements) for e in log.exploration]

    return MetricsSummary(
        success=outcome.get("status") == "completed",
        outcome=outcome,
        mean_tracking_error=mean_err,
        max_tracking_error=max_err,
        max_cmp_cop_gap=gap,
        exploration_durations=[e["duration"] for e in log.exploration],
        foothold_errors=foothold_errors,
        steps_completed=outcome.get("steps", 0),
    )
