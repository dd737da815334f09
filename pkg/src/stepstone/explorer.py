"""Foothold exploration state machine.

After touchdown the controller probes the new contact by walking the desired
CoP through a sequence of waypoints. Foot rotation (detected from the foot
angular velocity or from the foot/ground plane geometry) means the commanded
CoP left the true support, so the assumed foothold is cropped at the rotation
axis and the waypoint plan rebuilt. Measured CoPs are accumulated (dwell
averaged) and fused into the final four-corner foothold estimate, optionally
using a known terrain class (line or point) as a prior.

All geometry here lives in the sole frame of the explored foot.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import (
    DegenerateFit,
    EmptyFoothold,
    EmptyPointSet,
    FootholdPolygon,
    GEOMETRY_EPS,
    Line2,
    ParallelPlanes,
    Plane3,
    convex_hull,
    crop_polygon,
    fit_line_weighted,
    plane_intersection,
    reduce_to_four_corners,
)


class Phase(enum.Enum):
    IDLE = "idle"
    PROBING = "probing"
    SETTLING = "settling"
    DONE = "done"


class RotationSource(enum.Enum):
    VELOCITY = "velocity"
    GEOMETRIC = "geometric"


class PriorGeometry(enum.Enum):
    NONE = "none"
    LINE = "line"
    POINT = "point"


_GROUND_PLANE = Plane3(np.zeros(3), np.array([0.0, 0.0, 1.0]))


@dataclass(frozen=True)
class RotationDetection:
    axis: Line2
    omega: float = 0.0
    theta: float = 0.0
    source: RotationSource = RotationSource.VELOCITY

    def __post_init__(self):
        if self.omega < 0 or not (0.0 <= self.theta <= math.pi / 2 + 1e-12):
            raise ValueError("invalid rotation detection")


@dataclass(frozen=True)
class ExplorerConfig:
    omega_threshold: float = 0.1
    theta_threshold: float = math.radians(2.0)
    waypoint_dwell: float = 0.2
    history_weight_decay: float = 0.95
    prior_geometry: PriorGeometry = PriorGeometry.NONE
    waypoint_inset: float = 0.01
    settle_fraction: float = 0.4
    min_partial_samples: int = 5
    crop_refractory: float = 0.12
    min_crop_area_drop: float = 1e-5
    capture_ticks: int = 12
    line_strip_width: float = 0.01
    settle_duration: float = 0.2
    min_probe_duration: float = 1.05
    max_duration: float = 2.85

    def __post_init__(self):
        if self.omega_threshold <= 0 or self.theta_threshold <= 0:
            raise ValueError("detection thresholds must be positive")
        if not (0.0 < self.history_weight_decay <= 1.0):
            raise ValueError("history decay must be in (0, 1]")


@dataclass(frozen=True)
class ExplorationState:
    phase: Phase
    sole: FootholdPolygon
    assumed_foothold: FootholdPolygon
    waypoints: tuple
    waypoint_index: int
    cop_history: tuple          # (time, point, weight) triples
    elapsed: float
    dwell_elapsed: float = 0.0
    acc_sum: np.ndarray = field(default_factory=lambda: np.zeros(2))
    acc_count: int = 0
    refractory: float = 0.0
    settle_elapsed: float = 0.0
    final_foothold: FootholdPolygon | None = None
    probe_duration: float | None = None
    crop_count: int = 0
    pending_detection: RotationDetection | None = None
    capture_left: int = 0
    capture_sum: np.ndarray = field(default_factory=lambda: np.zeros(2))
    capture_count: int = 0

    def current_waypoint(self) -> np.ndarray:
        if self.phase is Phase.PROBING and self.waypoint_index < len(self.waypoints):
            return self.waypoints[self.waypoint_index]
        if self.final_foothold is not None:
            return self.final_foothold.deepest_point()
        return self.assumed_foothold.centroid()


def start_exploration(sole: FootholdPolygon, assumed: FootholdPolygon | None = None) -> ExplorationState:
    assumed = assumed if assumed is not None else sole
    return ExplorationState(
        phase=Phase.IDLE,
        sole=sole,
        assumed_foothold=assumed,
        waypoints=(),
        waypoint_index=0,
        cop_history=(),
        elapsed=0.0,
    )


def plan_waypoints(assumed: FootholdPolygon, inset: float = 0.01):
    """Probe sequence: centroid, each vertex pulled toward the centroid, then
    the centroid again. The pull is per-axis (up to `inset` per coordinate) so
    rectangular soles keep a full `inset` of clearance from every edge."""
    c = assumed.centroid()
    pts = [c]
    for v in assumed.vertices:
        d = c - v
        w = v + np.sign(d) * np.minimum(np.abs(d), inset)
        if assumed.signed_distance(w) > -1e-12 and np.linalg.norm(d) > GEOMETRY_EPS:
            # Per-axis pull left the polygon (skewed shape): pull along the
            # centroid direction instead.
            w = v + d / np.linalg.norm(d) * min(inset, float(np.linalg.norm(d)))
        pts.append(w)
    pts.append(c)
    out = []
    for p in pts:
        if not out or np.linalg.norm(p - out[-1]) > GEOMETRY_EPS:
            out.append(p)
    if len(out) > 1 and np.linalg.norm(out[0] - out[-1]) <= GEOMETRY_EPS and len(out) == 2:
        out.pop()
    return [np.asarray(p, dtype=float) for p in out]


def detect_rotation_velocity(foot_angular_velocity, cfg: ExplorerConfig):
    """Tip detection from the ground-tangential angular velocity (sole frame).
    Yaw spin is not foot rotation. The returned axis carries direction only
    (anchored at the origin); callers localize it at the measured CoP."""
    w = np.asarray(foot_angular_velocity, dtype=float).reshape(3)
    tang = w[:2]
    mag = float(np.linalg.norm(tang))
    if mag <= cfg.omega_threshold:
        return None
    return RotationDetection(
        axis=Line2(np.zeros(2), tang / mag),
        omega=mag,
        source=RotationSource.VELOCITY,
    )


def detect_rotation_geometric(foot_plane: Plane3, ground_plane: Plane3, cfg: ExplorerConfig):
    """Tip detection from the foot/ground plane intersection. Both planes must
    be expressed in the same (sole-projected) frame; a flat foot gives
    parallel planes and no detection."""
    try:
        axis, theta = plane_intersection(foot_plane, ground_plane)
    except ParallelPlanes:
        return None
    if theta <= cfg.theta_threshold:
        return None
    return RotationDetection(axis=axis, theta=theta, source=RotationSource.GEOMETRIC)


def apply_rotation_crop(state: ExplorationState, det: RotationDetection, measured_cop) -> ExplorationState:
    """Crop the assumed foothold at the rotation axis, keeping the side that
    actually bears load (the measured CoP side). When the measured CoP sits on
    the axis itself, the side away from the commanded waypoint is kept; if the
    crop empties the polygon it collapses to the measured point."""
    measured_cop = np.asarray(measured_cop, dtype=float).reshape(2)
    axis = det.axis
    keep = measured_cop
    if axis.distance(keep) <= 1e-6:
        wp = state.current_waypoint()
        away = measured_cop - wp
        nrm = float(np.linalg.norm(away))
        if nrm > GEOMETRY_EPS:
            keep = measured_cop + away / nrm * 1e-3
        else:
            c = state.assumed_foothold.centroid()
            away = c - measured_cop
            nrm = float(np.linalg.norm(away))
            if nrm <= GEOMETRY_EPS:
                return state
            keep = measured_cop + away / nrm * 1e-3
        if axis.distance(keep) <= GEOMETRY_EPS:
            return state
    try:
        cropped = crop_polygon(state.assumed_foothold, axis, keep)
    except EmptyFoothold:
        cropped = FootholdPolygon(measured_cop.reshape(1, 2), state.assumed_foothold.frame)
    return replace(state, assumed_foothold=cropped, crop_count=state.crop_count + 1)


def estimate_from_history(state: ExplorationState, cfg: ExplorerConfig) -> FootholdPolygon:
    """Fuse the CoP history into a four-corner foothold.

    No prior: convex hull of the samples. Line prior: recency-weighted total
    least squares through the samples, clipped to the sole and widened to a
    thin strip. Point prior: the weighted centroid as a degenerate polygon.
    """
    if not state.cop_history:
        raise EmptyPointSet("no CoP history to estimate from")
    pts = np.array([p for (_, p, _) in state.cop_history])
    base_w = np.array([w for (_, _, w) in state.cop_history])
    n = len(pts)
    decay = cfg.history_weight_decay ** np.arange(n - 1, -1, -1)
    weights = base_w * decay

    frame = state.sole.frame
    if cfg.prior_geometry is PriorGeometry.POINT:
        c = (weights[:, None] * pts).sum(axis=0) / weights.sum()
        return FootholdPolygon(np.tile(c, (4, 1)), frame)
    if cfg.prior_geometry is PriorGeometry.LINE:
        line = fit_line_weighted(pts, weights)
        strip = _line_to_strip(line, state.sole, cfg.line_strip_width)
        if strip is not None:
            return strip
        # Fitted line misses the sole entirely; fall through to the hull.
    hull = convex_hull(pts, frame=frame)
    return reduce_to_four_corners(hull)


def _line_to_strip(line: Line2, sole: FootholdPolygon, width: float):
    """Clip an infinite line to the sole polygon and widen it to a 4-vertex
    strip of the given width. Returns None when the line misses the sole."""
    d = line.direction
    p0 = line.point
    t_lo, t_hi = -math.inf, math.inf
    v = sole.vertices
    n = v.shape[0]
    if n < 3:
        return None
    for i in range(n):
        a = v[i]
        b = v[(i + 1) % n]
        edge = b - a
        normal = np.array([edge[1], -edge[0]])  # outward for CCW
        denom = float(normal @ d)
        num = float(normal @ (a - p0))
        if abs(denom) < 1e-14:
            if num < 0:
                return None
            continue
        t = num / denom
        if denom > 0:
            t_hi = min(t_hi, t)
        else:
            t_lo = max(t_lo, t)
    if not (t_lo < t_hi) or not np.isfinite(t_lo) or not np.isfinite(t_hi):
        return None
    e0 = p0 + t_lo * d
    e1 = p0 + t_hi * d
    perp = np.array([-d[1], d[0]]) * (width / 2.0)
    return FootholdPolygon(np.array([e0 - perp, e1 - perp, e1 + perp, e0 + perp]), sole.frame)


def _shrink_to_evidence(state: ExplorationState, cropped: FootholdPolygon) -> FootholdPolygon:
    """Keep the assumed foothold a superset of the measured-CoP hull (measured
    CoPs are known-supported points). Evidence is clamped into the pre-crop
    polygon first, so shrinkage stays monotone."""
    if not state.cop_history:
        return cropped
    prev = state.assumed_foothold
    pts = [prev.clamp(p) for (_, p, _) in state.cop_history]
    merged = convex_hull(np.vstack([cropped.vertices, np.array(pts)]), frame=cropped.frame)
    return merged


def _axis_segment(prev: FootholdPolygon, axis: Line2):
    """The rotation axis clipped to the polygon: what remains of a foothold
    once both of its sides have been cut away. The axis is re-anchored inside
    the polygon first (sensor noise can push it just outside), and the chord
    endpoints are projected back in so the estimate never grows."""
    if prev.n_vertices < 3 or prev.area() <= 0.0:
        return None
    anchored = Line2(prev.clamp(axis.point), axis.direction)
    seg = _clip_line_to_polygon(anchored, prev)
    if seg is None:
        return None
    ends = np.array([prev.clamp(v) for v in seg.vertices])
    if np.linalg.norm(ends[0] - ends[1]) <= GEOMETRY_EPS:
        return None
    return FootholdPolygon(ends, prev.frame)


def _clip_line_to_polygon(line: Line2, poly: FootholdPolygon):
    d, p0 = line.direction, line.point
    t_lo, t_hi = -math.inf, math.inf
    v = poly.vertices
    n = v.shape[0]
    for i in range(n):
        a, b = v[i], v[(i + 1) % n]
        edge = b - a
        normal = np.array([edge[1], -edge[0]])
        denom = float(normal @ d)
        num = float(normal @ (a - p0))
        if abs(denom) < 1e-14:
            if num < 0:
                return None
            continue
        t = num / denom
        if denom > 0:
            t_hi = min(t_hi, t)
        else:
            t_lo = max(t_lo, t)
    if not (t_lo < t_hi - GEOMETRY_EPS) or not np.isfinite(t_lo) or not np.isfinite(t_hi):
        return None
    return FootholdPolygon(np.array([p0 + t_lo * d, p0 + t_hi * d]), poly.frame)


def explorer_step(state: ExplorationState, sensors: dict, cfg: ExplorerConfig, dt: float):
    """Advance the exploration by one tick.

    sensors: {"measured_cop": (2,), "foot_plane": Plane3 in the sole-projected
    frame, "foot_angular_velocity": (3,) sole frame}.

    Returns (state, desired_cop, foothold_update) where foothold_update is the
    final four-corner estimate, delivered once on completion.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    measured = np.asarray(sensors["measured_cop"], dtype=float).reshape(2)

    if state.phase is Phase.IDLE:
        wps = tuple(plan_waypoints(state.assumed_foothold, cfg.waypoint_inset))
        state = replace(state, phase=Phase.PROBING, waypoints=wps, waypoint_index=0,
                        dwell_elapsed=0.0, acc_sum=np.zeros(2), acc_count=0)

    if state.phase is Phase.DONE:
        return replace(state, elapsed=state.elapsed + dt), state.current_waypoint(), None

    if state.phase is Phase.SETTLING:
        state = replace(state, elapsed=state.elapsed + dt,
                        settle_elapsed=state.settle_elapsed + dt)
        if state.settle_elapsed >= cfg.settle_duration:
            state = replace(state, phase=Phase.DONE)
        return state, state.current_waypoint(), None

    # Probing. The dwell accumulation is folded into one state update below;
    # this is the per-tick hot path.
    elapsed = state.elapsed + dt
    refractory = max(0.0, state.refractory - dt)

    if state.capture_left > 0:
        # A detection fired recently; average the clamped CoP for a few ticks
        # before cropping so the stored evidence sample is low-noise.
        cs = state.capture_sum + measured
        cc = state.capture_count + 1
        if state.capture_left > 1:
            state = replace(state, elapsed=elapsed, refractory=refractory,
                            capture_left=state.capture_left - 1,
                            capture_sum=cs, capture_count=cc)
            return state, state.current_waypoint(), None
        mean = cs / cc
        det = state.pending_detection
        state = replace(state, elapsed=elapsed, refractory=cfg.crop_refractory,
                        capture_left=0, capture_sum=np.zeros(2), capture_count=0,
                        pending_detection=None)
        return _apply_detection(state, det, mean, float(cc), cfg)

    dwell_elapsed = state.dwell_elapsed + dt
    accumulate = dwell_elapsed >= cfg.settle_fraction * cfg.waypoint_dwell

    detection = None
    if refractory <= 0.0:
        detection = detect_rotation_velocity(sensors["foot_angular_velocity"], cfg)
        if detection is None and "foot_plane" in sensors:
            detection = detect_rotation_geometric(sensors["foot_plane"], _GROUND_PLANE, cfg)

    if detection is not None:
        state = replace(state, elapsed=elapsed, refractory=refractory,
                        pending_detection=detection, capture_left=cfg.capture_ticks,
                        capture_sum=measured.copy(), capture_count=1)
        return state, state.current_waypoint(), None

    if dwell_elapsed < cfg.waypoint_dwell and elapsed < cfg.max_duration:
        if accumulate:
            state = replace(state, elapsed=elapsed, dwell_elapsed=dwell_elapsed,
                            refractory=refractory, acc_sum=state.acc_sum + measured,
                            acc_count=state.acc_count + 1)
        else:
            state = replace(state, elapsed=elapsed, dwell_elapsed=dwell_elapsed,
                            refractory=refractory)
        return state, state.waypoints[state.waypoint_index], None

    state = replace(state, elapsed=elapsed, dwell_elapsed=dwell_elapsed, refractory=refractory)

    # Accumulate the dwell average once transients settled.
    if accumulate:
        state = replace(state, acc_sum=state.acc_sum + measured, acc_count=state.acc_count + 1)

    timed_out = state.elapsed >= cfg.max_duration
    if state.dwell_elapsed >= cfg.waypoint_dwell or timed_out:
        if state.acc_count >= cfg.min_partial_samples:
            # Averaged dwell samples carry their tick count as weight: their
            # noise shrinks with the count, and the line fit should trust them
            # accordingly over single-tick detection samples.
            sample = (state.elapsed, state.acc_sum / state.acc_count, float(state.acc_count))
            state = replace(state, cop_history=state.cop_history + (sample,))
        state = replace(state, waypoint_index=state.waypoint_index + 1,
                        dwell_elapsed=0.0, acc_sum=np.zeros(2), acc_count=0)
        if state.waypoint_index >= len(state.waypoints) and not timed_out:
            if state.elapsed < cfg.min_probe_duration:
                # Short plan (tiny foothold): keep shifting about the centroid
                # until the probe has lasted long enough to trust.
                extra = state.assumed_foothold.centroid()
                state = replace(state, waypoints=state.waypoints + (extra,))
        if state.waypoint_index >= len(state.waypoints) or timed_out:
            return _finalize(state, cfg, measured)

    return state, state.current_waypoint(), None


def _apply_detection(state: ExplorationState, detection: RotationDetection, mean_cop,
                     weight: float, cfg: ExplorerConfig):
    """Crop at a confirmed rotation, fold the capture-averaged CoP into the
    history, and rebuild the probe plan when the estimate changed enough."""
    if detection.source is RotationSource.VELOCITY:
        detection = replace(detection, axis=Line2(mean_cop, detection.axis.direction))
    # The CoP measured while tipping sits on the rotation axis: a
    # known-supported point, and the best evidence of the contact extent.
    history = state.cop_history + ((state.elapsed, np.asarray(mean_cop, dtype=float), weight),)
    state = replace(state, cop_history=history)
    prev = state.assumed_foothold
    cropped_state = apply_rotation_crop(state, detection, mean_cop)
    cropped = cropped_state.assumed_foothold
    if cropped.n_vertices < 3 or cropped.area() <= cfg.min_crop_area_drop:
        # Both sides of the axis have been cut away: what remains is the
        # rotation line itself, clipped to the previous estimate.
        seg = _axis_segment(prev, detection.axis)
        if seg is not None:
            cropped = seg
    new_assumed = _shrink_to_evidence(state, cropped)
    net_drop = prev.area() - new_assumed.area()
    went_degenerate = new_assumed.n_vertices < 3 and prev.n_vertices >= 3
    if net_drop > cfg.min_crop_area_drop or went_degenerate:
        restart = net_drop > 0.2 * max(prev.area(), 1e-9) or went_degenerate
        state = replace(state, assumed_foothold=new_assumed,
                        crop_count=cropped_state.crop_count)
        wps = tuple(plan_waypoints(new_assumed, cfg.waypoint_inset))
        if restart:
            state = replace(state, waypoints=wps, waypoint_index=0,
                            dwell_elapsed=0.0, acc_sum=np.zeros(2), acc_count=0)
        else:
            idx = min(state.waypoint_index, len(wps) - 1)
            state = replace(state, waypoints=wps, waypoint_index=idx)
    # Otherwise an ignorable re-detection (noise or recovery motion); the
    # refractory was already set by the caller.
    return state, state.current_waypoint(), None


def _finalize(state: ExplorationState, cfg: ExplorerConfig, measured):
    if not state.cop_history:
        state = replace(state, cop_history=((state.elapsed, np.asarray(measured, dtype=float), 1.0),))
    if state.crop_count == 0 and cfg.prior_geometry is not PriorGeometry.POINT:
        # Every probe held: no evidence against the assumed foothold, so keep
        # it whole rather than shrinking to the hull of inset probe points.
        estimate = state.assumed_foothold
    else:
        try:
            estimate = estimate_from_history(state, cfg)
        except DegenerateFit:
            estimate = FootholdPolygon(
                np.tile(np.asarray(state.cop_history[0][1], dtype=float), (4, 1)),
                state.sole.frame,
            )
    final = reduce_to_four_corners(estimate)
    # The fused estimate supersedes the crop-derived assumption from here on.
    state = replace(state, phase=Phase.SETTLING, final_foothold=final,
                    assumed_foothold=final,
                    probe_duration=state.elapsed, settle_elapsed=0.0)
    return state, state.current_waypoint(), final
