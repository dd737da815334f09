"""Deterministic physics of the reduced biped.

The plant is the same reduced model the optimization assumes, with one key
difference: each foot's true contact region may be smaller than the contact
the controller believes in. Forces commanded outside the true region cannot
be realized; the achieved CoP clamps to the true region's boundary and the
uncarried moment tips the foot about the clamping edge (massless foot,
kinematic tip rate proportional to the excess moment). The CoM advances along
the exact constant-CMP pendulum flow each tick, so the capture-point dynamics
hold to machine precision; the flywheel integrates its achieved torque with
hard stops at the angle limit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .balance import LipmParams
from .geometry import (
    EmptyFoothold,
    FootholdPolygon,
    GEOMETRY_EPS,
    Line2,
    Plane3,
    Transform2,
    intersect_convex,
)
from .qp import QpSolution


@dataclass
class FootState:
    name: str
    pose: Transform2
    sole: FootholdPolygon                 # sole outline, sole frame
    true_contact: FootholdPolygon         # ground truth support, sole frame
    assumed_contact: FootholdPolygon      # controller belief, sole frame
    loaded: bool = True
    load: float = 0.0                     # achieved vertical force, N
    tilt_angle: float = 0.0
    tilt_rate: float = 0.0
    tilt_axis: Line2 | None = None        # sole frame
    cop_sole: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def world_assumed(self) -> FootholdPolygon:
        return self.pose.apply_polygon(self.assumed_contact, "world")

    def world_true(self) -> FootholdPolygon:
        return self.pose.apply_polygon(self.true_contact, "world")

    def foot_plane_sole(self) -> Plane3:
        """Foot plane in the sole-projected frame (z up, ground at z=0)."""
        if self.tilt_angle <= 1e-12 or self.tilt_axis is None:
            return _FLAT_PLANE
        a = self.tilt_axis.direction
        s, c = math.sin(self.tilt_angle), math.cos(self.tilt_angle)
        normal = np.array([a[1] * s, -a[0] * s, c])
        p = self.tilt_axis.point
        return Plane3(np.array([p[0], p[1], 0.0]), normal)


_FLAT_PLANE = Plane3(np.zeros(3), np.array([0.0, 0.0, 1.0]))


@dataclass
class ReducedBipedState:
    t: float
    com: np.ndarray
    comd: np.ndarray
    fly_angle: np.ndarray
    fly_rate: np.ndarray
    feet: dict
    phase: str = "settle"

    def loaded_feet(self):
        return [f for f in self.feet.values() if f.loaded]


@dataclass
class TickPhysics:
    """Ground-truth quantities realized in one dynamics step (for logging)."""

    cop_world: np.ndarray
    cmp_world: np.ndarray
    fly_torque: np.ndarray          # ground-plane (CMP-offset) components
    impulse: np.ndarray             # horizontal momentum change this tick
    per_foot_cop_sole: dict
    per_foot_load: dict
    fz_total: float


def make_foot(name, position, yaw, sole_vertices, true_contact=None) -> FootState:
    sole = FootholdPolygon(np.asarray(sole_vertices, dtype=float), "sole")
    true_c = true_contact if true_contact is not None else sole
    return FootState(
        name=name,
        pose=Transform2(yaw=yaw, translation=np.asarray(position, dtype=float)),
        sole=sole,
        true_contact=true_c,
        assumed_contact=sole,
    )


def terrain_contact(sole: FootholdPolygon, terrain, planned_pose: Transform2,
                    actual_pose: Transform2) -> FootholdPolygon | None:
    """True contact region in the actual sole frame. The terrain feature is
    anchored to the planned pose (the stone is where the plan expected the
    sole); placement error shifts the sole relative to it. Returns None when
    the foot misses the feature entirely."""
    to_actual = actual_pose.inverse()
    if terrain.kind == "full":
        return sole
    if terrain.kind == "line":
        d_world = planned_pose.apply_dir(np.array([math.cos(terrain.angle), math.sin(terrain.angle)]))
        perp = np.array([-d_world[1], d_world[0]])
        p_world = planned_pose.apply(np.zeros(2)) + perp * terrain.offset
        line_sole = Line2(to_actual.apply(p_world), to_actual.apply_dir(d_world))
        return _clip_line_to_sole(line_sole, sole)
    if terrain.kind == "point":
        h = terrain.size / 2.0
        corners = np.array([[-h, -h], [h, -h], [h, h], [-h, h]]) + np.asarray(terrain.position)
        world = planned_pose.apply_many(corners)
        stone_sole = FootholdPolygon(to_actual.apply_many(world), "sole")
        try:
            return intersect_convex(stone_sole, sole)
        except EmptyFoothold:
            return None
    raise ValueError(f"unknown terrain kind {terrain.kind}")


def _clip_line_to_sole(line: Line2, sole: FootholdPolygon):
    d, p0 = line.direction, line.point
    t_lo, t_hi = -math.inf, math.inf
    v = sole.vertices
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
    if not (t_lo < t_hi - GEOMETRY_EPS):
        return None
    return FootholdPolygon(np.array([p0 + t_lo * d, p0 + t_hi * d]), "sole")


def _tip_axis(region: FootholdPolygon, commanded: np.ndarray):
    """Rotation axis when the commanded CoP exits the true region: through the
    clamped boundary point, along the local edge (or perpendicular to the
    excursion at a corner/point contact)."""
    clamped, edge_dir, at_vertex = region.closest_boundary_point(commanded)
    out = commanded - clamped
    nrm = float(np.linalg.norm(out))
    if (at_vertex or edge_dir is None) and nrm > GEOMETRY_EPS:
        direction = np.array([-out[1], out[0]]) / nrm
    elif edge_dir is not None:
        direction = edge_dir
    else:
        direction = np.array([1.0, 0.0])
    return clamped, Line2(clamped, direction), nrm


def step_dynamics(state: ReducedBipedState, sol: QpSolution, feet_contacts, params: LipmParams,
                  flywheel_inertia: float, dt: float, tip_gain: float = 5.0,
                  tip_cap: float = 2.0, fly_angle_limit: float = math.inf):
    """Advance the plant one tick under the solved contact forces.

    feet_contacts: list of (FootState, FootContact, rho_slice) for the loaded
    feet, in the order the QP saw them. Returns (state, TickPhysics).
    """
    m, g, z, w0 = params.m, params.g, params.z, params.omega0
    f_net = np.zeros(3)
    cop_weighted = np.zeros(2)
    fz_total = 0.0
    per_cop = {}
    per_load = {}

    for foot, contact, rho in feet_contacts:
        f_world = contact.world_force_map() @ rho
        wrench_sole = contact.sole_wrench_map() @ rho
        fz = wrench_sole[5]
        foot.load = float(fz)
        per_load[foot.name] = float(fz)
        if fz > 1e-9:
            commanded = np.array([-wrench_sole[1] / fz, wrench_sole[0] / fz])
        else:
            commanded = foot.true_contact.centroid()
        outside = foot.true_contact.signed_distance(commanded)
        if outside > GEOMETRY_EPS:
            actual, axis, dist = _tip_axis(foot.true_contact, commanded)
            foot.tilt_axis = axis
            rate = min(tip_gain * fz * dist, tip_cap)
            foot.tilt_rate = rate
            foot.tilt_angle = min(foot.tilt_angle + rate * dt, 0.5)
        else:
            actual = commanded
            if foot.tilt_angle > 0.0:
                # Load back inside the support: the foot falls flat again.
                margin = max(-outside, 0.005)
                rate = -min(tip_gain * fz * margin, tip_cap)
                foot.tilt_rate = rate
                foot.tilt_angle = max(foot.tilt_angle + rate * dt, 0.0)
                if foot.tilt_angle == 0.0:
                    foot.tilt_rate = 0.0
                    foot.tilt_axis = None
            else:
                foot.tilt_rate = 0.0
        foot.cop_sole = actual
        per_cop[foot.name] = actual.copy()
        f_net += f_world
        cop_weighted += fz * foot.pose.apply(actual)
        fz_total += fz

    if fz_total <= 1e-9:
        raise RuntimeError("no vertical support force; the plant is airborne")

    cop_world = cop_weighted / fz_total
    cmp_world = state.com - z * f_net[:2] / fz_total
    # Ground-plane angular momentum rate actually delivered to the flywheel.
    tau_g = fz_total * (cmp_world - cop_world)
    fly_acc = tau_g / flywheel_inertia

    new_rate = state.fly_rate + fly_acc * dt
    new_angle = state.fly_angle + state.fly_rate * dt + 0.5 * fly_acc * dt * dt
    if np.isfinite(fly_angle_limit):
        for k in range(2):
            if new_angle[k] > fly_angle_limit:
                new_angle[k] = fly_angle_limit
                new_rate[k] = min(new_rate[k], 0.0)
            elif new_angle[k] < -fly_angle_limit:
                new_angle[k] = -fly_angle_limit
                new_rate[k] = max(new_rate[k], 0.0)

    # Exact pendulum flow about the achieved CMP, held for this tick.
    ch, sh = math.cosh(w0 * dt), math.sinh(w0 * dt)
    rel = state.com - cmp_world
    com_new = cmp_world + rel * ch + state.comd / w0 * sh
    comd_new = rel * w0 * sh + state.comd * ch
    impulse = m * (comd_new - state.comd)

    new_state = ReducedBipedState(
        t=state.t + dt,
        com=com_new,
        comd=comd_new,
        fly_angle=new_angle,
        fly_rate=new_rate,
        feet=state.feet,
        phase=state.phase,
    )
    physics = TickPhysics(
        cop_world=cop_world,
        cmp_world=cmp_world,
        fly_torque=tau_g,
        impulse=impulse,
        per_foot_cop_sole=per_cop,
        per_foot_load=per_load,
        fz_total=fz_total,
    )
    return new_state, physics


def apply_push(state: ReducedBipedState, impulse, mass: float) -> ReducedBipedState:
    imp = np.asarray(impulse, dtype=float).reshape(2)
    return replace(state, comd=state.comd + imp / mass)


# Draw layout per tick: com(2) + comd(2) + per foot [cop(2) + gyro(3)].
_DRAWS_PER_FOOT = 5


def sense(state: ReducedBipedState, noise, rng, params: LipmParams, foot_order) -> dict:
    """Noisy measurements; a fixed number of normal draws per tick keeps the
    stream aligned regardless of phase."""
    n_draw = 4 + _DRAWS_PER_FOOT * len(foot_order)
    eps = rng.standard_normal(n_draw)
    out = {
        "com": state.com + noise.com_sigma * eps[0:2],
        "comd": state.comd + noise.com_sigma * params.omega0 * eps[2:4],
        "fly_angle": state.fly_angle.copy(),
        "fly_rate": state.fly_rate.copy(),
        "feet": {},
    }
    base = 4
    for name in foot_order:
        foot = state.feet[name]
        sl = eps[base : base + _DRAWS_PER_FOOT]
        base += _DRAWS_PER_FOOT
        cop = foot.cop_sole + noise.cop_sigma * sl[0:2]
        cop = foot.sole.clamp(cop)
        if foot.tilt_axis is not None and foot.tilt_rate > 0.0:
            omega = np.array([foot.tilt_axis.direction[0], foot.tilt_axis.direction[1], 0.0]) * foot.tilt_rate
        else:
            omega = np.zeros(3)
        omega = omega + noise.gyro_sigma * sl[2:5]
        out["feet"][name] = {
            "measured_cop": cop,
            "foot_plane": foot.foot_plane_sole(),
            "foot_angular_velocity": omega,
        }
    return out
