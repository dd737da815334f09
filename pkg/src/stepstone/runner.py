"""Walking scenario execution.

Per step: a double-support transfer shifts weight onto the stance foot, the
other foot swings to its planned foothold (teleported at touchdown, with
optional placement error), and, when exploration is enabled, the new contact
is probed before the next transfer. The per-tick loop senses, evaluates the
capture-point reference, assembles and solves the momentum QP, and advances
the plant physics. Everything is driven by one seeded RNG, so runs are
bit-reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .balance import (
    IcpReference,
    IcpSegment,
    LipmParams,
    adjust_final_icp,
    cmp_control_law,
    desired_linear_momentum_rate,
    momentum_weight_schedule,
)
from .explorer import (
    ExplorerConfig,
    Phase as ExplorePhase,
    explorer_step,
    start_exploration,
)
from .geometry import FootholdPolygon, Transform2, convex_hull, reduce_to_four_corners
from .logs import GroundReferenceLog
from .qp import (
    F_Z_FLOOR,
    FootContact,
    MotionTask,
    QpError,
    assemble_cop_objective,
    assemble_qp,
    solve_qp,
)
from .scenario import ScenarioConfig
from .sim import ReducedBipedState, apply_push, make_foot, sense, step_dynamics, terrain_contact

FOOT_ORDER = ("left", "right")
COP_MARGIN = 0.005
FLAT_TASK_KP = 100.0
FLAT_TASK_KD = 20.0
TILT_ACCEL_MAX = 50.0
SHARE_RAMP_FRACTION = 0.85
EXPLORE_SHARE_RAMP = 0.3
FALL_TICKS = 5


@dataclass
class _PhaseCtx:
    kind: str                   # settle | transfer | swing | explore | hold
    t0: float
    duration: float
    ref: IcpReference
    stance: str | None = None
    swing_foot: str | None = None
    step_index: int = -1
    shares_from: dict = field(default_factory=dict)
    shares_to: dict = field(default_factory=dict)
    share_ramp: float = 1.0
    explore_state: object = None
    explore_cfg: ExplorerConfig | None = None
    waypoint: np.ndarray | None = None


def _const_ref(point, duration) -> IcpReference:
    p = np.asarray(point, dtype=float)
    seg = IcpSegment(max(duration, 1e-3) + 5.0, p, p, p)
    return IcpReference((seg,), p)


def _connect_transfer(icp_from, cmp_end, icp_end, duration, omega0) -> IcpSegment:
    """Transfer segment whose ICP runs from icp_from to icp_end while the CMP
    moves linearly onto cmp_end: the free CMP start point is solved so the
    reference is continuous with the previous phase."""
    wt = omega0 * duration
    e = math.exp(-wt)
    beta = (1.0 - e) / wt - e
    alpha = 1.0 - (1.0 - e) / wt
    c0 = (np.asarray(icp_from, dtype=float) - beta * np.asarray(cmp_end, dtype=float)
          - e * np.asarray(icp_end, dtype=float)) / alpha
    return IcpSegment(duration, c0, np.asarray(cmp_end, dtype=float), np.asarray(icp_from, dtype=float))


class ScenarioRun:
    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg
        self.params = LipmParams(cfg.model.mass, cfg.model.gravity, cfg.model.com_height)
        self.gains = cfg.gains
        self.rng = np.random.default_rng(cfg.seed)
        self.sole_verts = cfg.sole_polygon_vertices()
        init = cfg.initial_foot_positions()
        feet = {
            name: make_foot(name, init[name], 0.0, self.sole_verts)
            for name in FOOT_ORDER
        }
        for f in feet.values():
            f.load = cfg.model.mass * cfg.model.gravity / 2
        com0 = 0.5 * (init["left"] + init["right"])
        self.state = ReducedBipedState(
            t=0.0, com=com0.copy(), comd=np.zeros(2),
            fly_angle=np.zeros(2), fly_rate=np.zeros(2), feet=feet,
        )
        self.fz_prev = {name: cfg.model.mass * cfg.model.gravity / 2 for name in FOOT_ORDER}
        self.shares = {"left": 0.5, "right": 0.5}
        self.warm_start = ()
        self.pending_pushes = sorted(cfg.pushes)
        self._ms_pushes = {k: imp for k, imp in cfg.mid_swing_pushes}
        self.fall_counter = 0
        self._fall_stride = 0
        self.outcome = None
        self.steps_completed = 0
        self.icp_anchor = com0.copy()
        self.qp_dump = None

        explore_cap = (cfg.exploration.explorer.max_duration
                       + cfg.exploration.explorer.settle_duration + 0.5)
        total = (cfg.settle_time
                 + len(cfg.footsteps) * (cfg.transfer_time + cfg.swing_time
                                         + (explore_cap if cfg.exploration.enabled else 0.0))
                 + cfg.transfer_time + cfg.final_hold + 1.0)
        self.log = GroundReferenceLog(capacity=int(total / cfg.dt) + 16, dt=cfg.dt)

        self._contacts = {}
        self._support_assumed = None
        self._support_capture = None
        self._phase = None
        self._phase_queue = self._build_phase_plan()
        self._enter_next_phase()

    # ----- phase plan -------------------------------------------------------

    def _build_phase_plan(self):
        plan = [("settle", None)]
        for k in range(len(self.cfg.footsteps)):
            plan.append(("transfer", k))
            plan.append(("swing", k))
            if self.cfg.exploration.enabled:
                plan.append(("explore", k))
        if self.cfg.end_after_exploration and self.cfg.exploration.enabled:
            return plan
        plan.append(("final_transfer", None))
        plan.append(("hold", None))
        return plan

    def _stance_name(self, k: int) -> str:
        return "right" if self.cfg.footsteps[k].foot == "left" else "left"

    def _expected_region_world(self, k: int) -> FootholdPolygon:
        """Terrain feature at the planned pose of step k (operator knowledge)."""
        step = self.cfg.footsteps[k]
        pose = Transform2(step.yaw, np.asarray(step.position, dtype=float))
        sole = FootholdPolygon(self.sole_verts, "sole")
        region = terrain_contact(sole, step.terrain, pose, pose)
        if region is None:
            region = sole
        return pose.apply_polygon(region, "world")

    def _final_ds_point(self) -> np.ndarray:
        last = self.cfg.footsteps[-1]
        other = self._stance_name(len(self.cfg.footsteps) - 1)
        if len(self.cfg.footsteps) >= 2 and self.cfg.footsteps[-2].foot == other:
            prev_pos = np.asarray(self.cfg.footsteps[-2].position, dtype=float)
        else:
            prev_pos = self.state.feet[other].pose.translation
        return 0.5 * (np.asarray(last.position, dtype=float) + prev_pos)

    def _nominal_final_icp(self, k: int) -> np.ndarray:
        """Backward recursion over the remaining plan for the ICP at the end
        of step k's swing."""
        w0 = self.params.omega0
        target = self._final_ds_point()
        n = len(self.cfg.footsteps)
        decay_step = math.exp(-w0 * (self.cfg.transfer_time + self.cfg.swing_time))
        for j in range(n - 1, k, -1):
            c = self._expected_region_world(j - 1).centroid() if j - 1 >= 0 else target
            target = c + (target - c) * decay_step
        return target

    def _enter_next_phase(self):
        if not self._phase_queue:
            self.outcome = {"status": "completed", "t": self.state.t,
                            "steps": self.steps_completed}
            return
        kind, k = self._phase_queue.pop(0)
        cfg = self.cfg
        t0 = self.state.t
        shares_from = dict(self.shares)

        if kind == "settle":
            hold = self.state.com.copy()
            ctx = _PhaseCtx("settle", t0, cfg.settle_time, _const_ref(hold, cfg.settle_time),
                            shares_from=shares_from, shares_to={"left": 0.5, "right": 0.5},
                            share_ramp=cfg.settle_time)
            self.icp_anchor = hold
        elif kind == "transfer":
            stance = self._stance_name(k)
            stance_poly = self.state.feet[stance].world_assumed()
            c_st = stance_poly.centroid()
            upcoming = self._expected_region_world(k)
            if cfg.exploration.enabled:
                # The step ends in the exploration stance: weight mostly on the
                # stance foot, a probe share on the new one.
                lam = cfg.exploration.load_share
                nominal = c_st + lam * (upcoming.centroid() - c_st)
            else:
                nominal = self._nominal_final_icp(k)
            a_k = adjust_final_icp(stance_poly, upcoming, nominal, c_st)
            swing_seg = IcpSegment.from_endpoint(cfg.swing_time, c_st, c_st, a_k, self.params.omega0)
            transfer_seg = _connect_transfer(self.icp_anchor, c_st, swing_seg.icp_start,
                                             cfg.transfer_time, self.params.omega0)
            ref = IcpReference((transfer_seg, swing_seg), a_k)
            ctx = _PhaseCtx("transfer", t0, cfg.transfer_time, ref, stance=stance,
                            swing_foot=cfg.footsteps[k].foot, step_index=k,
                            shares_from=shares_from,
                            shares_to={stance: 1.0, cfg.footsteps[k].foot: 0.0},
                            share_ramp=SHARE_RAMP_FRACTION * cfg.transfer_time)
            self.icp_anchor = a_k
        elif kind == "swing":
            stance = self._stance_name(k)
            swing_foot = self.cfg.footsteps[k].foot
            self.state.feet[swing_foot].loaded = False
            self.state.feet[swing_foot].tilt_angle = 0.0
            self.state.feet[swing_foot].tilt_rate = 0.0
            self.state.feet[swing_foot].tilt_axis = None
            ref = self._phase.ref        # continue the transfer-phase reference
            ctx = _PhaseCtx("swing", self._phase.t0, cfg.swing_time, ref, stance=stance,
                            swing_foot=swing_foot, step_index=k,
                            shares_from={stance: 1.0, swing_foot: 0.0},
                            shares_to={stance: 1.0, swing_foot: 0.0})
            self.log.add_event(t0, "liftoff", foot=swing_foot, step=k)
        elif kind == "explore":
            foot = self.state.feet[self.cfg.footsteps[k].foot]
            stance = self._stance_name(k)
            terrain = self.cfg.footsteps[k].terrain
            exp_cfg = replace(self.cfg.exploration.explorer,
                              prior_geometry=self.cfg.exploration.prior_for(terrain))
            exp_state = start_exploration(foot.sole)
            foot.assumed_contact = foot.sole
            # Hold the ICP where the step reference ended; the implied load
            # split between the feet follows from that point.
            hold = np.asarray(self.icp_anchor, dtype=float)
            c_st = self.state.feet[stance].world_assumed().centroid()
            c_new = foot.pose.apply(foot.sole.centroid())
            span = c_new - c_st
            denom = float(span @ span)
            lam = float((hold - c_st) @ span / denom) if denom > 1e-9 else 0.3
            lam = min(max(lam, 0.06), 0.6)
            cap = exp_cfg.max_duration + exp_cfg.settle_duration + 0.4
            ctx = _PhaseCtx("explore", t0, cap, _const_ref(hold, cap), stance=stance,
                            swing_foot=foot.name, step_index=k,
                            shares_from=shares_from,
                            shares_to={stance: 1.0 - lam, foot.name: lam},
                            share_ramp=EXPLORE_SHARE_RAMP,
                            explore_state=exp_state, explore_cfg=exp_cfg)
            self.icp_anchor = hold
        elif kind == "final_transfer":
            hold = self._final_ds_point()
            seg = _connect_transfer(self.icp_anchor, hold, hold, cfg.transfer_time,
                                    self.params.omega0)
            ctx = _PhaseCtx("transfer", t0, cfg.transfer_time, IcpReference((seg,), hold),
                            shares_from=shares_from, shares_to={"left": 0.5, "right": 0.5},
                            share_ramp=SHARE_RAMP_FRACTION * cfg.transfer_time)
            self.icp_anchor = hold
        elif kind == "hold":
            ctx = _PhaseCtx("hold", t0, cfg.final_hold, _const_ref(self.icp_anchor, cfg.final_hold),
                            shares_from=shares_from, shares_to={"left": 0.5, "right": 0.5},
                            share_ramp=0.3)
        else:
            raise RuntimeError(kind)
        self._phase = ctx
        self.state.phase = ctx.kind if ctx.kind != "final_transfer" else "transfer"
        self._rebuild_contacts()

    # ----- contacts and supports -------------------------------------------

    def _rebuild_contacts(self):
        contacts = {}
        self._pose_inv = {}
        for name in FOOT_ORDER:
            foot = self.state.feet[name]
            if not foot.loaded:
                continue
            pts = reduce_to_four_corners(foot.assumed_contact).vertices
            contacts[name] = FootContact(
                name=name, transform=foot.pose, points_sole=pts,
                mu=self.cfg.model.mu, F_z_prev=max(self.fz_prev[name], F_Z_FLOOR * 1.5),
            )
            self._pose_inv[name] = foot.pose.inverse()
        self._contacts = contacts
        pts = np.vstack([self.state.feet[n].world_assumed().vertices for n in contacts])
        self._support_assumed = convex_hull(pts, frame="world")
        cap_pts = [self.state.feet[n].world_true().vertices for n in contacts]
        ctx = self._phase
        if ctx is not None and ctx.kind in ("transfer", "swing") and ctx.step_index >= 0:
            cap_pts.append(self._expected_region_world(ctx.step_index).vertices)
        self._support_capture = convex_hull(np.vstack(cap_pts), frame="world")
        self._support_log_id = self.log.add_support(
            [self.state.feet[n].world_assumed() for n in contacts])
        # Stacked motion-task layout for this contact configuration: rows are
        # [flywheel return (2), flat-foot per loaded foot]; only the desired
        # vector and flat-foot weights change per tick.
        names = [n for n in FOOT_ORDER if n in contacts]
        n_v = 4 + len(names)
        J = np.zeros((2 + len(names), n_v))
        J[0, 2] = 1.0
        J[1, 3] = 1.0
        for i in range(len(names)):
            J[2 + i, 4 + i] = 1.0
        self._task_jac = J
        self._task_des = np.zeros(2 + len(names))
        self._task_w = np.ones(2 + len(names))
        self._contact_names = names

    # ----- touchdown ---------------------------------------------------------

    def _touchdown(self, k: int):
        step = self.cfg.footsteps[k]
        foot = self.state.feet[step.foot]
        err = self.rng.standard_normal(2) * self.cfg.placement_sigma
        pose = Transform2(step.yaw, np.asarray(step.position, dtype=float) + err)
        planned = Transform2(step.yaw, np.asarray(step.position, dtype=float))
        sole = FootholdPolygon(self.sole_verts, "sole")
        true_c = terrain_contact(sole, step.terrain, planned, pose)
        foot.pose = pose
        foot.loaded = True
        foot.load = 0.0
        foot.tilt_angle = 0.0
        foot.tilt_rate = 0.0
        foot.tilt_axis = None
        self.fz_prev[step.foot] = F_Z_FLOOR * 1.5
        self.log.add_event(self.state.t, "touchdown", foot=step.foot, step=k,
                           position=pose.translation, error=err)
        if true_c is None:
            self.outcome = {"status": "fell", "t": self.state.t,
                            "reason": "missed_foothold", "steps": self.steps_completed}
            return
        foot.true_contact = true_c
        if self.cfg.exploration.enabled:
            foot.assumed_contact = sole
        else:
            # Operator-supplied terrain knowledge when not exploring.
            foot.assumed_contact = true_c
        self.steps_completed += 1
        self.shares = {step.foot: 0.0, self._stance_name(k): 1.0}

    # ----- per-tick helpers --------------------------------------------------

    def _current_shares(self, t_phase: float) -> dict:
        ctx = self._phase
        if ctx.share_ramp <= 0:
            return dict(ctx.shares_to)
        a = min(t_phase / ctx.share_ramp, 1.0)
        out = {}
        for name in FOOT_ORDER:
            f0 = ctx.shares_from.get(name, 0.0)
            f1 = ctx.shares_to.get(name, 0.0)
            out[name] = (1 - a) * f0 + a * f1
        return out

    def _fall_check(self, icp_true):
        # Strided: falls develop over tens of milliseconds, the polygon
        # distance is not worth paying every 2 ms tick.
        self._fall_stride = (self._fall_stride + 1) % 5
        if self._fall_stride:
            return
        cfg = self.cfg
        d = self._support_capture.signed_distance(icp_true)
        limit = self.gains.flywheel_angle_limit
        saturated = limit <= 1e-9 or float(np.max(np.abs(self.state.fly_angle))) >= 0.95 * limit
        if d > cfg.fall_margin and saturated:
            self.fall_counter += 1
        else:
            self.fall_counter = 0
        hard = d > 2.5 * cfg.fall_margin or float(np.linalg.norm(self.state.comd)) > 3.0
        if self.fall_counter >= FALL_TICKS or hard:
            reason = "icp_divergence" if not hard else "icp_runaway"
            self.outcome = {"status": "fell", "t": self.state.t, "reason": reason,
                            "steps": self.steps_completed}

    # ----- main loop ---------------------------------------------------------

    def run(self):
        cfg = self.cfg
        dt = cfg.dt
        max_ticks = self.log.capacity - 1
        for _ in range(max_ticks):
            if self.outcome is not None:
                break
            self._tick(dt)
        if self.outcome is None:
            self.outcome = {"status": "fell", "t": self.state.t,
                            "reason": "timeout", "steps": self.steps_completed}
        return self.log, self.outcome

    def _tick(self, dt: float):
        cfg = self.cfg
        st = self.state
        ctx = self._phase
        t_phase = st.t - ctx.t0

        while self.pending_pushes and self.pending_pushes[0][0] <= st.t + 1e-12:
            _, imp = self.pending_pushes.pop(0)
            self.state = st = apply_push(st, imp, cfg.model.mass)
            self.log.add_event(st.t, "push", impulse=list(imp))
        if ctx.kind == "swing" and self._ms_pushes.get(ctx.step_index) is not None:
            if t_phase >= cfg.transfer_time + 0.5 * cfg.swing_time:
                imp = self._ms_pushes.pop(ctx.step_index)
                self.state = st = apply_push(st, imp, cfg.model.mass)
                self.log.add_event(st.t, "push", impulse=list(imp), mid_swing_step=ctx.step_index)

        sensors = sense(st, cfg.noise, self.rng, self.params, FOOT_ORDER)

        # Exploration update (consumes this tick's sensors, feeds this tick's QP).
        if ctx.kind == "explore":
            foot_name = ctx.swing_foot
            prev_crops = ctx.explore_state.crop_count
            exp_state, wp, update = explorer_step(
                ctx.explore_state, sensors["feet"][foot_name], ctx.explore_cfg, dt)
            ctx.explore_state = exp_state
            ctx.waypoint = wp
            foot = st.feet[foot_name]
            if exp_state.crop_count != prev_crops and exp_state.phase is ExplorePhase.PROBING:
                foot.assumed_contact = exp_state.assumed_foothold
                self._rebuild_contacts()
                self.log.add_event(st.t, "crop", foot=foot_name,
                                   area=exp_state.assumed_foothold.area())
            if update is not None:
                foot.assumed_contact = update
                self._rebuild_contacts()
                k = ctx.step_index
                terrain = cfg.footsteps[k].terrain
                self.log.exploration.append({
                    "step": k,
                    "foot": foot_name,
                    "duration": exp_state.probe_duration,
                    "crops": exp_state.crop_count,
                    "final_foothold": update.to_json(),
                    "waypoints": [[float(w[0]), float(w[1])] for w in exp_state.waypoints],
                    "history": [[float(t), [float(p[0]), float(p[1])], float(w)]
                                for (t, p, w) in exp_state.cop_history],
                    "terrain_kind": terrain.kind,
                })
                self.log.add_event(st.t, "exploration_done", foot=foot_name,
                                   duration=exp_state.probe_duration)

        # Controller: measured state -> desired momentum rate and CoP targets.
        com_m = sensors["com"]
        comd_m = sensors["comd"]
        icp_m = com_m + comd_m / self.params.omega0
        x_d_icp, xd_d_icp, _ = ctx.ref.evaluate(t_phase if ctx.kind != "swing"
                                                else (st.t - ctx.t0), self.params.omega0)
        cmp_d = cmp_control_law(icp_m, x_d_icp, xd_d_icp, self.params, self.gains)
        momentum_w = momentum_weight_schedule(icp_m, self._support_assumed, self.gains)
        h_dot = desired_linear_momentum_rate(com_m, cmp_d, self.params)

        feet_list = [self._contacts[n] for n in FOOT_ORDER if n in self._contacts]
        shares = self._current_shares(t_phase)

        cop_feet, cop_targets, cop_weights = [], [], []
        for fc in feet_list:
            if self.fz_prev[fc.name] <= F_Z_FLOOR:
                continue
            fc.F_z_prev = max(self.fz_prev[fc.name], F_Z_FLOOR * 1.5)
            foot = st.feet[fc.name]
            if ctx.kind == "explore" and fc.name == ctx.swing_foot and ctx.waypoint is not None:
                target_sole = ctx.waypoint
                weight = cfg.cop_weight_explore
            elif ctx.kind == "explore" and fc.name == ctx.stance:
                lam = shares.get(ctx.swing_foot, 0.0)
                wp = ctx.waypoint
                if wp is not None and lam > 0.02:
                    wp_world = st.feet[ctx.swing_foot].pose.apply(wp)
                    comp = (cmp_d - lam * wp_world) / max(1.0 - lam, 0.1)
                else:
                    comp = cmp_d
                target_sole = foot.assumed_contact.clamp(self._pose_inv[fc.name].apply(comp),
                                                         margin=COP_MARGIN)
                weight = cfg.cop_weight
            else:
                target_sole = foot.assumed_contact.clamp(self._pose_inv[fc.name].apply(cmp_d),
                                                         margin=COP_MARGIN)
                weight = cfg.cop_weight
            cop_feet.append(fc)
            cop_targets.append(target_sole)
            cop_weights.append(weight)
        cop_obj = assemble_cop_objective(cop_feet, cop_targets, weights=cop_weights)
        # Remap CoP rows onto the full rho vector when some feet carry no rows.
        if len(cop_feet) != len(feet_list) and cop_obj.P.size:
            n_rho = sum(f.n_rho for f in feet_list)
            P_full = np.zeros((cop_obj.P.shape[0], n_rho))
            col_of = {}
            col = 0
            for f in feet_list:
                col_of[f.name] = col
                col += f.n_rho
            src = 0
            row = 0
            for f in cop_feet:
                P_full[row:row + 2, col_of[f.name]:col_of[f.name] + f.n_rho] = \
                    cop_obj.P[row:row + 2, src:src + f.n_rho]
                src += f.n_rho
                row += 2
            cop_obj = replace(cop_obj, P=P_full)

        mg = cfg.model.mass * cfg.model.gravity
        rho_extra = None
        if len(feet_list) == 2:
            rows = np.zeros((1, feet_list[0].n_rho + feet_list[1].n_rho))
            rows[0, : feet_list[0].n_rho] = feet_list[0].world_force_map()[2]
            target = np.array([shares.get(feet_list[0].name, 0.5) * mg])
            rho_extra = (rows, target, np.array([cfg.load_share_weight / mg**2]))

        n_v = 4 + len(feet_list)
        des = self._task_des
        des[0:2] = (-self.gains.flywheel_return_kp * sensors["fly_angle"]
                    - self.gains.flywheel_return_kd * sensors["fly_rate"])
        for i, fc in enumerate(feet_list):
            foot = st.feet[fc.name]
            des[2 + i] = -FLAT_TASK_KP * foot.tilt_angle - FLAT_TASK_KD * foot.tilt_rate
            probing = ctx.kind == "explore" and fc.name == ctx.swing_foot
            self._task_w[2 + i] = 0.02 if probing else 1.0
        tasks = [MotionTask("stacked", self._task_jac, des, weight=self._task_w)]

        vdot_min = np.full(n_v, -cfg.model.com_accel_max)
        vdot_max = np.full(n_v, cfg.model.com_accel_max)
        limit = self.gains.flywheel_angle_limit
        a_max = self.gains.lunge_torque_limit / cfg.model.flywheel_inertia
        v_max = self.gains.flywheel_rate_limit
        for i in range(2):
            q = float(sensors["fly_angle"][i])
            v = float(sensors["fly_rate"][i])
            gap_hi = limit - q - v * dt - 0.5 * a_max * dt * dt
            gap_lo = q + limit + v * dt - 0.5 * a_max * dt * dt
            vb_hi = math.sqrt(2.0 * a_max * gap_hi) if gap_hi > 0 else 0.0
            vb_lo = -math.sqrt(2.0 * a_max * gap_lo) if gap_lo > 0 else 0.0
            hi = min(a_max, (v_max - v) / dt, (vb_hi - v) / dt,
                     2.0 * (limit - q - v * dt) / (dt * dt))
            lo = max(-a_max, (-v_max - v) / dt, (vb_lo - v) / dt,
                     2.0 * (-limit - q - v * dt) / (dt * dt))
            hi = min(max(hi, -a_max), a_max)
            lo = min(max(lo, -a_max), hi)
            vdot_max[2 + i] = hi
            vdot_min[2 + i] = lo
        vdot_min[4:] = -TILT_ACCEL_MAX
        vdot_max[4:] = TILT_ACCEL_MAX

        weights = replace(cfg.weights, momentum=momentum_w)
        problem = assemble_qp(
            com_m, cfg.model.mass, cfg.model.gravity, cfg.model.com_height,
            cfg.model.flywheel_inertia, feet_list, h_dot, tasks, cop_obj, weights,
            (vdot_min, vdot_max), rho_extra=rho_extra,
        )
        try:
            sol = solve_qp(problem, warm_start=self.warm_start)
            self.warm_start = sol.active_set
        except QpError:
            sol = solve_qp(problem)
            self.warm_start = sol.active_set
        if self.qp_dump is not None:
            self.qp_dump.append(problem, sol, st.t)

        feet_contacts = []
        for i, fc in enumerate(feet_list):
            lo_i, hi_i = problem.rho_slices[i]
            feet_contacts.append((st.feet[fc.name], fc, sol.rho[lo_i:hi_i]))

        new_state, phys = step_dynamics(
            st, sol, feet_contacts, self.params, cfg.model.flywheel_inertia, dt,
            tip_gain=cfg.model.tip_rate_gain, tip_cap=cfg.model.tip_rate_cap,
            fly_angle_limit=self.gains.flywheel_angle_limit,
        )
        for name, load in phys.per_foot_load.items():
            self.fz_prev[name] = load
        self.state = new_state
        self.state.phase = ctx.kind

        # Ground-truth log row; the capture point is recomputed inline here.
        icp_true = new_state.com + new_state.comd / self.params.omega0
        self.log.add(
            new_state.t, icp_true, x_d_icp, phys.cop_world, phys.cmp_world,
            new_state.com, new_state.comd, new_state.fly_angle, new_state.fly_rate,
            phys.fly_torque, phys.impulse, momentum_w,
            "transfer" if ctx.kind == "final_transfer" else ctx.kind,
            self._support_log_id,
        )

        self._fall_check(icp_true)
        if self.outcome is not None:
            return

        # Phase transitions.
        t_phase = new_state.t - ctx.t0
        if ctx.kind == "explore":
            if ctx.explore_state.phase is ExplorePhase.DONE or t_phase >= ctx.duration:
                self.shares = self._current_shares(t_phase)
                self._enter_next_phase()
        elif ctx.kind == "swing":
            if t_phase >= ctx.duration + self.cfg.transfer_time - 1e-12:
                self._touchdown(ctx.step_index)
                if self.outcome is None:
                    self._enter_next_phase()
        else:
            if t_phase >= ctx.duration - 1e-12:
                self.shares = self._current_shares(t_phase)
                self._enter_next_phase()


def run_scenario(cfg: ScenarioConfig, qp_dump=None):
    """Execute a scenario; returns (GroundReferenceLog, outcome dict)."""
    run = ScenarioRun(cfg)
    run.qp_dump = qp_dump
    return run.run()
