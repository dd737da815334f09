"""Scenario configuration: deterministic walking experiments as data.

A scenario fixes the reduced-model constants, controller gains, the footstep
plan with per-step true contact regions (full sole, a line, or a small point
stone), optional pushes, sensor noise, and the RNG seed. Scenarios load from
TOML and can be emitted back, so sweeps and tests share one format.
"""

from __future__ import annotations

import io
import math
import sys
from dataclasses import dataclass, field

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .balance import BalanceGains
from .explorer import ExplorerConfig, PriorGeometry
from .qp import QpWeights


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    mass: float = 90.0
    gravity: float = 9.81
    com_height: float = 0.9
    flywheel_inertia: float = 10.0
    sole_length: float = 0.26
    sole_width: float = 0.13
    stance_width: float = 0.22
    mu: float = 0.9
    tip_rate_gain: float = 5.0      # rad/s per N*m of uncarried moment
    tip_rate_cap: float = 2.0
    com_accel_max: float = 50.0


@dataclass(frozen=True)
class NoiseConfig:
    cop_sigma: float = 0.0
    gyro_sigma: float = 0.0
    com_sigma: float = 0.0

    def scaled(self, factor: float) -> "NoiseConfig":
        return NoiseConfig(self.cop_sigma * factor, self.gyro_sigma * factor, self.com_sigma * factor)


NOMINAL_NOISE = NoiseConfig(cop_sigma=0.003, gyro_sigma=0.01, com_sigma=0.002)


@dataclass(frozen=True)
class TerrainSpec:
    """True contact region for one footstep, in the planned sole frame."""

    kind: str = "full"              # full | line | point
    angle: float = 0.0              # line orientation (rad)
    offset: float = 0.0             # line offset perpendicular to its direction (m)
    position: tuple = (0.0, 0.0)    # point-stone center (m)
    size: float = 0.02              # point-stone edge length (m)

    def __post_init__(self):
        if self.kind not in ("full", "line", "point"):
            raise ScenarioError(f"terrain kind '{self.kind}' not in full|line|point")


@dataclass(frozen=True)
class FootstepSpec:
    foot: str                       # left | right
    position: tuple                 # world (x, y) of the sole center
    yaw: float = 0.0
    terrain: TerrainSpec = field(default_factory=TerrainSpec)

    def __post_init__(self):
        if self.foot not in ("left", "right"):
            raise ScenarioError(f"footstep foot '{self.foot}' not left|right")


@dataclass(frozen=True)
class ExplorationConfig:
    enabled: bool = True
    prior: str = "auto"             # none | line | point | auto (use terrain kind)
    explorer: ExplorerConfig = field(default_factory=ExplorerConfig)
    load_share: float = 0.3         # weight fraction on the foot being explored

    def prior_for(self, terrain: TerrainSpec) -> PriorGeometry:
        if self.prior == "auto":
            return {"full": PriorGeometry.NONE, "line": PriorGeometry.LINE,
                    "point": PriorGeometry.POINT}[terrain.kind]
        return PriorGeometry(self.prior)


@dataclass(frozen=True)
class ScenarioConfig:
    footsteps: tuple
    dt: float = 0.002
    seed: int = 0
    swing_time: float = 0.6
    transfer_time: float = 0.7
    settle_time: float = 0.4
    final_hold: float = 1.0
    placement_sigma: float = 0.0
    model: ModelConfig = field(default_factory=ModelConfig)
    gains: BalanceGains = field(default_factory=BalanceGains)
    weights: QpWeights = field(default_factory=QpWeights)
    cop_weight: float = 5.0
    cop_weight_explore: float = 50.0
    load_share_weight: float = 2.0
    exploration: ExplorationConfig = field(default_factory=ExplorationConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    pushes: tuple = ()              # (time, (ix, iy)) impulses in N*s
    mid_swing_pushes: tuple = ()    # (step_index, (ix, iy)): applied mid-swing
    fall_margin: float = 0.15
    end_after_exploration: bool = False
    name: str = "scenario"

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not (1e-4 < self.dt <= 0.01):
            raise ScenarioError(f"dt={self.dt} outside (1e-4, 0.01]")
        if self.swing_time <= 0:
            raise ScenarioError("swing_time must be positive")
        if self.transfer_time <= 0:
            raise ScenarioError("transfer_time must be positive")
        if not self.footsteps:
            raise ScenarioError("footsteps must not be empty")
        for k, s in enumerate(self.footsteps):
            if not isinstance(s, FootstepSpec):
                raise ScenarioError(f"footsteps[{k}] is not a FootstepSpec")
        for t, imp in self.pushes:
            if t < 0 or len(imp) != 2:
                raise ScenarioError("pushes must be (time >= 0, (ix, iy))")
        for step, imp in self.mid_swing_pushes:
            if not (0 <= step < len(self.footsteps)) or len(imp) != 2:
                raise ScenarioError("mid_swing_pushes must be (step index, (ix, iy))")

    def sole_polygon_vertices(self) -> np.ndarray:
        hl, hw = self.model.sole_length / 2, self.model.sole_width / 2
        return np.array([[-hl, -hw], [hl, -hw], [hl, hw], [-hl, hw]])

    def initial_foot_positions(self) -> dict:
        w = self.model.stance_width / 2
        return {"left": np.array([0.0, w]), "right": np.array([0.0, -w])}


def _get(table: dict, key: str, default):
    return table.get(key, default)


def load_scenario(path) -> ScenarioConfig:
    with open(path, "rb") as fh:
        try:
            raw = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ScenarioError(f"invalid TOML in {path}: {exc}") from exc
    return scenario_from_dict(raw)


def scenario_from_dict(raw: dict) -> ScenarioConfig:
    sc = raw.get("scenario", {})
    model = ModelConfig(**raw.get("model", {}))
    gains_tbl = raw.get("gains", {})
    gains = BalanceGains(**gains_tbl)
    weights = QpWeights(**raw.get("qp", {}))
    noise = NoiseConfig(**raw.get("noise", {}))

    exp_tbl = dict(raw.get("exploration", {}))
    enabled = exp_tbl.pop("enabled", True)
    prior = exp_tbl.pop("prior", "auto")
    load_share = exp_tbl.pop("load_share", 0.3)
    if "theta_threshold_deg" in exp_tbl:
        exp_tbl["theta_threshold"] = math.radians(exp_tbl.pop("theta_threshold_deg"))
    explorer = ExplorerConfig(**exp_tbl)
    exploration = ExplorationConfig(enabled=enabled, prior=prior, explorer=explorer,
                                    load_share=load_share)

    steps = []
    for k, st in enumerate(raw.get("steps", [])):
        st = dict(st)
        terrain = TerrainSpec(
            kind=st.pop("contact", "full"),
            angle=math.radians(st.pop("contact_angle_deg", 0.0)),
            offset=st.pop("contact_offset", 0.0),
            position=tuple(st.pop("contact_position", (0.0, 0.0))),
            size=st.pop("contact_size", 0.02),
        )
        try:
            steps.append(
                FootstepSpec(
                    foot=st.pop("foot"),
                    position=tuple(st.pop("position")),
                    yaw=math.radians(st.pop("yaw_deg", 0.0)),
                    terrain=terrain,
                )
            )
        except KeyError as exc:
            raise ScenarioError(f"steps[{k}] missing field {exc}") from exc

    pushes = tuple((p["time"], tuple(p["impulse"])) for p in raw.get("pushes", []))
    ms_pushes = tuple((int(p["step"]), tuple(p["impulse"])) for p in raw.get("mid_swing_pushes", []))

    return ScenarioConfig(
        footsteps=tuple(steps),
        dt=_get(sc, "dt", 0.002),
        seed=int(_get(sc, "seed", 0)),
        swing_time=_get(sc, "swing_time", 0.6),
        transfer_time=_get(sc, "transfer_time", 0.7),
        settle_time=_get(sc, "settle_time", 0.4),
        final_hold=_get(sc, "final_hold", 1.0),
        placement_sigma=_get(sc, "placement_sigma", 0.0),
        fall_margin=_get(sc, "fall_margin", 0.15),
        end_after_exploration=_get(sc, "end_after_exploration", False),
        name=_get(sc, "name", "scenario"),
        model=model,
        gains=gains,
        weights=weights,
        cop_weight=_get(sc, "cop_weight", 5.0),
        cop_weight_explore=_get(sc, "cop_weight_explore", 50.0),
        load_share_weight=_get(sc, "load_share_weight", 2.0),
        exploration=exploration,
        noise=noise,
        pushes=pushes,
        mid_swing_pushes=ms_pushes,
    )


def scenario_to_toml(cfg: ScenarioConfig) -> str:
    """Serialize a scenario back to TOML (stable field order)."""
    out = io.StringIO()

    def emit(table, pairs):
        out.write(f"[{table}]\n")
        for k, v in pairs:
            out.write(f"{k} = {_toml_value(v)}\n")
        out.write("\n")

    emit("scenario", [
        ("name", cfg.name), ("dt", cfg.dt), ("seed", cfg.seed),
        ("swing_time", cfg.swing_time), ("transfer_time", cfg.transfer_time),
        ("settle_time", cfg.settle_time), ("final_hold", cfg.final_hold),
        ("placement_sigma", cfg.placement_sigma), ("fall_margin", cfg.fall_margin),
        ("end_after_exploration", cfg.end_after_exploration),
        ("cop_weight", cfg.cop_weight), ("cop_weight_explore", cfg.cop_weight_explore),
        ("load_share_weight", cfg.load_share_weight),
    ])
    m = cfg.model
    emit("model", [(k, getattr(m, k)) for k in (
        "mass", "gravity", "com_height", "flywheel_inertia", "sole_length",
        "sole_width", "stance_width", "mu", "tip_rate_gain", "tip_rate_cap",
        "com_accel_max")])
    g = cfg.gains
    emit("gains", [(k, getattr(g, k)) for k in (
        "k_p", "momentum_weight_nominal", "momentum_weight_max", "edge_margin",
        "lunge_torque_limit", "flywheel_angle_limit", "flywheel_rate_limit",
        "flywheel_return_kp", "flywheel_return_kd")])
    w = cfg.weights
    emit("qp", [("momentum", w.momentum), ("rho_reg", w.rho_reg), ("vdot_reg", w.vdot_reg)])
    n = cfg.noise
    emit("noise", [("cop_sigma", n.cop_sigma), ("gyro_sigma", n.gyro_sigma),
                   ("com_sigma", n.com_sigma)])
    e = cfg.exploration
    ex = e.explorer
    emit("exploration", [
        ("enabled", e.enabled), ("prior", e.prior), ("load_share", e.load_share),
        ("omega_threshold", ex.omega_threshold),
        ("theta_threshold_deg", math.degrees(ex.theta_threshold)),
        ("waypoint_dwell", ex.waypoint_dwell),
        ("history_weight_decay", ex.history_weight_decay),
        ("max_duration", ex.max_duration),
    ])
    for t, imp in cfg.pushes:
        out.write("[[pushes]]\n")
        out.write(f"time = {_toml_value(t)}\n")
        out.write(f"impulse = [{imp[0]!r}, {imp[1]!r}]\n\n")
    for step, imp in cfg.mid_swing_pushes:
        out.write("[[mid_swing_pushes]]\n")
        out.write(f"step = {int(step)}\n")
        out.write(f"impulse = [{imp[0]!r}, {imp[1]!r}]\n\n")
    for s in cfg.footsteps:
        out.write("[[steps]]\n")
        out.write(f'foot = "{s.foot}"\n')
        out.write(f"position = [{s.position[0]!r}, {s.position[1]!r}]\n")
        out.write(f"yaw_deg = {math.degrees(s.yaw)!r}\n")
        t = s.terrain
        out.write(f'contact = "{t.kind}"\n')
        if t.kind == "line":
            out.write(f"contact_angle_deg = {math.degrees(t.angle)!r}\n")
            out.write(f"contact_offset = {t.offset!r}\n")
        elif t.kind == "point":
            out.write(f"contact_position = [{t.position[0]!r}, {t.position[1]!r}]\n")
            out.write(f"contact_size = {t.size!r}\n")
        out.write("\n")
    return out.getvalue()


def _toml_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, float):
        return repr(float(v))
    if isinstance(v, str):
        return f'"{v}"'
    raise ScenarioError(f"cannot serialize {v!r} to TOML")


def alternating_plan(n_steps, step_length=0.22, stance_width=0.22, first="left",
                     terrains=None, start_x=0.22):
    """Footstep plan walking +x, feet alternating sides."""
    steps = []
    foot = first
    x = start_x
    for k in range(n_steps):
        y = stance_width / 2 if foot == "left" else -stance_width / 2
        terrain = terrains[k] if terrains else TerrainSpec()
        steps.append(FootstepSpec(foot=foot, position=(x, y), terrain=terrain))
        foot = "right" if foot == "left" else "left"
        x += step_length
    return tuple(steps)


def flat_walk_scenario(n_steps=4, seed=0, noise=NoiseConfig(), **kw) -> ScenarioConfig:
    return ScenarioConfig(
        footsteps=alternating_plan(n_steps),
        seed=seed,
        noise=noise,
        exploration=ExplorationConfig(enabled=False),
        name="flat_walk",
        **kw,
    )


def line_stones_scenario(n_steps=4, angles_deg=(20.0, -30.0, 10.0, -15.0), seed=0,
                         noise=NOMINAL_NOISE, placement_sigma=0.01, exploration=True,
                         pushes=(), **kw) -> ScenarioConfig:
    terrains = [TerrainSpec(kind="line", angle=math.radians(angles_deg[k % len(angles_deg)]))
                for k in range(n_steps)]
    return ScenarioConfig(
        footsteps=alternating_plan(n_steps, terrains=terrains),
        seed=seed,
        noise=noise,
        placement_sigma=placement_sigma,
        exploration=ExplorationConfig(enabled=exploration, prior="auto"),
        pushes=tuple(pushes),
        name="line_stones",
        **kw,
    )


def point_stone_scenario(n_steps=6, seed=0, noise=NoiseConfig(), stone_size=0.02,
                         placement_sigma=0.0, exploration=True, **kw) -> ScenarioConfig:
    """Full and small point footholds alternating; stones 2 cm x 2 cm."""
    terrains = []
    for k in range(n_steps):
        if k % 2 == 1:
            terrains.append(TerrainSpec(kind="point", size=stone_size))
        else:
            terrains.append(TerrainSpec(kind="full"))
    return ScenarioConfig(
        footsteps=alternating_plan(n_steps, terrains=terrains),
        seed=seed,
        noise=noise,
        placement_sigma=placement_sigma,
        exploration=ExplorationConfig(enabled=exploration, prior="auto"),
        name="point_stones",
        **kw,
    )


def single_step_exploration_scenario(terrain: TerrainSpec, seed=0, noise=NOMINAL_NOISE,
                                     placement_sigma=0.01, **kw) -> ScenarioConfig:
    kw.setdefault("settle_time", 0.15)
    kw.setdefault("transfer_time", 0.45)
    kw.setdefault("swing_time", 0.35)
    kw.setdefault("end_after_exploration", True)
    steps = alternating_plan(1, terrains=[terrain])
    return ScenarioConfig(
        footsteps=steps,
        seed=seed,
        noise=noise,
        placement_sigma=placement_sigma,
        exploration=ExplorationConfig(enabled=True, prior="auto"),
        name="single_step_exploration",
        **kw,
    )
