"""Reduced-order biped balance and walking on partial footholds."""

from .balance import (
    BalanceGains,
    IcpReference,
    IcpSegment,
    LipmParams,
    adjust_final_icp,
    angular_momentum_rate,
    build_icp_reference,
    cmp_control_law,
    compute_icp,
    desired_linear_momentum_rate,
    icp_dynamics,
    momentum_weight_schedule,
)
from .explorer import (
    ExplorationState,
    ExplorerConfig,
    PriorGeometry,
    RotationDetection,
    apply_rotation_crop,
    detect_rotation_geometric,
    detect_rotation_velocity,
    estimate_from_history,
    explorer_step,
    plan_waypoints,
    start_exploration,
)
from .geometry import (
    FootholdPolygon,
    Line2,
    Plane3,
    Transform2,
    convex_hull,
    crop_polygon,
    fit_line_weighted,
    plane_intersection,
    reduce_to_four_corners,
)
from .qp import (
    CopObjective,
    FootContact,
    MotionTask,
    QpProblem,
    QpSolution,
    QpWeights,
    acceleration_bounds,
    assemble_cop_objective,
    assemble_qp,
    contact_basis,
    solve_qp,
)
from .runner import run_scenario
from .scenario import (
    ScenarioConfig,
    ScenarioError,
    TerrainSpec,
    flat_walk_scenario,
    line_stones_scenario,
    load_scenario,
    point_stone_scenario,
    scenario_to_toml,
    single_step_exploration_scenario,
)
from .sim import ReducedBipedState, apply_push, sense, step_dynamics

__version__ = "0.1.0"
