"""Capture-point balance layer for the reduced biped.

Ground-plane quantities are 2-vectors. The instantaneous capture point (ICP)
is x_com + xdot_com/omega0; its velocity is omega0*(x_icp - x_cmp), so the
centroidal moment pivot (CMP) steers it. Desired CMP positions translate into
a desired horizontal momentum rate for the whole-body optimization, and the
gap between CMP and CoP equals the centroidal torque scaled by m*g.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import FootholdPolygon


class NoFootsteps(ValueError):
    pass


@dataclass(frozen=True)
class LipmParams:
    """Point-mass pendulum constants: mass (kg), gravity (m/s^2), CoM height (m)."""

    m: float = 90.0
    g: float = 9.81
    z: float = 0.9

    def __post_init__(self):
        if self.m <= 0 or self.g <= 0 or self.z <= 0:
            raise ValueError("mass, gravity and height must be positive")

    @property
    def omega0(self) -> float:
        return math.sqrt(self.g / self.z)


@dataclass(frozen=True)
class BalanceGains:
    k_p: float = 2.0
    momentum_weight_nominal: float = 10.0
    momentum_weight_max: float = 500.0
    edge_margin: float = 0.03
    lunge_torque_limit: float = 100.0
    flywheel_angle_limit: float = 0.6
    flywheel_rate_limit: float = 4.0
    flywheel_return_kp: float = 9.0
    flywheel_return_kd: float = 6.0

    def __post_init__(self):
        if self.k_p < 0:
            raise ValueError("k_p must be >= 0")
        if self.momentum_weight_max < self.momentum_weight_nominal:
            raise ValueError("momentum_weight_max must be >= nominal")
        if self.edge_margin <= 0:
            raise ValueError("edge_margin must be positive")


def compute_icp(x_com, xdot_com, p: LipmParams) -> np.ndarray:
    return np.asarray(x_com, dtype=float) + np.asarray(xdot_com, dtype=float) / p.omega0


def icp_dynamics(x_icp, x_cmp, p: LipmParams) -> np.ndarray:
    return p.omega0 * (np.asarray(x_icp, dtype=float) - np.asarray(x_cmp, dtype=float))


def cmp_control_law(x_icp, x_d_icp, xdot_d_icp, p: LipmParams, gains: BalanceGains) -> np.ndarray:
    """Desired CMP from ICP tracking error plus reference feedforward."""
    x_icp = np.asarray(x_icp, dtype=float)
    return x_icp - np.asarray(xdot_d_icp, dtype=float) / p.omega0 + gains.k_p * (
        x_icp - np.asarray(x_d_icp, dtype=float)
    )


def desired_linear_momentum_rate(x_com, x_d_cmp, p: LipmParams) -> np.ndarray:
    """Horizontal momentum rate (N) that places the CMP at x_d_cmp."""
    return (p.m * p.g / p.z) * (np.asarray(x_com, dtype=float) - np.asarray(x_d_cmp, dtype=float))


def angular_momentum_rate(x_cmp, x_cop, p: LipmParams) -> np.ndarray:
    """Horizontal centroidal torque, in ground-plane components: the 2-vector
    r with r = m*g*(x_cmp - x_cop). The actual moment vector about the CoM is
    (tau_x, tau_y) = (-r_y, r_x); see cmp_offset_to_torque."""
    return p.m * p.g * (np.asarray(x_cmp, dtype=float) - np.asarray(x_cop, dtype=float))


def cmp_offset_to_torque(rate2) -> np.ndarray:
    """Map the ground-plane angular-momentum-rate representation to the
    physical horizontal moment (tau_x, tau_y) about the CoM."""
    r = np.asarray(rate2, dtype=float)
    return np.array([-r[1], r[0]])


def torque_to_cmp_offset(tau2) -> np.ndarray:
    t = np.asarray(tau2, dtype=float)
    return np.array([t[1], -t[0]])


@dataclass(frozen=True)
class IcpSegment:
    """One reference segment: the CMP moves linearly from cmp_start to cmp_end
    over `duration` (constant when the two coincide). The ICP solution along a
    linearly moving CMP stays closed-form, so evaluation is exact."""

    duration: float
    cmp_start: np.ndarray
    cmp_end: np.ndarray
    icp_start: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "cmp_start", np.asarray(self.cmp_start, dtype=float).reshape(2))
        object.__setattr__(self, "cmp_end", np.asarray(self.cmp_end, dtype=float).reshape(2))
        object.__setattr__(self, "icp_start", np.asarray(self.icp_start, dtype=float).reshape(2))
        if self.duration <= 0:
            raise ValueError("segment duration must be positive")

    def cmp_rate(self) -> np.ndarray:
        return (self.cmp_end - self.cmp_start) / self.duration

    def cmp_at(self, t: float) -> np.ndarray:
        s = min(max(t / self.duration, 0.0), 1.0)
        return self.cmp_start + s * (self.cmp_end - self.cmp_start)

    def icp_at(self, t: float, omega0: float) -> np.ndarray:
        cdot = self.cmp_rate()
        k = self.icp_start - self.cmp_start - cdot / omega0
        return self.cmp_at(t) + cdot / omega0 + k * math.exp(omega0 * t)

    def icp_rate_at(self, t: float, omega0: float) -> np.ndarray:
        cdot = self.cmp_rate()
        k = self.icp_start - self.cmp_start - cdot / omega0
        return cdot + omega0 * k * math.exp(omega0 * t)

    def icp_end(self, omega0: float) -> np.ndarray:
        return self.icp_at(self.duration, omega0)

    @staticmethod
    def from_endpoint(duration, cmp_start, cmp_end, icp_end, omega0) -> "IcpSegment":
        """Backward recursion: the icp_start that reaches icp_end at t=duration."""
        cmp_start = np.asarray(cmp_start, dtype=float)
        cmp_end = np.asarray(cmp_end, dtype=float)
        cdot = (cmp_end - cmp_start) / duration
        k = (np.asarray(icp_end, dtype=float) - cmp_end - cdot / omega0) * math.exp(-omega0 * duration)
        return IcpSegment(duration, cmp_start, cmp_end, cmp_start + cdot / omega0 + k)

    def to_json(self) -> dict:
        return {
            "duration": self.duration,
            "cmp_start": self.cmp_start.tolist(),
            "cmp_end": self.cmp_end.tolist(),
            "icp_start": self.icp_start.tolist(),
        }


@dataclass(frozen=True)
class IcpReference:
    segments: tuple
    final_icp: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        object.__setattr__(self, "final_icp", np.asarray(self.final_icp, dtype=float).reshape(2))

    @property
    def total_duration(self) -> float:
        return sum(s.duration for s in self.segments)

    def evaluate(self, t: float, omega0: float):
        """(x_d_icp, xdot_d_icp, cmp_ref) at time t; holds the final ICP after the end."""
        rem = t
        for seg in self.segments:
            if rem <= seg.duration:
                return seg.icp_at(rem, omega0), seg.icp_rate_at(rem, omega0), seg.cmp_at(rem)
            rem -= seg.duration
        return self.final_icp.copy(), np.zeros(2), self.final_icp.copy()

    def to_json(self) -> dict:
        return {"segments": [s.to_json() for s in self.segments], "final_icp": self.final_icp.tolist()}


def build_icp_reference(
    footsteps,
    swing_times,
    transfer_times,
    p: LipmParams,
    final_icp=None,
    start_cmp=None,
) -> IcpReference:
    """Reference over a footstep plan: per step, an optional double-support
    transfer segment (CMP moving linearly onto the stance centroid) followed by
    a constant-CMP swing segment at the centroid. ICP values come from backward
    recursion from final_icp (default: the last centroid), so the reference is
    continuous and satisfies the ICP dynamics exactly.

    footsteps: list of (FootholdPolygon, centroid) in a common frame.
    """
    if not footsteps:
        raise NoFootsteps("footstep plan is empty")
    if len(swing_times) != len(footsteps):
        raise ValueError("need one swing time per footstep")
    if transfer_times and len(transfer_times) != len(footsteps):
        raise ValueError("transfer_times must be empty or match footsteps")
    centroids = [np.asarray(c, dtype=float).reshape(2) for _, c in footsteps]
    if final_icp is None:
        final_icp = centroids[-1]
    final_icp = np.asarray(final_icp, dtype=float).reshape(2)

    # Forward list of (duration, cmp_start, cmp_end).
    spans = []
    prev = np.asarray(start_cmp, dtype=float).reshape(2) if start_cmp is not None else centroids[0]
    for k, c in enumerate(centroids):
        if transfer_times and transfer_times[k] > 0:
            spans.append((float(transfer_times[k]), prev, c))
        if swing_times[k] <= 0:
            raise ValueError("swing times must be positive")
        spans.append((float(swing_times[k]), c, c))
        prev = c

    segments = []
    icp_end = final_icp
    for duration, c0, c1 in reversed(spans):
        seg = IcpSegment.from_endpoint(duration, c0, c1, icp_end, p.omega0)
        segments.append(seg)
        icp_end = seg.icp_start
    segments.reverse()
    return IcpReference(tuple(segments), final_icp)


def adjust_final_icp(
    stance: FootholdPolygon,
    upcoming: FootholdPolygon,
    nominal_final_icp,
    stance_centroid,
    s_min: float = 0.2,
) -> np.ndarray:
    """Pull the end-of-step ICP toward the stance foot when the upcoming
    foothold is small relative to the stance one; keep the nominal target when
    stepping from a poor foothold to a good one."""
    nominal = np.asarray(nominal_final_icp, dtype=float).reshape(2)
    c = np.asarray(stance_centroid, dtype=float).reshape(2)
    a_st = stance.area()
    a_up = upcoming.area()
    if a_st <= 1e-12:
        s = 1.0
    else:
        s = min(max(a_up / a_st, s_min), 1.0)
    return c + s * (nominal - c)


def momentum_weight_schedule(x_icp, support: FootholdPolygon, gains: BalanceGains) -> float:
    """Momentum-objective weight: nominal deep inside the support, ramping
    linearly to the max as the ICP approaches and exits the boundary."""
    sd = support.signed_distance(np.asarray(x_icp, dtype=float))
    t = (sd + gains.edge_margin) / (2.0 * gains.edge_margin)
    t = min(max(t, 0.0), 1.0)
    return gains.momentum_weight_nominal + t * (gains.momentum_weight_max - gains.momentum_weight_nominal)
