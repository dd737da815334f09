"""Momentum-based whole-body QP for the reduced biped.

The model is a point mass at constant height z with a two-axis flywheel and a
tilt freedom per loaded foot. Generalized accelerations are
``vdot = [com_ddx, com_ddy, fly_a1, fly_a2, tilt_0, ...]``; contact forces are
non-negative magnitudes ``rho`` along four friction-pyramid basis vectors per
contact point. Each solve minimizes weighted soft objectives (momentum,
motion tasks, contact-force/CoP targets, and regularizers) subject to the
Newton-Euler equality of the reduced model and box bounds.

Angular quantities use ground-plane components: a centroidal moment tau maps
to (tau_y, -tau_x), which is the direction the CMP shifts away from the CoP.
The dynamics rows are [lin x, lin y, lin z, ang 1, ang 2]; the vertical row is
an exact constraint (constant CoM height), the angular rows couple contact
moments to the flywheel, and only the two linear rows carry momentum cost.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import Transform2

N_DYN_ROWS = 5
F_Z_FLOOR = 10.0

# Selection matrix picking the horizontal sole torques; scaled by 1/F_z it
# yields the local CoP. Wrenches are torque-first: [tx, ty, tz, fx, fy, fz].
S_SELECT = np.array(
    [
        [0.0, -1.0, 0.0, 0.0, 0.0, 0.0],
        [1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    ]
)


def _chol_inverse_factor(A):
    """Inverse of the lower Cholesky factor of an SPD matrix, or None when the
    factorization fails. Inverting the triangular factor (condition sqrt of
    the matrix) keeps the applied inverse backward-stable enough for the
    refinement loop even at extreme weight ratios."""
    try:
        L = np.linalg.cholesky(A)
        return np.linalg.inv(L)
    except np.linalg.LinAlgError:
        return None


class QpError(RuntimeError):
    pass


class QpInfeasible(QpError):
    pass


class QpMaxIterations(QpError):
    pass


class UnloadedFoot(ValueError):
    pass


def contact_basis(contact_normal, mu: float) -> np.ndarray:
    """Four unit vectors at angle atan(mu) from the normal, 90 deg apart in
    azimuth; their cone is the inscribed friction pyramid."""
    if mu <= 0:
        raise ValueError("friction coefficient must be positive")
    n = np.asarray(contact_normal, dtype=float).reshape(3)
    n = n / np.linalg.norm(n)
    ref_idx = int(np.argmin(np.abs(n)))
    e = np.zeros(3)
    e[ref_idx] = 1.0
    t1 = e - (e @ n) * n
    t1 /= np.linalg.norm(t1)
    t2 = np.cross(n, t1)
    scale = 1.0 / math.sqrt(1.0 + mu * mu)
    return np.stack([scale * (n + mu * t) for t in (t1, t2, -t1, -t2)])


@dataclass
class FootContact:
    """One loaded foot: contact corners in its sole frame plus its world pose.

    F_z_prev is the previous-tick vertical force used to linearize the CoP
    map. rho_scale inflates the force regularizer on this foot (used to bias
    load away from a foot, e.g. late in a weight transfer).
    """

    name: str
    transform: Transform2
    points_sole: np.ndarray
    mu: float = 0.9
    F_z_prev: float = F_Z_FLOOR
    rho_scale: float = 1.0

    def __post_init__(self):
        self.points_sole = np.asarray(self.points_sole, dtype=float).reshape(-1, 2)
        self._basis_sole = contact_basis(np.array([0.0, 0.0, 1.0]), self.mu)
        yaw_rot = self.transform.rotation
        b = self._basis_sole.copy()
        b[:, :2] = b[:, :2] @ yaw_rot.T
        self._basis_world = b
        # Cache the per-rho expansions; they are static for one contact
        # geometry and the assembly runs every control tick.
        n_pts = self.points_sole.shape[0]
        k = 4 * n_pts
        q = np.repeat(self.points_sole, 4, axis=0)
        beta_s = np.tile(self._basis_sole, (n_pts, 1))
        sole_map = np.zeros((6, k))
        sole_map[0] = q[:, 1] * beta_s[:, 2]
        sole_map[1] = -q[:, 0] * beta_s[:, 2]
        sole_map[2] = q[:, 0] * beta_s[:, 1] - q[:, 1] * beta_s[:, 0]
        sole_map[3:] = beta_s.T
        self._sole_map = sole_map
        self._pw = np.repeat(self.transform.apply_many(self.points_sole), 4, axis=0)
        self._beta_w = np.tile(self._basis_world, (n_pts, 1))

    @property
    def n_rho(self) -> int:
        return 4 * self.points_sole.shape[0]

    def sole_wrench_map(self) -> np.ndarray:
        """6 x n_rho map from rho to the wrench at the sole origin (sole frame,
        torque-first)."""
        return self._sole_map

    def world_points(self) -> np.ndarray:
        return self.transform.apply_many(self.points_sole)

    def world_force_map(self) -> np.ndarray:
        """3 x n_rho map from rho to the world contact force."""
        return self._beta_w.T

    def centroidal_map(self, com_xy, z: float) -> np.ndarray:
        """5 x n_rho map from rho to [fx, fy, fz, ang1, ang2] about the CoM."""
        beta = self._beta_w
        rx = self._pw[:, 0] - com_xy[0]
        ry = self._pw[:, 1] - com_xy[1]
        out = np.zeros((N_DYN_ROWS, self._pw.shape[0]))
        out[0:3] = beta.T
        out[3] = -z * beta[:, 0] - rx * beta[:, 2]
        out[4] = -z * beta[:, 1] - ry * beta[:, 2]
        return out


@dataclass
class CopObjective:
    """Assembled CoP objective: P maps global rho to stacked per-foot local
    CoPs using previous-tick vertical forces; r stacks the desired CoPs."""

    P: np.ndarray
    r: np.ndarray
    weights: np.ndarray
    foot_names: tuple


def assemble_cop_objective(feet, desired_cops, F_z_prev=None, weights=None) -> CopObjective:
    """Per-foot CoP rows P_f = S * Q_f / F_z_prev, stacked block-diagonally.

    desired_cops are sole-frame targets, one per foot. Feet whose previous
    vertical force is at/below the floor have no defined CoP: UnloadedFoot.
    """
    if not feet:
        return CopObjective(np.zeros((0, 0)), np.zeros(0), np.zeros(0), ())
    n_rho = sum(f.n_rho for f in feet)
    fz = [f.F_z_prev for f in feet] if F_z_prev is None else list(F_z_prev)
    w = [5.0] * len(feet) if weights is None else list(weights)
    P = np.zeros((2 * len(feet), n_rho))
    r = np.zeros(2 * len(feet))
    wdiag = np.zeros(2 * len(feet))
    col = 0
    for i, (foot, cop_d) in enumerate(zip(feet, desired_cops)):
        if fz[i] <= F_Z_FLOOR:
            raise UnloadedFoot(f"foot '{foot.name}' vertical force {fz[i]:.1f} N at/below floor")
        Pf = (S_SELECT @ foot.sole_wrench_map()) / fz[i]
        P[2 * i : 2 * i + 2, col : col + foot.n_rho] = Pf
        r[2 * i : 2 * i + 2] = np.asarray(cop_d, dtype=float).reshape(2)
        wdiag[2 * i : 2 * i + 2] = w[i]
        col += foot.n_rho
    return CopObjective(P, r, wdiag, tuple(f.name for f in feet))


@dataclass
class MotionTask:
    """Soft acceleration task over a subset of generalized accelerations.
    weight may be a scalar or one value per task row."""

    name: str
    jacobian: np.ndarray
    desired: np.ndarray
    weight: object = 1.0

    def __post_init__(self):
        self.jacobian = np.atleast_2d(np.asarray(self.jacobian, dtype=float))
        self.desired = np.atleast_1d(np.asarray(self.desired, dtype=float))

    def weight_rows(self) -> np.ndarray:
        w = np.asarray(self.weight, dtype=float)
        if w.ndim == 0:
            return np.full(self.jacobian.shape[0], float(w))
        return w.reshape(self.jacobian.shape[0])


@dataclass
class QpWeights:
    momentum: float = 10.0
    rho_reg: float = 1e-5
    vdot_reg: float = 1e-4


@dataclass
class QpProblem:
    """One tick of the extended optimization; see module docstring for layout."""

    A: np.ndarray                  # momentum matrix, N_DYN_ROWS x n_v
    adot_v: np.ndarray             # velocity-product bias (zero for this model)
    b: np.ndarray                  # linear momentum-rate target (2,)
    C_h: np.ndarray                # weights on the two linear momentum rows
    J: np.ndarray
    p: np.ndarray
    C_J: np.ndarray
    P: np.ndarray
    r: np.ndarray
    C_P: np.ndarray
    Q_com: np.ndarray              # rho -> centroidal wrench rows
    W_g: np.ndarray
    W_ext: tuple
    rho_min: np.ndarray
    vdot_min: np.ndarray
    vdot_max: np.ndarray
    C_rho: np.ndarray
    C_vdot: np.ndarray
    feet: tuple = ()
    rho_slices: tuple = ()

    @property
    def n_v(self) -> int:
        return self.A.shape[1]

    @property
    def n_rho(self) -> int:
        return self.Q_com.shape[1]

    def hessian_gradient(self):
        nv, nr = self.n_v, self.n_rho
        A_lin = self.A[:2]
        Hv = np.diag(self.C_vdot) + A_lin.T @ (self.C_h[:, None] * A_lin)
        gv = -A_lin.T @ (self.C_h * self.b)
        if self.J.size:
            Hv += self.J.T @ (self.C_J[:, None] * self.J)
            gv -= self.J.T @ (self.C_J * self.p)
        Hr = np.diag(self.C_rho)
        gr = np.zeros(nr)
        if self.P.size:
            Hr = Hr + self.P.T @ (self.C_P[:, None] * self.P)
            gr -= self.P.T @ (self.C_P * self.r)
        H = np.zeros((nv + nr, nv + nr))
        H[:nv, :nv] = 2.0 * Hv
        H[nv:, nv:] = 2.0 * Hr
        g = 2.0 * np.concatenate([gv, gr])
        return H, g

    def structured_factors(self):
        """Cost as diag + weighted rows: (diag, V, W, targets), where the
        objective is sum(diag x^2) + sum_j W_j (V_j x - t_j)^2 (the dense
        Hessian is twice this form)."""
        nv, nr = self.n_v, self.n_rho
        n_j = self.J.shape[0] if self.J.size else 0
        n_p = self.P.shape[0] if self.P.size else 0
        diag = np.concatenate([self.C_vdot, self.C_rho])
        V = np.zeros((2 + n_j + n_p, nv + nr))
        V[0:2, :nv] = self.A[:2]
        if n_j:
            V[2 : 2 + n_j, :nv] = self.J
        if n_p:
            V[2 + n_j :, nv:] = self.P
        W = np.empty(2 + n_j + n_p)
        t = np.empty(2 + n_j + n_p)
        W[0:2] = self.C_h
        t[0:2] = self.b
        if n_j:
            W[2 : 2 + n_j] = self.C_J
            t[2 : 2 + n_j] = self.p
        if n_p:
            W[2 + n_j :] = self.C_P
            t[2 + n_j :] = self.r
        return diag, V, W, t

    def equality(self):
        E = np.hstack([self.A, -self.Q_com])
        d = self.W_g.copy() - self.adot_v
        for w in self.W_ext:
            d = d + np.asarray(w, dtype=float).reshape(N_DYN_ROWS)
        return E, d

    def bounds(self):
        lower = np.concatenate([self.vdot_min, self.rho_min])
        upper = np.concatenate([self.vdot_max, np.full(self.n_rho, np.inf)])
        return lower, upper


@dataclass
class QpSolution:
    vdot: np.ndarray
    rho: np.ndarray
    kkt_residual: float
    iterations: int
    active_set: tuple = ()

    def foot_rho(self, problem: QpProblem, index: int) -> np.ndarray:
        lo, hi = problem.rho_slices[index]
        return self.rho[lo:hi]


def acceleration_bounds(q, v, limits: dict, dt: float):
    """Per-coordinate acceleration box keeping position and velocity limits
    reachable; saturating, never inverted.

    Besides the one-tick position/velocity cuts, the velocity is capped by the
    braking envelope sqrt(2*a_max*distance_to_limit): without it a coordinate
    could legally build more speed toward a position limit than a_max can ever
    shed, and overshoot would be unavoidable.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    a_max = np.broadcast_to(np.asarray(limits["a_max"], dtype=float), q.shape).astype(float)
    v_max = np.broadcast_to(np.asarray(limits.get("v_max", np.inf), dtype=float), q.shape).astype(float)
    q_min = np.broadcast_to(np.asarray(limits.get("q_min", -np.inf), dtype=float), q.shape).astype(float)
    q_max = np.broadcast_to(np.asarray(limits.get("q_max", np.inf), dtype=float), q.shape).astype(float)

    # Worst-case next-tick distance to each position limit (max acceleration
    # toward it), keeping the braking envelope conservative.
    gap_hi = q_max - q - v * dt - 0.5 * a_max * dt**2
    gap_lo = q - q_min + v * dt - 0.5 * a_max * dt**2
    v_brake_hi = np.where(np.isfinite(q_max), np.sqrt(2.0 * a_max * np.maximum(gap_hi, 0.0)), np.inf)
    v_brake_lo = np.where(np.isfinite(q_min), -np.sqrt(2.0 * a_max * np.maximum(gap_lo, 0.0)), -np.inf)

    hi = np.minimum(a_max, np.where(np.isfinite(v_max), (v_max - v) / dt, np.inf))
    hi = np.minimum(hi, (v_brake_hi - v) / dt)
    hi = np.minimum(hi, np.where(np.isfinite(q_max), 2.0 * (q_max - q - v * dt) / dt**2, np.inf))
    lo = np.maximum(-a_max, np.where(np.isfinite(v_max), (-v_max - v) / dt, -np.inf))
    lo = np.maximum(lo, (v_brake_lo - v) / dt)
    lo = np.maximum(lo, np.where(np.isfinite(q_min), 2.0 * (q_min - q - v * dt) / dt**2, -np.inf))
    hi = np.clip(hi, -a_max, a_max)
    lo = np.clip(lo, -a_max, hi)
    return lo, hi


def assemble_qp(
    com_xy,
    mass: float,
    gravity: float,
    com_height: float,
    flywheel_inertia: float,
    feet,
    momentum_target,
    motion_tasks,
    cop_objective: CopObjective,
    weights: QpWeights,
    vdot_bounds,
    rho_extra=None,
    w_ext=(),
) -> QpProblem:
    """Build the per-tick problem from the reduced model.

    rho_extra, when given, is (rows, targets, row_weights) appended to the
    contact-force objective; used for load-distribution targets between feet.
    """
    feet = list(feet)
    n_v = 4 + len(feet)
    n_rho = sum(f.n_rho for f in feet)
    com_xy = np.asarray(com_xy, dtype=float).reshape(2)

    A = np.zeros((N_DYN_ROWS, n_v))
    A[0, 0] = mass
    A[1, 1] = mass
    A[3, 2] = flywheel_inertia
    A[4, 3] = flywheel_inertia

    Q_com = np.zeros((N_DYN_ROWS, n_rho))
    rho_min = np.zeros(n_rho)
    c_rho = np.zeros(n_rho)
    slices = []
    col = 0
    for f in feet:
        Q_com[:, col : col + f.n_rho] = f.centroidal_map(com_xy, com_height)
        c_rho[col : col + f.n_rho] = weights.rho_reg * f.rho_scale
        slices.append((col, col + f.n_rho))
        col += f.n_rho

    if motion_tasks:
        J = np.vstack([t.jacobian for t in motion_tasks])
        p = np.concatenate([t.desired for t in motion_tasks])
        C_J = np.concatenate([t.weight_rows() for t in motion_tasks])
    else:
        J = np.zeros((0, n_v))
        p = np.zeros(0)
        C_J = np.zeros(0)
    if J.size and J.shape[1] != n_v:
        raise ValueError("motion task jacobian width mismatch")

    P = cop_objective.P if cop_objective.P.size else np.zeros((0, n_rho))
    r = cop_objective.r
    C_P = cop_objective.weights
    if P.size and P.shape[1] != n_rho:
        raise ValueError("cop objective rho width mismatch")
    if rho_extra is not None:
        rows, targets, row_w = rho_extra
        rows = np.atleast_2d(np.asarray(rows, dtype=float))
        P = np.vstack([P, rows]) if P.size else rows
        r = np.concatenate([r, np.atleast_1d(targets)])
        C_P = np.concatenate([C_P, np.atleast_1d(row_w)])

    vdot_min, vdot_max = vdot_bounds
    W_g = np.zeros(N_DYN_ROWS)
    W_g[2] = -mass * gravity

    return QpProblem(
        A=A,
        adot_v=np.zeros(N_DYN_ROWS),
        b=np.asarray(momentum_target, dtype=float).reshape(2),
        C_h=np.full(2, weights.momentum),
        J=J,
        p=p,
        C_J=C_J,
        P=P,
        r=r,
        C_P=C_P,
        Q_com=Q_com,
        W_g=W_g,
        W_ext=tuple(w_ext),
        rho_min=rho_min,
        vdot_min=np.asarray(vdot_min, dtype=float).reshape(n_v),
        vdot_max=np.asarray(vdot_max, dtype=float).reshape(n_v),
        C_rho=c_rho,
        C_vdot=np.full(n_v, weights.vdot_reg),
        feet=tuple(feet),
        rho_slices=tuple(slices),
    )


def solve_box_qp(H, g, E, d, lower, upper, warm_start=(), max_iterations=500, tol=1e-9):
    """Strictly convex QP with equality constraints and box bounds via a dual
    active-set method (Goldfarb-Idnani specialized to bounds), dense KKT solve
    per working set.

    Returns (x, lam, active_set, iterations, kkt_residual). Deterministic:
    violated bounds are activated most-violated-first, blocking multipliers
    dropped smallest-index-first. Variables are Jacobi-equilibrated
    internally; force magnitudes and accelerations differ by many orders of
    magnitude and the raw KKT system would be too ill-conditioned.
    """
    H = np.asarray(H, dtype=float)
    g = np.asarray(g, dtype=float)
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    m = E.shape[0] if E is not None and E.size else 0

    scale = 1.0 / np.sqrt(np.maximum(np.abs(np.diag(H)), 1e-12))
    Hs = H * scale[None, :] * scale[:, None]
    gs = g * scale
    Es = E * scale[None, :] if m else E
    lo_s = lower / scale
    hi_s = upper / scale

    backend = _DenseBackend(Hs, gs, Es, d)
    x_s, lam, active, it = _dual_active_set(backend, lo_s, hi_s, warm_start, max_iterations, tol)
    # The equality multipliers are scale invariant (stationarity rows are just
    # left-multiplied by the diagonal), so lam transfers directly.
    x = np.clip(x_s * scale, lower, upper)
    res = _kkt_residual(H, g, E, d, x, lam, lower, upper, dict(active))
    return x, lam, active, it, res


def _bound_value(lower, upper, i, side):
    return lower[i] if side == "lo" else upper[i]


class _DenseBackend:
    """Working-set KKT solves against a dense Hessian."""

    def __init__(self, H, g, E, d):
        self.H = H
        self.g = g
        self.E = E if (E is not None and E.size) else None
        self.d = d
        self.n = H.shape[0]
        self.m = self.E.shape[0] if self.E is not None else 0

    def solve(self, working, lower, upper):
        return _kkt_solve(self.H, self.g, self.E, self.d, lower, upper, working)

    def direction(self, working, p, sigma_p):
        return _direction_solve(self.H, self.E, working, p, sigma_p)

    def gradient(self, x, lam):
        out = self.H @ x + self.g
        if self.m:
            out -= self.E.T @ lam
        return out

    def dir_gradient(self, z, dlam):
        out = self.H @ z
        if self.m:
            out -= self.E.T @ dlam
        return out


def _direction_solve(H, E, working, p, sigma_p):
    """Constrained Newton direction for activating bound p: H z - E'dlam = sigma_p*e_p
    on the free subspace, E z = 0, z fixed to 0 on the working set."""
    n = H.shape[0]
    m = E.shape[0] if E is not None and E.size else 0
    free = [i for i in range(n) if i not in working]
    nf = len(free)
    kdim = nf + m
    kkt = np.zeros((kdim, kdim))
    rhs = np.zeros(kdim)
    kkt[:nf, :nf] = H[np.ix_(free, free)]
    rhs[free.index(p)] = sigma_p
    if m:
        Ef = E[:, free]
        kkt[:nf, nf:] = -Ef.T
        kkt[nf:, :nf] = Ef
    try:
        sol = np.linalg.solve(kkt, rhs)
    except np.linalg.LinAlgError:
        sol, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
    z = np.zeros(n)
    z[free] = sol[:nf]
    dlam = sol[nf:] if m else np.zeros(0)
    return z, dlam


def _dual_active_set(backend, lower, upper, warm_start, max_iterations, tol):
    """Core dual active-set loop over a KKT backend. Maintains a stationary
    point for the current working set with non-negative bound multipliers, and
    walks in violated bounds one at a time with exact primal/dual steps."""
    n = backend.n

    working = {}
    for idx, side in warm_start:
        if 0 <= idx < n and np.isfinite(_bound_value(lower, upper, idx, side)):
            working[idx] = side

    x, lam, consistent = backend.solve(working, lower, upper)
    if not consistent:
        working = {}
        x, lam, consistent = backend.solve(working, lower, upper)
        if not consistent:
            raise QpInfeasible("equality constraints are inconsistent")
    mu = {}
    grad = backend.gradient(x, lam)
    for i, side in list(working.items()):
        mu[i] = grad[i] if side == "lo" else -grad[i]
    # Warm-started sets may carry wrong-sign multipliers; shed them (in one
    # batch per pass - they came from a stale problem, not this one's path).
    while True:
        bad = [i for i in working if mu[i] < -tol]
        if not bad:
            break
        for i in bad:
            del working[i]
            del mu[i]
        x, lam, consistent = backend.solve(working, lower, upper)
        if not consistent:
            raise QpInfeasible("equality constraints inconsistent with active bounds")
        grad = backend.gradient(x, lam)
        for j, side in working.items():
            mu[j] = grad[j] if side == "lo" else -grad[j]

    iterations = 1
    for _ in range(max_iterations):
        p, p_side, p_viol = -1, None, tol
        for i in range(n):
            if i in working:
                continue
            if x[i] < lower[i] - tol and lower[i] - x[i] > p_viol:
                p, p_side, p_viol = i, "lo", lower[i] - x[i]
            elif x[i] > upper[i] + tol and x[i] - upper[i] > p_viol:
                p, p_side, p_viol = i, "hi", x[i] - upper[i]
        if p < 0:
            return x, lam, tuple(sorted(working.items())), iterations

        sigma_p = 1.0 if p_side == "lo" else -1.0
        b_p = sigma_p * _bound_value(lower, upper, p, p_side)
        mu_p = 0.0
        for _inner in range(max_iterations):
            iterations += 1
            z, dlam = backend.direction(working, p, sigma_p)
            s = sigma_p * z[p]
            gz = backend.dir_gradient(z, dlam)
            dmu = {}
            for k, side in working.items():
                sk = 1.0 if side == "lo" else -1.0
                dmu[k] = sk * gz[k]

            t_full = math.inf
            if s > tol:
                t_full = (b_p - sigma_p * x[p]) / s
            t_part, k_drop = math.inf, -1
            for k in sorted(working):
                if dmu[k] < -tol:
                    t_k = mu[k] / (-dmu[k])
                    if t_k < t_part - 1e-15:
                        t_part, k_drop = t_k, k
            t = min(t_full, t_part)
            if not np.isfinite(t):
                raise QpInfeasible("bound constraint cannot be satisfied")
            x = x + t * z
            if dlam.size:
                lam = lam + t * dlam
            for k in working:
                mu[k] += t * dmu[k]
            mu_p += t
            if t_full <= t_part:
                working[p] = p_side
                mu[p] = mu_p
                x[p] = _bound_value(lower, upper, p, p_side)
                break
            del working[k_drop]
            del mu[k_drop]
        else:
            raise QpMaxIterations("inner dual active-set loop did not converge")
    raise QpMaxIterations(f"no convergence in {max_iterations} active-set iterations")


class _WoodburyBackend:
    """Working-set KKT solves for H = D + V' W V with few equality rows.

    All solves reduce to an r x r system (r = number of objective rows) via
    the Woodbury identity in D^(-1/2)-scaled variables plus an m x m Schur
    complement for the equality multipliers; nothing of size n is factorized.
    """

    def __init__(self, diag, V, W, g, E, d):
        self.diag = diag
        self.V = V
        self.W = W
        self.g = g
        self.E = E if (E is not None and E.size) else None
        self.d = d if self.E is not None else np.zeros(0)
        self.n = diag.shape[0]
        self.m = self.E.shape[0] if self.E is not None else 0
        self.d_isqrt = 1.0 / np.sqrt(diag)
        self.sw = np.sqrt(W)
        self._prep_key = None

    def _prep(self, working):
        key = frozenset(working)
        if self._prep_key == key:
            return
        self._prep_key = key
        n = self.n
        if working:
            free = np.ones(n, dtype=bool)
            for i in working:
                free[i] = False
            self.free = np.flatnonzero(free)
        else:
            self.free = np.arange(n)
        dif = self.d_isqrt[self.free]
        self.dif = dif
        self.Vf = self.V[:, self.free]
        M = (self.sw[:, None] * self.Vf) * dif[None, :]
        self.M = M
        r = M.shape[0]
        G = np.eye(r) + M @ M.T
        self.G_Linv = _chol_inverse_factor(G)
        self.G_pinv = np.linalg.pinv(G) if self.G_Linv is None else None
        if self.m:
            self.Ef = self.E[:, self.free]
            self.Y_E = self._h_inv(self.Ef.T)
            S = self.Ef @ self.Y_E
            self.S_Linv = _chol_inverse_factor(S)
            self.S_pinv = np.linalg.pinv(S) if self.S_Linv is None else None
        else:
            self.Ef = None

    def _g_solve(self, T):
        if self.G_Linv is not None:
            return self.G_Linv.T @ (self.G_Linv @ T)
        return self.G_pinv @ T

    def _s_solve(self, r):
        if self.S_Linv is not None:
            return self.S_Linv.T @ (self.S_Linv @ r)
        return self.S_pinv @ r

    def _h_inv(self, B):
        """H_FF^{-1} @ B for B (n_free, k)."""
        Bp = B * self.dif[:, None]
        T = self._g_solve(self.M @ Bp)
        return (Bp - self.M.T @ T) * self.dif[:, None]

    def _h_apply(self, xf):
        return self.diag[self.free] * xf + self.Vf.T @ (self.W * (self.Vf @ xf))

    def _once(self, r1, r2):
        Yr = self._h_inv(r1[:, None])[:, 0]
        lam = self._s_solve(self.Ef @ Yr - r2)
        xf = Yr - self.Y_E @ lam
        return xf, -lam

    def _kkt_solve_refined(self, rhs1, rhs2):
        """Solve [H_FF, -E_F'; E_F, 0] [xf; lam] = [rhs1; rhs2] via Woodbury +
        Schur, with iterative refinement: the approximate inverse loses digits
        when objective weights span many orders of magnitude, but the operator
        itself applies exactly, so a couple of corrections restore precision."""
        m = self.m
        if m:
            xf, lam = self._once(rhs1, rhs2)
            scale = max(1.0, float(np.abs(rhs1).max()), float(np.abs(rhs2).max()))
            for _ in range(2):
                res1 = rhs1 - (self._h_apply(xf) - self.Ef.T @ lam)
                res2 = rhs2 - self.Ef @ xf
                if max(np.abs(res1).max(initial=0.0), np.abs(res2).max(initial=0.0)) < 1e-9 * scale:
                    break
                dxf, dlam = self._once(res1, res2)
                xf = xf + dxf
                lam = lam + dlam
            return xf, lam
        xf = self._h_inv(rhs1[:, None])[:, 0]
        scale = max(1.0, float(np.abs(rhs1).max()))
        for _ in range(2):
            res1 = rhs1 - self._h_apply(xf)
            if np.abs(res1).max(initial=0.0) < 1e-9 * scale:
                break
            xf = xf + self._h_inv(res1[:, None])[:, 0]
        return xf, np.zeros(0)

    def solve(self, working, lower, upper):
        self._prep(working)
        n = self.n
        x = np.zeros(n)
        fixed = sorted(working)
        if fixed:
            for i in fixed:
                x[i] = lower[i] if working[i] == "lo" else upper[i]
            vc = self.V[:, fixed] @ x[fixed]
            g_eff = self.g[self.free] + self.V[:, self.free].T @ (self.W * vc)
        else:
            g_eff = self.g[self.free]
        if self.m:
            d_eff = self.d - (self.E[:, fixed] @ x[fixed] if fixed else 0.0)
            xf, lam = self._kkt_solve_refined(-g_eff, d_eff)
            x[self.free] = xf
            scale = max(1.0, float(np.abs(self.d).max()))
            if float(np.abs(self.E @ x - self.d).max()) > 1e-6 * scale:
                return x, lam, False
            return x, lam, True
        xf, _ = self._kkt_solve_refined(-g_eff, None)
        x[self.free] = xf
        return x, np.zeros(0), True

    def direction(self, working, p, sigma_p):
        self._prep(working)
        n = self.n
        e = np.zeros(len(self.free))
        e[int(np.searchsorted(self.free, p))] = sigma_p
        z = np.zeros(n)
        if self.m:
            zf, dlam = self._kkt_solve_refined(e, np.zeros(self.m))
            z[self.free] = zf
            return z, dlam
        zf, _ = self._kkt_solve_refined(e, None)
        z[self.free] = zf
        return z, np.zeros(0)

    def gradient(self, x, lam):
        out = self.diag * x + self.V.T @ (self.W * (self.V @ x)) + self.g
        if self.m:
            out -= self.E.T @ lam
        return out

    def dir_gradient(self, z, dlam):
        out = self.diag * z + self.V.T @ (self.W * (self.V @ z))
        if self.m:
            out -= self.E.T @ dlam
        return out


def solve_structured_box_qp(diag, V, W, targets, E, d, lower, upper, warm_start=(),
                            max_iterations=500, tol=1e-9):
    """Box QP whose cost is sum(diag_i x_i^2) + sum_j W_j (V_j x - t_j)^2 over
    equality constraints Ex=d, solved without forming the dense Hessian."""
    g = -(V.T @ (W * targets))
    backend = _WoodburyBackend(diag, V, W, g, E, d)
    x, lam, active, it = _dual_active_set(backend, lower, upper, warm_start, max_iterations, tol)
    x = np.clip(x, lower, upper)
    grad = backend.gradient(x, lam)
    stat = grad.copy()
    for i, _ in active:
        stat[i] = 0.0
    res = float(np.abs(stat).max()) if stat.size else 0.0
    if backend.m:
        res = max(res, float(np.abs(E @ x - d).max()))
    return x, lam, active, it, res


def _kkt_solve(H, g, E, d, lower, upper, working):
    n = H.shape[0]
    m = E.shape[0] if E is not None and E.size else 0
    if not working:
        kdim = n + m
        kkt = np.zeros((kdim, kdim))
        rhs = np.empty(kdim)
        kkt[:n, :n] = H
        rhs[:n] = -g
        if m:
            kkt[:n, n:] = -E.T
            kkt[n:, :n] = E
            rhs[n:] = d
        try:
            sol = np.linalg.solve(kkt, rhs)
        except np.linalg.LinAlgError:
            sol, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
        x = sol[:n]
        lam = sol[n:] if m else np.zeros(0)
    else:
        fixed_idx = sorted(working)
        free = [i for i in range(n) if i not in working]
        x = np.zeros(n)
        for i in fixed_idx:
            x[i] = lower[i] if working[i] == "lo" else upper[i]
        nf = len(free)
        kdim = nf + m
        kkt = np.zeros((kdim, kdim))
        rhs = np.zeros(kdim)
        kkt[:nf, :nf] = H[np.ix_(free, free)]
        rhs[:nf] = -g[free]
        rhs[:nf] -= H[np.ix_(free, fixed_idx)] @ x[fixed_idx]
        if m:
            # Sign convention: stationarity is H x + g - E' lam = 0.
            Ef = E[:, free]
            kkt[:nf, nf:] = -Ef.T
            kkt[nf:, :nf] = Ef
            rhs[nf:] = d - E[:, fixed_idx] @ x[fixed_idx]
        try:
            sol = np.linalg.solve(kkt, rhs)
        except np.linalg.LinAlgError:
            sol, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
        x[free] = sol[:nf]
        lam = sol[nf:] if m else np.zeros(0)
    if m:
        scale = max(1.0, float(np.abs(d).max()))
        if float(np.abs(E @ x - d).max()) > 1e-6 * scale:
            return x, lam, False
    return x, lam, True


def _kkt_residual(H, g, E, d, x, lam, lower, upper, working):
    m = E.shape[0] if E is not None and E.size else 0
    grad = H @ x + g - (E.T @ lam if m else 0.0)
    stat = grad.copy()
    for i in working:
        stat[i] = 0.0
    res = float(np.abs(stat).max()) if stat.size else 0.0
    if m:
        res = max(res, float(np.abs(E @ x - d).max()))
    res = max(res, float(np.maximum(lower - x, 0.0).max(initial=0.0)))
    res = max(res, float(np.maximum(x - upper, 0.0).max(initial=0.0)))
    return res


def solve_qp(problem: QpProblem, warm_start=()) -> QpSolution:
    """Solve the assembled problem; raises QpInfeasible / QpMaxIterations.

    Uses the diagonal-plus-low-rank structure of the cost, so per-tick solves
    stay small regardless of the contact-force dimension."""
    diag, V, W, targets = problem.structured_factors()
    E, d = problem.equality()
    lower, upper = problem.bounds()
    x, lam, active, its, res = solve_structured_box_qp(
        diag, V, W, targets, E, d, lower, upper, warm_start=warm_start)
    nv = problem.n_v
    return QpSolution(vdot=x[:nv], rho=x[nv:], kkt_residual=res, iterations=its, active_set=active)
