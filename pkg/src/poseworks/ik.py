"""Velocity-space whole-body IK: iterate a weighted QP and integrate.

Each iteration assembles motion tasks (joint / CoM / spatial pose feedback
plus collision push-out), a CoM containment inequality, and velocity bounds
shaped so one integration step can never leave the joint range. The QP

    min  c_nom + c_J + c_v
    s.t. v_lo <= v <= v_hi,  G v <= h

is solved by the dense active-set method in :mod:`poseworks.qp`; the result
is integrated with time step ``dt`` until the cost plateaus with small task
errors, the iteration cap hits, or instability is detected (five consecutive
cost increases reverts to the start configuration).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import geometry
from .kinematics import (
    RobotModel,
    _fk,
    _jacobian_at_point,
    clip_to_limits,
    com_and_momentum_matrix,
    config_difference,
    integrate,
)
from .qp import QPError, QPInfeasible, solve_qp as _solve_qp_raw
from .transforms import Transform, matrix_to_rotvec

CONVERGED = "converged"
MAX_ITERATIONS = "max-iterations"
UNSTABLE = "unstable"
INFEASIBLE_QP = "infeasible-qp"


class TaskError(ValueError):
    """Raised when a kinematic task references unknown bodies or joints."""


class InfeasibleRegionError(ValueError):
    pass


# ---------------------------------------------------------------------------
# task descriptions


@dataclass(frozen=True, eq=False)
class JointPositionTask:
    joint: str
    target: float
    weight: float = 10.0
    gain: float | None = None
    name: str = ""


@dataclass(frozen=True, eq=False)
class CoMTask:
    target: np.ndarray
    axes: tuple[bool, bool, bool] = (True, True, True)
    weight: float = 10.0
    gain: float | None = None
    name: str = ""


@dataclass(frozen=True, eq=False)
class SpatialPoseTask:
    body: str
    target: Transform
    control_frame: Transform = None  # type: ignore[assignment]
    # (ang_x, ang_y, ang_z, lin_x, lin_y, lin_z); angular components are
    # expressed in the target frame so a contact anchor can leave yaw about
    # the surface normal unconstrained.
    axes: tuple[bool, ...] = (True,) * 6
    weight: float = 10.0
    gain: float | None = None
    name: str = ""

    def __post_init__(self):
        if self.control_frame is None:
            object.__setattr__(self, "control_frame", Transform.identity())


KinematicTask = JointPositionTask | CoMTask | SpatialPoseTask


@dataclass(eq=False)
class MotionTask:
    """Selection-masked task rows: J v = p with positive per-row weights."""

    name: str
    jacobian: np.ndarray  # (rows, n)
    objective: np.ndarray  # (rows,)
    weights: np.ndarray  # (rows,)

    def __post_init__(self):
        if self.jacobian.shape[0] != self.objective.shape[0] or self.objective.shape != self.weights.shape:
            raise TaskError(f"task {self.name!r}: row counts disagree")
        if np.any(self.weights <= 0.0):
            raise TaskError(f"task {self.name!r}: weights must be positive")


@dataclass(eq=False)
class IneqRow:
    row: np.ndarray
    bound: float
    label: str = ""


@dataclass
class SolverSettings:
    dt: float = 0.05
    max_iterations: int = 200
    cost_tolerance: float = 1e-7
    # Converged means the cost plateaued with the puppet stationary (largest
    # joint step below stationary_tolerance, rad|m per tick) and no
    # penetration above residual_tolerance. The tolerance separates true
    # settling (residual null-space creep ~1e-7/tick) from the trust-cap
    # limit cycle an unreachable target produces (~step-cap per tick), which
    # classifies as max-iterations.
    residual_tolerance: float = 1e-6
    stationary_tolerance: float = 1e-5
    tier_weights: tuple[float, float, float] = (1.0, 10.0, 100.0)
    contact_weight: float = 500.0
    collision_weight: float = 1000.0
    nominal_weight: float = 0.05
    velocity_weight: float = 0.01
    nominal_gain: float = 4.0
    separation_gain: float = 10.0
    collision_margin: float = 0.02
    closing_speed_limit: float = 0.1
    max_task_linear_velocity: float = 5.0
    max_task_angular_velocity: float = 10.0
    max_com_velocity: float = 2.0
    # Trust region: no joint moves more than this (rad or m) in one tick, so
    # the task linearization stays valid and near-singular poses cannot
    # limit-cycle at the velocity bounds.
    max_step_per_tick: float = 0.04
    enable_com_constraint: bool = True
    enable_collision_constraints: bool = True
    unstable_after: int = 5
    # Weighted-error materiality floor for divergence counting; second-order
    # noise from null-space posture drift stays well below it.
    divergence_floor: float = 1e-4

    def __post_init__(self):
        low, med, high = self.tier_weights
        if not (0 < low < med < high):
            raise ValueError("tier weights must satisfy 0 < low < medium < high")
        for name in (
            "dt",
            "cost_tolerance",
            "residual_tolerance",
            "contact_weight",
            "collision_weight",
            "nominal_weight",
            "velocity_weight",
            "nominal_gain",
            "separation_gain",
            "collision_margin",
            "closing_speed_limit",
            "max_task_linear_velocity",
            "max_task_angular_velocity",
            "max_com_velocity",
            "max_step_per_tick",
            "stationary_tolerance",
        ):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.max_iterations < 1 or self.unstable_after < 1:
            raise ValueError("iteration counts must be >= 1")

    def tier_weight(self, tier: str) -> float:
        table = {"low": self.tier_weights[0], "medium": self.tier_weights[1], "high": self.tier_weights[2]}
        try:
            return table[tier]
        except KeyError:
            raise ValueError(f"unknown weight tier {tier!r}") from None


@dataclass(eq=False)
class SolveDiagnostics:
    status: str
    iterations: int
    final_cost: float
    task_residuals: dict[str, float]
    cost_trace: list[float]
    max_kkt_residual: float
    warnings: list[str] = field(default_factory=list)


# ---------------------------------------------------------------------------
# task assembly


def _clamp_norm(v: np.ndarray, limit: float) -> np.ndarray:
    n = float(np.linalg.norm(v))
    if n > limit:
        return v * (limit / n)
    return v


def build_motion_tasks(
    model: RobotModel,
    q: np.ndarray,
    tasks,
    settings: SolverSettings,
    snap=None,
) -> list[MotionTask]:
    """Convert kinematic tasks into selection-masked Jacobian/objective rows."""
    q = model.check_config(q)
    if snap is None:
        snap = _fk(model, q)
    default_gain = 1.0 / settings.dt
    out: list[MotionTask] = []
    for i, task in enumerate(tasks):
        name = task.name or f"task{i}"
        if isinstance(task, JointPositionTask):
            joint = model.joint(task.joint)  # raises ModelError for unknown joints
            if joint.dof != 1:
                raise TaskError(f"task {name!r}: joint anchors need a 1-dof joint")
            sl = model.q_slice(task.joint)
            gain = task.gain if task.gain is not None else default_gain
            p = gain * (task.target - q[sl.start])
            p = float(np.clip(p, -joint.vel_limit, joint.vel_limit))
            J = np.zeros((1, model.n))
            J[0, sl.start] = 1.0
            out.append(MotionTask(name, J, np.array([p]), np.array([task.weight])))
        elif isinstance(task, CoMTask):
            com, A = com_and_momentum_matrix(model, q)
            gain = task.gain if task.gain is not None else default_gain
            p = gain * (np.asarray(task.target, dtype=float) - com)
            p = _clamp_norm(p, settings.max_com_velocity)
            mask = np.asarray(task.axes, dtype=bool)
            if not mask.any():
                raise TaskError(f"task {name!r}: empty axis mask")
            # Mass-normalized momentum matrix = CoM Jacobian; keeps the QP
            # row scale uniform across task types so KKT residuals stay tight.
            J_com = A / model.total_mass
            out.append(
                MotionTask(name, J_com[mask], p[mask], np.full(int(mask.sum()), task.weight))
            )
        elif isinstance(task, SpatialPoseTask):
            if not model.has_body(task.body):
                raise TaskError(f"task {name!r}: unknown body {task.body!r}")
            pose = snap.body_pose[task.body].compose(task.control_frame)
            J = _jacobian_at_point(model, snap, task.body, pose.translation)
            gain = task.gain if task.gain is not None else default_gain
            R_c, R_t = pose.rotation, task.target.rotation
            # Angular error in the target frame: log(R_c^T R_t).
            rot_err = matrix_to_rotvec(R_c.T @ R_t)
            p_ang = _clamp_norm(gain * rot_err, settings.max_task_angular_velocity)
            p_lin = _clamp_norm(
                gain * (task.target.translation - pose.translation),
                settings.max_task_linear_velocity,
            )
            J_ang = R_t.T @ J[0:3]
            J_lin = J[3:6]
            mask = np.asarray(task.axes, dtype=bool)
            if mask.shape != (6,) or not mask.any():
                raise TaskError(f"task {name!r}: spatial axis mask must have 6 entries, some active")
            J_full = np.vstack([J_ang, J_lin])
            p_full = np.concatenate([p_ang, p_lin])
            out.append(
                MotionTask(name, J_full[mask], p_full[mask], np.full(int(mask.sum()), task.weight))
            )
        else:
            raise TaskError(f"unsupported task type {type(task).__name__}")
    return out


def task_errors(model: RobotModel, q: np.ndarray, tasks, snap=None) -> dict[str, float]:
    """Raw task-space error norms (masked components only)."""
    if snap is None:
        snap = _fk(model, q)
    errors: dict[str, float] = {}
    for i, task in enumerate(tasks):
        name = task.name or f"task{i}"
        if isinstance(task, JointPositionTask):
            sl = model.q_slice(task.joint)
            errors[name] = abs(task.target - q[sl.start])
        elif isinstance(task, CoMTask):
            com, _ = com_and_momentum_matrix(model, q)
            mask = np.asarray(task.axes, dtype=bool)
            errors[name] = float(np.linalg.norm((np.asarray(task.target) - com)[mask]))
        elif isinstance(task, SpatialPoseTask):
            pose = snap.body_pose[task.body].compose(task.control_frame)
            rot_err = matrix_to_rotvec(pose.rotation.T @ task.target.rotation)
            lin_err = task.target.translation - pose.translation
            mask = np.asarray(task.axes, dtype=bool)
            e = np.concatenate([rot_err, lin_err])[mask]
            errors[name] = float(np.linalg.norm(e))
    return errors


# ---------------------------------------------------------------------------
# collision tasks


def collision_tasks(
    model: RobotModel,
    q: np.ndarray,
    environment: geometry.Environment,
    settings: SolverSettings,
    snap=None,
) -> tuple[list[MotionTask], list[IneqRow], list[str]]:
    """Separation tasks for penetrating pairs plus one-sided approach limits.

    Penetrations become high-weight feedback rows pushing the deepest robot
    point out along the contact normal. Pairs inside the activation margin
    contribute an inequality bounding the approach speed (the one-sided part
    cannot be expressed as a quadratic objective).
    """
    q = model.check_config(q)
    if snap is None:
        snap = _fk(model, q)
    tasks: list[MotionTask] = []
    rows: list[IneqRow] = []
    warnings: list[str] = []
    robot_polys = geometry.robot_placed_polytopes(model, snap.body_pose)
    env_polys = environment.placed()
    for rp in robot_polys:
        for ep in env_polys:
            if geometry.aabb_distance(rp, ep) > settings.collision_margin:
                continue
            res = geometry.proximity(rp, ep, max_distance=settings.collision_margin * 2)
            label = f"{rp.source.name}|{ep.source.name}"
            if res.status == geometry.NUMERIC_FAILURE:
                warnings.append(f"proximity failed for {label}; treated as touching")
                continue
            body = rp.source.attachment
            if res.status == geometry.PENETRATING:
                J = _jacobian_at_point(model, snap, body, res.point_a)[3:6]
                escape = -res.normal  # robot escapes opposite the A->B direction
                tasks.append(
                    MotionTask(
                        f"collision:{label}",
                        (escape @ J).reshape(1, -1),
                        np.array([settings.separation_gain * res.depth]),
                        np.array([settings.collision_weight]),
                    )
                )
            elif res.status == geometry.TOUCHING:
                J = _jacobian_at_point(model, snap, body, res.point_a)[3:6]
                rows.append(IneqRow(res.normal @ J, 0.0, label=f"damping:{label}"))
            elif res.status == geometry.SEPARATED and res.distance < settings.collision_margin:
                J = _jacobian_at_point(model, snap, body, res.point_a)[3:6]
                bound = min(settings.closing_speed_limit, res.distance / settings.dt)
                rows.append(
                    IneqRow(res.normal @ J, bound, label=f"damping:{label}")
                )
    return tasks, rows, warnings


# ---------------------------------------------------------------------------
# CoM containment


def polygon_halfplanes(vertices: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Outward halfplanes n x <= d of a CCW polygon; degenerate cases boxed."""
    v = np.asarray(vertices, dtype=float).reshape(-1, 2)
    if v.shape[0] == 0:
        raise InfeasibleRegionError("empty support region")
    if v.shape[0] == 1:
        n = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
        d = n @ v[0]
        return n, d
    if v.shape[0] == 2:
        t = v[1] - v[0]
        nt = np.linalg.norm(t)
        if nt < 1e-12:
            return polygon_halfplanes(v[:1])
        t = t / nt
        side = np.array([t[1], -t[0]])
        n = np.array([side, -side, t, -t])
        d = np.array([side @ v[0], -side @ v[0], t @ v[1], -(t @ v[0])])
        return n, d
    normals = []
    offsets = []
    for i in range(v.shape[0]):
        a = v[i]
        b = v[(i + 1) % v.shape[0]]
        e = b - a
        ne = np.linalg.norm(e)
        if ne < 1e-12:
            continue
        e = e / ne
        n = np.array([e[1], -e[0]])  # outward for CCW winding
        normals.append(n)
        offsets.append(float(n @ a))
    return np.asarray(normals), np.asarray(offsets)


def nominal_drive(model: RobotModel, q, q_nom, gain: float, motion_tasks) -> np.ndarray:
    """Posture drive toward q_nom, projected onto the stacked task null space.

    The projection makes the posture objective orthogonal to every task row,
    so it settles redundant joints without biasing converged task residuals.
    """
    d = gain * config_difference(model, q_nom, q)
    rows = [t.jacobian for t in motion_tasks if t.jacobian.shape[0]]
    if not rows:
        return d
    J = np.vstack(rows)
    u, s, vt = np.linalg.svd(J, full_matrices=False)
    if s.size == 0 or s[0] <= 0.0:
        return d
    rank = int(np.sum(s > 1e-10 * s[0]))
    if rank == 0:
        return d
    V = vt[:rank]
    return d - V.T @ (V @ d)


def momentum_constraint(
    region,
    com: np.ndarray,
    momentum_matrix: np.ndarray,
    total_mass: float,
    dt: float,
) -> list[IneqRow]:
    """One-step CoM containment rows: n (A_xy/m) v <= (d - n com_xy) / dt."""
    vertices = getattr(region, "vertices", region)
    normals, offsets = polygon_halfplanes(np.asarray(vertices, dtype=float))
    com_xy = np.asarray(com, dtype=float)[:2]
    A_xy = momentum_matrix[:2] / total_mass
    rows = []
    for k in range(normals.shape[0]):
        rows.append(
            IneqRow(
                normals[k] @ A_xy,
                float((offsets[k] - normals[k] @ com_xy) / dt),
                label=f"com_region:{k}",
            )
        )
    return rows


# ---------------------------------------------------------------------------
# the QP over desired velocities


def velocity_bounds(
    model: RobotModel, q: np.ndarray, dt: float, step_cap: float | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Nominal velocity bounds tightened so q + v dt stays within limits."""
    lo, hi = model.position_limits()
    vel = model.velocity_limits()
    if step_cap is not None:
        vel = np.minimum(vel, step_cap / dt)
    v_lo = np.maximum(-vel, (lo - q) / dt)
    v_hi = np.minimum(vel, (hi - q) / dt)
    return v_lo, v_hi


def solve_qp(
    tasks: list[MotionTask],
    settings: SolverSettings,
    bounds: tuple[np.ndarray, np.ndarray],
    ineq_rows: list[IneqRow] | None = None,
    v_nom: np.ndarray | None = None,
    n: int | None = None,
    warm_active=None,
):
    """Solve the velocity QP; returns (v, qp_solution, cost).

    ``v_nom`` enables the nominal-drive term; when None only the kinematic
    and velocity costs are present (used by unit fixtures with closed forms).
    """
    v_lo, v_hi = bounds
    if n is None:
        n = v_lo.size
    P = np.zeros((n, n))
    qlin = np.zeros(n)
    const = 0.0
    if v_nom is not None:
        P += 2.0 * settings.nominal_weight * np.eye(n)
        qlin += -2.0 * settings.nominal_weight * v_nom
        const += settings.nominal_weight * float(v_nom @ v_nom)
    P += 2.0 * settings.velocity_weight * np.eye(n)
    for t in tasks:
        JW = t.jacobian.T * t.weights
        P += 2.0 * JW @ t.jacobian
        qlin += -2.0 * JW @ t.objective
        const += float(t.objective @ (t.weights * t.objective))
    a_in = None
    b_in = None
    if ineq_rows:
        a_in = np.array([r.row for r in ineq_rows])
        b_in = np.array([r.bound for r in ineq_rows])
    try:
        sol = _solve_qp_raw(
            P, qlin, lower=v_lo, upper=v_hi, a_in=a_in, b_in=b_in, warm_active=warm_active
        )
    except QPInfeasible:
        raise
    cost = 0.5 * float(sol.x @ P @ sol.x) + float(qlin @ sol.x) + const
    return sol.x, sol, cost


# ---------------------------------------------------------------------------
# the SQP loop


def solve(
    model: RobotModel,
    q_start: np.ndarray,
    tasks,
    environment: geometry.Environment | None = None,
    region=None,
    settings: SolverSettings | None = None,
    nominal_q: np.ndarray | None = None,
    max_iterations: int | None = None,
) -> tuple[np.ndarray, SolveDiagnostics]:
    """Iterate QP + integrate until the cost converges with small task errors.

    Returns the final configuration (always within joint limits) and
    diagnostics. On instability or an infeasible QP the start configuration
    is returned so the caller can revert cleanly.
    """
    settings = settings or SolverSettings()
    cap = max_iterations if max_iterations is not None else settings.max_iterations
    q = clip_to_limits(model, model.check_config(q_start).copy())
    q_nom = model.nominal_q if nominal_q is None else np.asarray(nominal_q, dtype=float)

    trace: list[float] = []
    warnings: list[str] = []
    max_kkt = 0.0
    increases = 0
    prev_cost = None
    prev_err = None
    status = MAX_ITERATIONS
    iterations = 0
    warm = None

    for it in range(1, cap + 1):
        iterations = it
        snap = _fk(model, q)
        motion = build_motion_tasks(model, q, tasks, settings, snap=snap)
        ineq: list[IneqRow] = []
        max_depth = 0.0
        if environment is not None and settings.enable_collision_constraints:
            ctasks, crows, cwarn = collision_tasks(model, q, environment, settings, snap=snap)
            motion += ctasks
            ineq += crows
            warnings += cwarn
            for t in ctasks:
                max_depth = max(max_depth, float(t.objective[0]) / settings.separation_gain)
        if region is not None and settings.enable_com_constraint:
            com, A = com_and_momentum_matrix(model, q)
            try:
                ineq += momentum_constraint(region, com, A, model.total_mass, settings.dt)
            except InfeasibleRegionError:
                return q_start.copy(), SolveDiagnostics(
                    INFEASIBLE_QP, it, np.nan, {}, trace, max_kkt, warnings + ["empty region"]
                )
        v_nom = nominal_drive(model, q, q_nom, settings.nominal_gain, motion)
        bounds = velocity_bounds(model, q, settings.dt, step_cap=settings.max_step_per_tick)
        try:
            v, qp_sol, cost = solve_qp(
                motion, settings, bounds, ineq_rows=ineq, v_nom=v_nom, warm_active=warm
            )
        except QPInfeasible:
            return q_start.copy(), SolveDiagnostics(
                INFEASIBLE_QP, it, np.nan, {}, trace, max_kkt, warnings
            )
        except QPError as exc:
            warnings.append(f"qp failure: {exc}")
            return q_start.copy(), SolveDiagnostics(
                UNSTABLE, it, np.nan, {}, trace, max_kkt, warnings
            )
        warm = qp_sol.active_set
        max_kkt = max(max_kkt, qp_sol.kkt_residual)
        trace.append(cost)

        errs = task_errors(model, q, tasks, snap=snap)
        # Divergence metric: weighted task error plus penetration, the scalar
        # a healthy solve actually descends. (The raw QP cost legitimately
        # rises while a stuck solve approaches a workspace boundary, and a
        # weak task's error legitimately rises while a weighted compromise
        # settles, so neither works alone.)
        weighted_err = sum(
            getattr(t, "weight", 1.0) * e * e
            for t, e in zip(tasks, errs.values())
        ) + settings.collision_weight * max_depth * max_depth
        step_inf = float(np.abs(v).max()) * settings.dt if v.size else 0.0
        if prev_cost is not None:
            plateau = abs(prev_cost - cost) < settings.cost_tolerance
            stationary = step_inf <= settings.stationary_tolerance
            worst_err = max(max(errs.values()) if errs else 0.0, max_depth)
            # A stuck solve (workspace boundary, singular pose, blocking
            # constraint) can be perfectly stationary; converged additionally
            # means the tasks were actually achieved.
            if plateau and stationary and worst_err <= settings.residual_tolerance:
                status = CONVERGED
                break
            # Divergence means both the cost and the weighted task error grow
            # together; each alone rises during benign phases (cost while
            # approaching a workspace boundary, error during second-order
            # null-space posture drift).
            diverging = (
                prev_err is not None
                and weighted_err > prev_err + 1e-12
                and weighted_err > settings.divergence_floor
                and cost > prev_cost + 1e-12
            )
            if diverging:
                increases += 1
                if increases >= settings.unstable_after:
                    return q_start.copy(), SolveDiagnostics(
                        UNSTABLE,
                        it,
                        cost,
                        errs,
                        trace,
                        max_kkt,
                        warnings + ["cost and task error diverged over consecutive iterations"],
                    )
            else:
                increases = 0
        prev_cost = cost
        prev_err = weighted_err
        q = clip_to_limits(model, integrate(model, q, v, settings.dt))

    final_errors = task_errors(model, q, tasks)
    return q, SolveDiagnostics(
        status,
        iterations,
        trace[-1] if trace else np.nan,
        final_errors,
        trace,
        max_kkt,
        warnings,
    )
