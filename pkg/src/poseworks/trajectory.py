"""Keyframe compilation into per-joint cubic splines.

Interior knot velocities minimize the integrated squared acceleration with
the start velocity fixed to the executing robot's current velocity and the
end velocity fixed to zero. Stationarity of that objective is equivalent to
acceleration continuity at the interior knots, which yields one tridiagonal
system per joint; the systems share their matrix, so all joints solve in one
vectorized pass.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np


class TrajectoryError(ValueError):
    pass


@dataclass(eq=False)
class CubicSplineTrajectory:
    """Piecewise cubic q(t): coeffs[s, j, :] = (a0, a1, a2, a3) on segment s."""

    knot_times: np.ndarray  # (K,)
    knot_configs: np.ndarray  # (K, n)
    knot_velocities: np.ndarray  # (K, n)
    coeffs: np.ndarray  # (K-1, n, 4), local time s in [0, h_seg]

    @property
    def n_joints(self) -> int:
        return self.knot_configs.shape[1]

    @property
    def duration(self) -> float:
        return float(self.knot_times[-1] - self.knot_times[0])


def _hermite_coeffs(p0, v0, p1, v1, h):
    d = (p1 - p0) / h
    a0 = p0
    a1 = v0
    a2 = (3.0 * d - 2.0 * v0 - v1) / h
    a3 = (v0 + v1 - 2.0 * d) / (h * h)
    return a0, a1, a2, a3


def segment_accel_energy(p0, v0, p1, v1, h) -> float:
    """Closed form of the squared-acceleration integral over one segment."""
    _, _, a2, a3 = _hermite_coeffs(p0, v0, p1, v1, h)
    return float(4.0 * a2**2 * h + 12.0 * a2 * a3 * h**2 + 12.0 * a3**2 * h**3)


def accel_energy(traj: CubicSplineTrajectory) -> float:
    """Total integral of ||q_dd||^2 over the trajectory."""
    total = 0.0
    for s in range(traj.coeffs.shape[0]):
        h = float(traj.knot_times[s + 1] - traj.knot_times[s])
        a2 = traj.coeffs[s, :, 2]
        a3 = traj.coeffs[s, :, 3]
        total += float(np.sum(4 * a2**2 * h + 12 * a2 * a3 * h**2 + 12 * a3**2 * h**3))
    return total


def compile_trajectory(configs, times, start_velocity=None) -> CubicSplineTrajectory:
    """Fit the minimum-acceleration C1 cubic through the keyframes.

    Boundary velocities are the starting velocity (default zero) and zero at
    the end; interior velocities come from the acceleration-continuity
    tridiagonal system, solved per joint with the Thomas algorithm.
    """
    P = np.asarray(configs, dtype=float)
    t = np.asarray(times, dtype=float)
    if P.ndim != 2 or P.shape[0] < 2:
        raise TrajectoryError("need at least 2 keyframes")
    K, n = P.shape
    if t.shape != (K,):
        raise TrajectoryError(f"times shape {t.shape} does not match {K} keyframes")
    if np.any(np.diff(t) <= 0.0):
        raise TrajectoryError("keyframe times must be strictly increasing")
    v0 = np.zeros(n) if start_velocity is None else np.asarray(start_velocity, dtype=float)
    if v0.shape != (n,):
        raise TrajectoryError("start velocity dimension mismatch")

    h = np.diff(t)  # (K-1,)
    V = np.zeros((K, n))
    V[0] = v0
    V[-1] = 0.0
    if K > 2:
        m = K - 2
        # Tridiagonal system: for each interior knot i (1..K-2)
        #   (1/h_{i-1}) v_{i-1} + 2(1/h_{i-1} + 1/h_i) v_i + (1/h_i) v_{i+1}
        #     = 3 (d_{i-1}/h_{i-1} + d_i/h_i),  d_i = (p_{i+1} - p_i)/h_i
        inv = 1.0 / h
        d = (P[1:] - P[:-1]) * inv[:, None]
        lower = inv[:-1].copy()  # coeff of v_{i-1}
        diag = 2.0 * (inv[:-1] + inv[1:])
        upper = inv[1:].copy()  # coeff of v_{i+1}
        rhs = 3.0 * (d[:-1] * inv[:-1, None] + d[1:] * inv[1:, None])
        rhs[0] -= lower[0] * V[0]
        rhs[-1] -= upper[-1] * V[-1]
        # Thomas algorithm, vectorized across joints.
        cp = np.zeros(m)
        dp = np.zeros((m, n))
        cp[0] = upper[0] / diag[0]
        dp[0] = rhs[0] / diag[0]
        for i in range(1, m):
            denom = diag[i] - lower[i] * cp[i - 1]
            cp[i] = upper[i] / denom if i < m - 1 else 0.0
            dp[i] = (rhs[i] - lower[i] * dp[i - 1]) / denom
        V[m] = dp[m - 1]
        for i in range(m - 2, -1, -1):
            V[i + 1] = dp[i] - cp[i] * V[i + 2]

    coeffs = np.zeros((K - 1, n, 4))
    for s in range(K - 1):
        a0, a1, a2, a3 = _hermite_coeffs(P[s], V[s], P[s + 1], V[s + 1], h[s])
        coeffs[s, :, 0] = a0
        coeffs[s, :, 1] = a1
        coeffs[s, :, 2] = a2
        coeffs[s, :, 3] = a3
    return CubicSplineTrajectory(t.copy(), P.copy(), V, coeffs)


def eval_segment(traj: CubicSplineTrajectory, seg: int, s: float):
    """Evaluate segment ``seg`` at local time s (no clamping)."""
    a = traj.coeffs[seg]
    q = a[:, 0] + a[:, 1] * s + a[:, 2] * s * s + a[:, 3] * s**3
    qd = a[:, 1] + 2 * a[:, 2] * s + 3 * a[:, 3] * s * s
    qdd = 2 * a[:, 2] + 6 * a[:, 3] * s
    return q, qd, qdd


def sample(traj: CubicSplineTrajectory, t: float):
    """Sample (q, qd, qdd, clamped) at time t; out-of-range times clamp."""
    t0, t1 = float(traj.knot_times[0]), float(traj.knot_times[-1])
    clamped = False
    if t < t0:
        t = t0
        clamped = True
    elif t > t1:
        t = t1
        clamped = True
    # Exact knot hits return the stored knot state, so interpolation holds
    # bit-exactly at every knot.
    hit = np.nonzero(traj.knot_times == t)[0]
    if hit.size:
        i = int(hit[0])
        seg = min(i, traj.coeffs.shape[0] - 1)
        s = t - float(traj.knot_times[seg])
        _, _, qdd = eval_segment(traj, seg, s)
        return traj.knot_configs[i].copy(), traj.knot_velocities[i].copy(), qdd, clamped
    seg = int(np.searchsorted(traj.knot_times, t, side="right")) - 1
    seg = min(max(seg, 0), traj.coeffs.shape[0] - 1)
    q, qd, qdd = eval_segment(traj, seg, t - float(traj.knot_times[seg]))
    return q, qd, qdd, clamped


@dataclass(eq=False)
class ValidationReport:
    joint_limit_violations: list = field(default_factory=list)  # (t, joint_index, value)
    velocity_violations: list = field(default_factory=list)  # (t, joint_index, value)
    collisions: list = field(default_factory=list)  # (t, robot poly, env poly, depth)

    @property
    def clean(self) -> bool:
        return not (self.joint_limit_violations or self.velocity_violations or self.collisions)


def validate_trajectory(
    traj: CubicSplineTrajectory,
    model,
    environment=None,
    rate_hz: float = 100.0,
    penetration_tolerance: float = 1e-4,
) -> ValidationReport:
    """Sample the trajectory and report limit violations and collisions.

    Penetrations below ``penetration_tolerance`` are ignored: keyframes
    authored in flush contact interpolate with micrometer-scale surface
    excursions that no controller can resolve.
    """
    from . import geometry
    from .kinematics import forward_kinematics

    report = ValidationReport()
    lo, hi = model.position_limits()
    vel = model.velocity_limits()
    # At least 10 samples per segment so very short transitions cannot hide
    # their mid-segment velocity peaks from the sampling grid.
    n_steps = max(
        2,
        int(np.ceil(traj.duration * rate_hz)) + 1,
        10 * traj.coeffs.shape[0] + 1,
    )
    ts = np.linspace(traj.knot_times[0], traj.knot_times[-1], n_steps)
    env_polys = environment.placed() if environment is not None else []
    for t in ts:
        q, qd, _, _ = sample(traj, float(t))
        for j in range(traj.n_joints):
            if q[j] < lo[j] - 1e-12 or q[j] > hi[j] + 1e-12:
                report.joint_limit_violations.append((float(t), j, float(q[j])))
            if abs(qd[j]) > vel[j] + 1e-12:
                report.velocity_violations.append((float(t), j, float(qd[j])))
        if env_polys:
            poses = forward_kinematics(model, q)
            for rp in geometry.robot_placed_polytopes(model, poses):
                for ep in env_polys:
                    if geometry.aabb_distance(rp, ep) > 0.0:
                        continue
                    res = geometry.proximity(rp, ep)
                    if res.status == geometry.PENETRATING and res.depth > penetration_tolerance:
                        report.collisions.append(
                            (float(t), rp.source.name, ep.source.name, float(res.depth))
                        )
    return report


# ---------------------------------------------------------------------------
# exports


def export_csv(traj: CubicSplineTrajectory, path, rate_hz: float = 100.0) -> None:
    """CSV of (t, q..., qd...) at a fixed sampling rate."""
    n_steps = max(2, int(np.ceil(traj.duration * rate_hz)) + 1)
    ts = np.linspace(traj.knot_times[0], traj.knot_times[-1], n_steps)
    n = traj.n_joints
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + [f"q{j}" for j in range(n)] + [f"qd{j}" for j in range(n)])
        for t in ts:
            q, qd, _, _ = sample(traj, float(t))
            writer.writerow(
                [repr(float(t))] + [repr(float(x)) for x in q] + [repr(float(x)) for x in qd]
            )


def export_coeffs_json(traj: CubicSplineTrajectory, path) -> None:
    """Segment-coefficient dump for controller consumption."""
    doc = {
        "knot_times": [float(x) for x in traj.knot_times],
        "segments": [
            {
                "t_start": float(traj.knot_times[s]),
                "t_end": float(traj.knot_times[s + 1]),
                "coefficients": [[float(c) for c in joint] for joint in traj.coeffs[s]],
            }
            for s in range(traj.coeffs.shape[0])
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
