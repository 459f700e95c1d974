"""Trajectory compilation: minimum-acceleration splines and path validation.

Compiles keyframes into per-joint cubics whose interior knot velocities
minimize the integrated squared acceleration, samples them, and shows the
validator catching a too-fast transition.
"""

import numpy as np

from poseworks import sample_models
from poseworks.trajectory import (
    accel_energy,
    compile_trajectory,
    sample,
    segment_accel_energy,
    validate_trajectory,
)

# Three keyframes for two joints; start velocity zero, end velocity zero.
configs = np.array([[0.0, 0.0], [0.8, -0.4], [0.3, 0.2]])
times = np.array([0.0, 2.0, 4.0])
traj = compile_trajectory(configs, times)

print("interior knot velocities (optimized):", np.round(traj.knot_velocities[1], 4))
print("objective  integral ||q_dd||^2 dt =", round(accel_energy(traj), 6))

# Perturbing the free velocity can only increase the objective.
V = traj.knot_velocities.copy()
V[1, 0] += 1e-3
perturbed = sum(
    segment_accel_energy(configs[s, j], V[s, j], configs[s + 1, j], V[s + 1, j], 2.0)
    for s in range(2)
    for j in range(2)
)
print("perturbed objective:", round(perturbed, 6), "(larger, as it must be)")

# Sampling: knots interpolate exactly; derivatives are continuous.
for t in (0.0, 1.0, 2.0, 3.0, 4.0):
    q, qd, qdd, _ = sample(traj, t)
    print(f"  t={t:.1f}  q={np.round(q, 4)}  qd={np.round(qd, 4)}")

# Validation: a 1 rad swing in 0.1 s peaks at 15 rad/s (1.5 dq/dt for a
# clamped cubic) and trips a 1 rad/s velocity limit.
arm = sample_models.make_planar_arm(vel_limit=1.0)
fast = compile_trajectory([[0.0, 0.0], [1.0, 0.0]], [0.0, 0.1])
report = validate_trajectory(fast, arm)
peak = max(abs(v) for _, _, v in report.velocity_violations)
print(f"\nfast transition: {len(report.velocity_violations)} velocity findings, peak {peak:.2f} rad/s")
