"""Actuation feasibility: force polytopes, support regions, torque reports.

Reproduces the feasibility workflow at desk scale: contact force polytopes
from torque-box corners, the flat hull versus the friction/actuation-aware
support region, static torque saturation, and the stability margin that the
batch report command writes per keyframe.
"""

import numpy as np

from poseworks import sample_models
from poseworks.feasibility import (
    ContactPoint,
    RegionOptions,
    force_polytope,
    stability_margin,
    static_torques,
    support_region_flat,
    support_region_multicontact,
)
from poseworks.kinematics import com_and_momentum_matrix
from poseworks.transforms import matrix_to_rotvec, rotvec_to_matrix

# Contact force polytope of a three-joint limb: each of the 2^3 torque-box
# corners maps through the pseudoinverse of the contact Jacobian transpose.
chain = sample_models.make_chain_3dof(torque_limit=(-25.0, 25.0))
contact = ContactPoint(body="link3", point=np.array([0.4, 0, 0]), normal=np.array([0.0, 0, 1.0]))
fp = force_polytope(chain, np.array([0.5, -0.7, 0.4]), contact)
print("force polytope of a 3-joint limb:")
print("  raw corner projections:", fp.vertices_raw.shape[0])
print("  hull vertices:", fp.vertices.shape[0])
print("  max |f|:", round(float(np.abs(fp.vertices).max()), 1), "N")

# Support regions for the standing humanoid.
humanoid = sample_models.make_humanoid()
contacts = sample_models.humanoid_foot_contacts()
flat = support_region_flat(humanoid, humanoid.nominal_q, contacts)
multi = support_region_multicontact(humanoid, humanoid.nominal_q, contacts, RegionOptions())
com, _ = com_and_momentum_matrix(humanoid, humanoid.nominal_q)
print("\nstanding humanoid support regions:")
print(f"  flat hull area        {flat.area():.4f} m^2, margin {stability_margin(flat, com[:2]):+.4f} m")
print(f"  multi-contact area    {multi.area():.4f} m^2, margin {stability_margin(multi, com[:2]):+.4f} m")
print("  (actuation and friction make the generalized region more restrictive)")

# Static torques: equilibrium contact forces minimizing squared joint torque.
report = static_torques(humanoid, humanoid.nominal_q, contacts)
fz = sum(f[2] for f in report.contact_forces)
worst = max(
    (float(report.saturation[humanoid.q_slice(j.name).start]), j.name)
    for j in humanoid.joints
    if not j.is_base
)
print("\nstatic torque report:")
print(f"  vertical force sum {fz:.2f} N vs weight {humanoid.total_mass * 9.81:.2f} N")
print(f"  most saturated joint: {worst[1]} at {100 * worst[0]:.1f}% of its limit")

# Bracing against a wall: lean the robot forward about the ankles until the
# CoM leaves the foot hull; wall contacts at the hands restore feasibility.
q = humanoid.nominal_q.copy()
theta = 0.25
Ry = rotvec_to_matrix([0.0, theta, 0.0])
pivot = np.array([0.0, 0.0, sample_models.HUMANOID_ANKLE_DROP])
q[0:3] = pivot + Ry @ (q[0:3] - pivot)
q[3:6] = matrix_to_rotvec(Ry @ rotvec_to_matrix(q[3:6]))
for side in ("l", "r"):
    q[humanoid.q_slice(f"{side}_ankle_pitch")] -= theta
    q[humanoid.q_slice(f"{side}_shoulder_pitch")] = -1.35
    q[humanoid.q_slice(f"{side}_elbow_pitch")] = -0.15
com, _ = com_and_momentum_matrix(humanoid, q)
braced = contacts + [
    ContactPoint(
        body=f"{s}_forearm", point=np.array([0.0, 0.0, -0.3]),
        normal=np.array([-1.0, 0.0, 0.0]), mu=0.7, name=f"{s}_hand",
    )
    for s in ("l", "r")
]
m_flat = stability_margin(support_region_flat(humanoid, q, contacts), com[:2])
m_multi = stability_margin(support_region_multicontact(humanoid, q, braced), com[:2])
print("\nwall bracing, leaned forward:")
print(f"  flat-ground margin    {m_flat:+.4f} m   (unstable without the wall)")
print(f"  multi-contact margin  {m_multi:+.4f} m   (wall contact extends the region)")
