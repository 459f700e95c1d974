"""Forward kinematics, Jacobians and centroidal quantities on sample robots.

Walks through the kinematic layer: build a model, query body poses, inspect
a Jacobian against finite differences, and read off the center of mass and
gravity torques.
"""

import numpy as np

from poseworks import sample_models
from poseworks.kinematics import (
    com_and_momentum_matrix,
    forward_kinematics,
    gravity_torques,
    integrate,
    spatial_jacobian,
)
from poseworks.transforms import Transform

# A planar two-link arm: revolute joints about +y, links along +x at q = 0.
arm = sample_models.make_planar_arm()
q = np.array([0.4, -0.9])

poses = forward_kinematics(arm, q)
tip = poses["link2"].apply([1.0, 0.0, 0.0])
print("two-link arm at q =", q)
print("  link poses:", {name: np.round(p.translation, 4).tolist() for name, p in poses.items()})
print("  tip position:", np.round(tip, 4))

# The spatial Jacobian maps joint velocities to the tip's world velocity
# (angular rows first, then linear). Check one column with a finite
# difference through the integrate() retraction.
offset = Transform.from_parts(translation=[1.0, 0.0, 0.0])
J = spatial_jacobian(arm, q, "link2", offset)
h = 1e-6
e0 = np.array([1.0, 0.0])
tip_plus = forward_kinematics(arm, integrate(arm, q, e0, h))["link2"].apply([1, 0, 0])
tip_minus = forward_kinematics(arm, integrate(arm, q, e0, -h))["link2"].apply([1, 0, 0])
fd = (tip_plus - tip_minus) / (2 * h)
print("  J linear column 0:", np.round(J[3:6, 0], 6), " finite difference:", np.round(fd, 6))

# Centroidal quantities on the 17-dof humanoid: the momentum matrix A maps
# joint velocities to linear momentum, and its z row times g is exactly the
# static gravity torque vector.
humanoid = sample_models.make_humanoid()
com, A = com_and_momentum_matrix(humanoid, humanoid.nominal_q)
tau_g = gravity_torques(humanoid, humanoid.nominal_q)
print("\nhumanoid standing:")
print("  total mass:", humanoid.total_mass, "kg")
print("  CoM:", np.round(com, 4))
print("  gravity torque at l_knee_pitch:", round(float(tau_g[humanoid.q_slice('l_knee_pitch')][0]), 3), "N*m")
