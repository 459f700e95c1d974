"""Whole-body IK: pose anchors, CoM containment, and collision push-out.

Three solves of increasing richness:
1. a reachable end-effector target on the two-link arm,
2. a humanoid CoM shift capped by a support-region constraint,
3. automatic separation from a penetrating obstacle.
"""

import numpy as np

from poseworks import sample_models
from poseworks.geometry import Environment, build_polytope, proximity, robot_placed_polytopes
from poseworks.ik import CoMTask, SolverSettings, SpatialPoseTask, solve
from poseworks.kinematics import com_and_momentum_matrix, forward_kinematics
from poseworks.transforms import Transform

# 1. Reach a point with the two-link arm.
arm = sample_models.make_planar_arm()
tip_offset = Transform.from_parts(translation=[1.0, 0.0, 0.0])
target = np.array([1.4, 0.0, -0.5])
task = SpatialPoseTask(
    "link2",
    target=Transform.from_parts(translation=target),
    control_frame=tip_offset,
    axes=(False, False, False, True, False, True),  # x/z position only
    weight=100.0,
)
q0 = np.array([0.3, -0.5])
q, diag = solve(arm, q0, [task], nominal_q=q0)
tip = forward_kinematics(arm, q)["link2"].apply([1.0, 0, 0])
print(f"arm reach: {diag.status} in {diag.iterations} iterations,"
      f" residual {np.linalg.norm(tip - target):.2e} m")

# 2. Humanoid CoM shift with a one-step containment constraint: ask for
# 20 cm, get capped at the region edge 5 cm away.
humanoid = sample_models.make_humanoid()
com0, _ = com_and_momentum_matrix(humanoid, humanoid.nominal_q)
region = np.array([[-0.05, -0.2], [0.05, -0.2], [0.05, 0.2], [-0.05, 0.2]]) + com0[:2]
com_task = CoMTask(target=com0 + np.array([0.2, 0.0, 0.0]), axes=(True, True, False), weight=100.0)
q, diag = solve(humanoid, humanoid.nominal_q, [com_task], region=region, max_iterations=120)
com, _ = com_and_momentum_matrix(humanoid, q)
print(f"humanoid CoM shift: asked +0.200 m, achieved {com[0] - com0[0]:+.4f} m "
      f"(region edge at +0.050), status {diag.status}")

# 3. Collision push-out: a hand box starts 1 cm inside a wall; the
# penetration feedback task separates it.
arm2 = sample_models.make_planar_arm()
arm2.polytopes.append(
    {
        "id": "hand",
        "body": "link2",
        "vertices": sample_models._box_vertices(0.05, 0.05, 0.05, center=(1.0, 0.0, 0.0)),
    }
)
env = Environment(
    "wall",
    [build_polytope(sample_models._box_vertices(0.1, 0.5, 0.5, center=(2.14, 0.0, 0.0)), name="wall")],
)
q, diag = solve(arm2, np.zeros(2), [], environment=env, settings=SolverSettings(), max_iterations=50)
placed = robot_placed_polytopes(arm2, forward_kinematics(arm2, q))
res = proximity(placed[0], env.placed()[0])
print(f"collision push-out: final status {res.status}"
      + (f", clearance {res.distance * 1000:.2f} mm" if res.status == "separated" else ""))
