"""Convex collision queries: distance, penetration depth, surface projection.

Shows the three proximity regimes (separated / touching / penetrating), the
surface projector used by contact-mode interaction, and the tangency target
that contact anchors are built from.
"""

import numpy as np

from poseworks.geometry import (
    build_polytope,
    place,
    project_to_surface,
    proximity,
    tangent_contact_target,
)


def cube(center, half=0.5, name="cube"):
    c = np.asarray(center, dtype=float)
    verts = [
        [sx * half + c[0], sy * half + c[1], sz * half + c[2]]
        for sx in (-1, 1)
        for sy in (-1, 1)
        for sz in (-1, 1)
    ]
    return place(build_polytope(np.array(verts), name=name))


a = cube((0, 0, 0), name="a")

for cx, label in ((3.0, "separated"), (1.0, "touching"), (0.75, "penetrating")):
    b = cube((cx, 0, 0), name="b")
    res = proximity(a, b)
    print(f"cubes {cx:.2f} apart -> {res.status:11s}", end="  ")
    if res.status == "separated":
        print(f"distance {res.distance:.3f}, normal {np.round(res.normal, 3)}")
    elif res.status == "penetrating":
        print(f"depth {res.depth:.3f}, normal {np.round(res.normal, 3)}")
    else:
        print()

# Surface projection: the contact-creation flow projects the operator's
# pointer onto the nearest surface and reports the outward normal there.
pt, normal = project_to_surface(a, np.array([0.2, 0.1, 2.0]))
print("\nproject (0.2, 0.1, 2.0) onto the cube ->", np.round(pt, 3), "normal", np.round(normal, 3))

# The tangency target rotates the robot's surface normal onto the negated
# environment normal, leaving yaw about the contact normal free.
target = tangent_contact_target(
    robot_normal=[1.0, 0.0, 0.0], env_point=[0.6, 0.0, 0.3], env_normal=[0.0, 0.0, 1.0]
)
print("\ncontact target at", target.position)
print("  aligning rotation maps +x to", np.round(target.rotation @ np.array([1.0, 0, 0]), 3))
print("  axis mask (ang xyz, lin xyz):", target.axis_mask)
