"""Ready-made robot models and environments used by the demos and test suite."""

from __future__ import annotations

import numpy as np

from .kinematics import (
    FREE_BASE,
    PLANAR_BASE,
    PRISMATIC,
    REVOLUTE,
    WORLD,
    RigidBody,
    RobotModel,
    forward_kinematics,
    make_joint,
)
from .transforms import Transform


def _box_vertices(hx: float, hy: float, hz: float, center=(0.0, 0.0, 0.0)) -> np.ndarray:
    c = np.asarray(center, dtype=float)
    corners = np.array(
        [[sx * hx, sy * hy, sz * hz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)]
    )
    return corners + c


def make_planar_arm(
    link_lengths=(1.0, 1.0),
    mass_per_link: float = 1.0,
    torque_limit: float = 50.0,
    vel_limit: float = 10.0,
    pos_limits=(-np.pi, np.pi),
) -> RobotModel:
    """Fixed-base arm in the x-z plane, revolute joints about +y.

    At q = 0 the links lie along +x, so a 2-link unit arm puts the tip body
    origin at (2, 0, 0).
    """
    bodies = [RigidBody("base", mass=0.0, com=np.zeros(3), origin=Transform.identity())]
    joints = []
    parent = "base"
    offset = 0.0
    for i, length in enumerate(link_lengths):
        link = f"link{i + 1}"
        bodies.append(
            RigidBody(
                link,
                mass=mass_per_link,
                com=np.array([length / 2.0, 0.0, 0.0]),
                origin=Transform.from_parts(translation=[offset, 0.0, 0.0]),
            )
        )
        joints.append(
            make_joint(
                f"j{i + 1}",
                REVOLUTE,
                parent=parent,
                child=link,
                axis=(0.0, 1.0, 0.0),
                pos_limits=pos_limits,
                vel_limit=vel_limit,
                torque_limits=(-torque_limit, torque_limit),
            )
        )
        parent = link
        offset = length
    return RobotModel("planar_arm", bodies, joints, np.zeros(len(link_lengths)))


def make_pendulum(length: float = 1.0, mass: float = 1.0) -> RobotModel:
    """One revolute joint about +y; at q = 0 the point mass hangs at (0, 0, -length)."""
    bodies = [
        RigidBody("base", mass=0.0, com=np.zeros(3), origin=Transform.identity()),
        RigidBody("bob", mass=mass, com=np.array([0.0, 0.0, -length]), origin=Transform.identity()),
    ]
    joints = [
        make_joint(
            "hinge",
            REVOLUTE,
            parent="base",
            child="bob",
            axis=(0.0, 1.0, 0.0),
            pos_limits=(-2 * np.pi, 2 * np.pi),
            torque_limits=(-100.0, 100.0),
        )
    ]
    return RobotModel("pendulum", bodies, joints, np.zeros(1))


def make_serial_arm(seed: int = 0, n_joints: int = 6) -> RobotModel:
    """Mixed revolute/prismatic chain with varied axes, for derivative checks."""
    rng = np.random.RandomState(seed)
    axes = [
        (0.0, 0.0, 1.0),
        (0.0, 1.0, 0.0),
        (1.0, 0.0, 0.0),
        (0.0, 1.0, 0.0),
        (0.0, 0.0, 1.0),
        (1.0, 0.0, 0.0),
    ]
    bodies = [RigidBody("base", mass=0.1, com=np.zeros(3), origin=Transform.identity())]
    joints = []
    parent = "base"
    for i in range(n_joints):
        link = f"link{i + 1}"
        jtype = PRISMATIC if i == 3 else REVOLUTE
        offset = rng.uniform(-0.3, 0.3, size=3) + np.array([0.25, 0.0, 0.1])
        bodies.append(
            RigidBody(
                link,
                mass=0.5 + 0.1 * i,
                com=rng.uniform(-0.1, 0.1, size=3),
                origin=Transform.from_parts(translation=offset),
            )
        )
        joints.append(
            make_joint(
                f"j{i + 1}",
                jtype,
                parent=parent,
                child=link,
                axis=axes[i % len(axes)],
                pos_limits=(-2.0, 2.0),
                vel_limit=5.0,
                torque_limits=(-40.0, 40.0),
            )
        )
        parent = link
    return RobotModel("serial6", bodies, joints, np.zeros(n_joints))


def make_chain_3dof(
    link_length: float = 0.4,
    torque_limit=(-30.0, 30.0),
    axes=((0.0, 1.0, 0.0), (0.0, 0.0, 1.0), (0.0, 1.0, 0.0)),
) -> RobotModel:
    """Three-link chain with mixed joint axes (full-rank contact Jacobian)."""
    bodies = [RigidBody("base", mass=0.1, com=np.zeros(3), origin=Transform.identity())]
    joints = []
    parent = "base"
    for i in range(3):
        link = f"link{i + 1}"
        bodies.append(
            RigidBody(
                link,
                mass=0.8,
                com=np.array([link_length / 2.0, 0.0, 0.0]),
                origin=Transform.from_parts(
                    translation=[0.0 if i == 0 else link_length, 0.0, 0.0]
                ),
            )
        )
        joints.append(
            make_joint(
                f"j{i + 1}",
                REVOLUTE,
                parent=parent,
                child=link,
                axis=axes[i],
                pos_limits=(-np.pi, np.pi),
                vel_limit=8.0,
                torque_limits=torque_limit,
            )
        )
        parent = link
    return RobotModel("chain3", bodies, joints, np.zeros(3))


# ---------------------------------------------------------------------------
# test humanoid: free base + 2 legs (hip/knee/ankle pitch) + 2 arms
# (shoulder/elbow pitch) = 16 dof


HUMANOID_FOOT_HALF = (0.10, 0.05, 0.025)
HUMANOID_HIP_Y = 0.12
HUMANOID_THIGH = 0.40
HUMANOID_SHIN = 0.40
HUMANOID_ANKLE_DROP = 0.05
HUMANOID_SHOULDER_Y = 0.20
HUMANOID_SHOULDER_Z = 0.45
HUMANOID_UPPER_ARM = 0.30
HUMANOID_FOREARM = 0.30


def make_humanoid(bent: float = 0.25, sole_clearance: float = 0.0) -> RobotModel:
    """Small test humanoid standing with slightly bent knees, soles on z = 0.

    ``sole_clearance`` lifts the nominal base so the soles hover above the
    ground plane (useful for interpolation fixtures over a ground slab).
    """

    def leg(side: str, sign: float, bodies, joints, polytopes):
        hip = f"{side}_thigh"
        shin = f"{side}_shin"
        foot = f"{side}_foot"
        bodies.append(
            RigidBody(
                hip,
                mass=4.0,
                com=np.array([0.0, 0.0, -HUMANOID_THIGH / 2.0]),
                origin=Transform.from_parts(translation=[0.0, sign * HUMANOID_HIP_Y, 0.0]),
            )
        )
        joints.append(
            make_joint(
                f"{side}_hip_pitch",
                REVOLUTE,
                parent="pelvis",
                child=hip,
                axis=(0.0, 1.0, 0.0),
                pos_limits=(-1.8, 1.8),
                vel_limit=6.0,
                torque_limits=(-150.0, 150.0),
                mirror=f"{'r' if side == 'l' else 'l'}_hip_pitch",
            )
        )
        bodies.append(
            RigidBody(
                shin,
                mass=3.0,
                com=np.array([0.0, 0.0, -HUMANOID_SHIN / 2.0]),
                origin=Transform.from_parts(translation=[0.0, 0.0, -HUMANOID_THIGH]),
            )
        )
        joints.append(
            make_joint(
                f"{side}_knee_pitch",
                REVOLUTE,
                parent=hip,
                child=shin,
                axis=(0.0, 1.0, 0.0),
                pos_limits=(-0.05, 2.4),
                vel_limit=6.0,
                torque_limits=(-120.0, 120.0),
                mirror=f"{'r' if side == 'l' else 'l'}_knee_pitch",
            )
        )
        bodies.append(
            RigidBody(
                foot,
                mass=1.0,
                com=np.array([0.02, 0.0, -HUMANOID_ANKLE_DROP / 2.0]),
                origin=Transform.from_parts(translation=[0.0, 0.0, -HUMANOID_SHIN]),
                polytope_ids=(f"{side}_foot_box",),
            )
        )
        joints.append(
            make_joint(
                f"{side}_ankle_pitch",
                REVOLUTE,
                parent=shin,
                child=foot,
                axis=(0.0, 1.0, 0.0),
                pos_limits=(-1.0, 1.0),
                vel_limit=6.0,
                torque_limits=(-60.0, 60.0),
                mirror=f"{'r' if side == 'l' else 'l'}_ankle_pitch",
            )
        )
        hx, hy, hz = HUMANOID_FOOT_HALF
        polytopes.append(
            {
                "id": f"{side}_foot_box",
                "body": foot,
                "vertices": _box_vertices(hx, hy, hz, center=(0.02, 0.0, -HUMANOID_ANKLE_DROP + hz)),
            }
        )

    def arm(side: str, sign: float, bodies, joints, polytopes):
        upper = f"{side}_upper_arm"
        fore = f"{side}_forearm"
        bodies.append(
            RigidBody(
                upper,
                mass=2.0,
                com=np.array([0.0, 0.0, -HUMANOID_UPPER_ARM / 2.0]),
                origin=Transform.from_parts(
                    translation=[0.0, sign * HUMANOID_SHOULDER_Y, HUMANOID_SHOULDER_Z]
                ),
            )
        )
        joints.append(
            make_joint(
                f"{side}_shoulder_pitch",
                REVOLUTE,
                parent="torso",
                child=upper,
                axis=(0.0, 1.0, 0.0),
                pos_limits=(-2.5, 2.5),
                vel_limit=8.0,
                torque_limits=(-80.0, 80.0),
                mirror=f"{'r' if side == 'l' else 'l'}_shoulder_pitch",
            )
        )
        bodies.append(
            RigidBody(
                fore,
                mass=1.5,
                com=np.array([0.0, 0.0, -HUMANOID_FOREARM / 2.0]),
                origin=Transform.from_parts(translation=[0.0, 0.0, -HUMANOID_UPPER_ARM]),
                polytope_ids=(f"{side}_hand_box",),
            )
        )
        joints.append(
            make_joint(
                f"{side}_elbow_pitch",
                REVOLUTE,
                parent=upper,
                child=fore,
                axis=(0.0, 1.0, 0.0),
                pos_limits=(-2.4, 2.4),
                vel_limit=8.0,
                torque_limits=(-40.0, 40.0),
                mirror=f"{'r' if side == 'l' else 'l'}_elbow_pitch",
            )
        )
        polytopes.append(
            {
                "id": f"{side}_hand_box",
                "body": fore,
                "vertices": _box_vertices(0.04, 0.04, 0.06, center=(0.0, 0.0, -HUMANOID_FOREARM)),
            }
        )

    bodies = [
        RigidBody("pelvis", mass=8.0, com=np.zeros(3), origin=Transform.identity()),
        RigidBody(
            "torso",
            mass=16.0,
            com=np.array([0.0, 0.0, 0.25]),
            origin=Transform.identity(),
            polytope_ids=("torso_box",),
        ),
    ]
    joints = [
        make_joint(
            "base",
            FREE_BASE,
            parent=WORLD,
            child="pelvis",
            axis=(0.0, 0.0, 1.0),
            vel_limit=4.0,
        ),
        make_joint(
            "torso_pitch",
            REVOLUTE,
            parent="pelvis",
            child="torso",
            axis=(0.0, 1.0, 0.0),
            pos_limits=(-0.8, 0.8),
            vel_limit=4.0,
            torque_limits=(-200.0, 200.0),
        ),
    ]
    polytopes = [
        {"id": "torso_box", "body": "torso", "vertices": _box_vertices(0.12, 0.16, 0.25, center=(0.0, 0.0, 0.25))}
    ]
    leg("l", +1.0, bodies, joints, polytopes)
    leg("r", -1.0, bodies, joints, polytopes)
    arm("l", +1.0, bodies, joints, polytopes)
    arm("r", -1.0, bodies, joints, polytopes)

    n = 6 + 1 + 3 * 2 + 2 * 2  # free base + torso + legs + arms = 17
    q = np.zeros(n)
    model = RobotModel("humanoid16", bodies, joints, q, polytopes)
    # Legs: bend hip back, knee forward, ankle compensates so the sole stays flat.
    for side in ("l", "r"):
        q[model.q_slice(f"{side}_hip_pitch")] = -bent
        q[model.q_slice(f"{side}_knee_pitch")] = 2 * bent
        q[model.q_slice(f"{side}_ankle_pitch")] = -bent
    # Drop the base so the sole plane sits on z = 0 (plus any clearance).
    poses = forward_kinematics(model, q)
    sole_z = poses["l_foot"].translation[2] - HUMANOID_ANKLE_DROP
    q[2] = -sole_z + sole_clearance
    return RobotModel("humanoid16", bodies, joints, q, polytopes)


def humanoid_foot_corners() -> np.ndarray:
    """Sole corner points in the foot body frame (4, 3); same for both feet."""
    hx, hy, hz = HUMANOID_FOOT_HALF
    cx, cz = 0.02, -HUMANOID_ANKLE_DROP
    return np.array(
        [
            [cx - hx, -hy, cz],
            [cx + hx, -hy, cz],
            [cx + hx, hy, cz],
            [cx - hx, hy, cz],
        ]
    )


def make_planar_biped(
    leg_length: float = 0.5,
    stance: float = 0.3,
    torque_limit: float = 12.0,
    base_mass: float = 10.0,
) -> RobotModel:
    """Planar-base toy: two single-joint legs whose tips touch the ground.

    The base moves in the x-z plane; each leg is one revolute (pitch) joint.
    With symmetric angles the tips rest at ``x = +/- stance`` on z = 0.
    """
    angle = np.arcsin(stance / leg_length)
    height = leg_length * np.cos(angle)
    bodies = [
        RigidBody("trunk", mass=base_mass, com=np.zeros(3), origin=Transform.identity()),
        RigidBody(
            "front_leg",
            mass=1.0,
            com=np.array([0.0, 0.0, -leg_length / 2.0]),
            origin=Transform.identity(),
        ),
        RigidBody(
            "back_leg",
            mass=1.0,
            com=np.array([0.0, 0.0, -leg_length / 2.0]),
            origin=Transform.identity(),
        ),
    ]
    joints = [
        make_joint("base", PLANAR_BASE, parent=WORLD, child="trunk", axis=(0.0, 1.0, 0.0), vel_limit=5.0),
        make_joint(
            "front_hip",
            REVOLUTE,
            parent="trunk",
            child="front_leg",
            axis=(0.0, 1.0, 0.0),
            pos_limits=(-1.4, 1.4),
            vel_limit=8.0,
            torque_limits=(-torque_limit, torque_limit),
        ),
        make_joint(
            "back_hip",
            REVOLUTE,
            parent="trunk",
            child="back_leg",
            axis=(0.0, 1.0, 0.0),
            pos_limits=(-1.4, 1.4),
            vel_limit=8.0,
            torque_limits=(-torque_limit, torque_limit),
        ),
    ]
    q = np.zeros(5)
    q[1] = height  # base z
    q[3] = angle  # front leg forward
    q[4] = -angle  # back leg backward
    return RobotModel("planar_biped", bodies, joints, q)


def planar_biped_tip(model: RobotModel, q, leg: str) -> np.ndarray:
    poses = forward_kinematics(model, q)
    tip_local = np.array([0.0, 0.0, -0.5])
    return poses[f"{leg}_leg"].apply(tip_local)


def humanoid_foot_contacts(mu: float = 0.7, sides=("l", "r")) -> list:
    """Corner point contacts for the humanoid's soles (flat ground)."""
    from .feasibility import ContactPoint

    contacts = []
    for side in sides:
        for k, corner in enumerate(humanoid_foot_corners()):
            contacts.append(
                ContactPoint(
                    body=f"{side}_foot",
                    point=corner,
                    normal=np.array([0.0, 0.0, 1.0]),
                    mu=mu,
                    name=f"{side}_foot_c{k}",
                )
            )
    return contacts


def planar_biped_contacts(mu: float = 0.5) -> list:
    """Tip contacts of the planar biped's two legs."""
    from .feasibility import ContactPoint

    tip = np.array([0.0, 0.0, -0.5])
    up = np.array([0.0, 0.0, 1.0])
    return [
        ContactPoint(body="front_leg", point=tip, normal=up, mu=mu, name="front_tip"),
        ContactPoint(body="back_leg", point=tip, normal=up, mu=mu, name="back_tip"),
    ]


# ---------------------------------------------------------------------------
# environments


def ground_slab(halfx: float = 2.0, halfy: float = 2.0, thickness: float = 0.1) -> dict:
    return {
        "name": "ground",
        "vertices": _box_vertices(halfx, halfy, thickness / 2.0, center=(0.0, 0.0, -thickness / 2.0)).tolist(),
    }


def wall_slab(x: float, halfy: float = 1.0, halfz: float = 1.0, thickness: float = 0.1) -> dict:
    return {
        "name": "wall",
        "vertices": _box_vertices(thickness / 2.0, halfy, halfz, center=(x + thickness / 2.0, 0.0, halfz)).tolist(),
    }


def block(center, half_extents, name: str = "block") -> dict:
    hx, hy, hz = half_extents
    return {"name": name, "vertices": _box_vertices(hx, hy, hz, center=center).tolist()}
