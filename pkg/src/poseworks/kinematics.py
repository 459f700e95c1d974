"""Rigid-body tree model: forward kinematics, Jacobians, centroidal quantities.

All operations are pure functions over an immutable :class:`RobotModel` and a
configuration vector ``q``; no state is shared between calls.

Conventions
-----------
* Configurations stack per-joint segments in the order of ``model.joints``.
  Revolute/prismatic joints contribute one entry, a planar base three
  ``(x, z, pitch)``, and a free base six ``(x, y, z, rx, ry, rz)`` with the
  orientation stored as a rotation vector.
* Velocity vectors use world-frame linear/angular rates for base joints, so
  the free-base orientation integrates on the rotation group:
  ``R <- exp(hat(w) * dt) @ R``.
* Jacobians are 6 x n with angular rows first, then linear rows, both in
  world coordinates.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .transforms import (
    Transform,
    matrix_to_rotvec,
    matrix_to_rpy,
    rotvec_to_matrix,
    rpy_to_matrix,
)

GRAVITY = 9.81

REVOLUTE = "revolute"
PRISMATIC = "prismatic"
PLANAR_BASE = "planar-base"
FREE_BASE = "free-base"

_JOINT_DOF = {REVOLUTE: 1, PRISMATIC: 1, PLANAR_BASE: 3, FREE_BASE: 6}
BASE_TYPES = (PLANAR_BASE, FREE_BASE)

WORLD = "world"


class ModelError(ValueError):
    """Raised for structurally invalid robot models or unknown references."""


class ConfigurationError(ValueError):
    """Raised when a configuration vector does not match the model."""


@dataclass(frozen=True, eq=False)
class JointSpec:
    name: str
    joint_type: str
    axis: np.ndarray
    parent: str
    child: str
    pos_lower: np.ndarray
    pos_upper: np.ndarray
    vel_limit: float
    tau_lower: np.ndarray
    tau_upper: np.ndarray
    mirror: str | None = None

    @property
    def dof(self) -> int:
        return _JOINT_DOF[self.joint_type]

    @property
    def is_base(self) -> bool:
        return self.joint_type in BASE_TYPES


@dataclass(frozen=True, eq=False)
class RigidBody:
    name: str
    mass: float
    com: np.ndarray
    origin: Transform
    polytope_ids: tuple[str, ...] = ()


def _as_limits(value, dof: int, default: float) -> np.ndarray:
    """Broadcast a scalar / pair / per-dof list to a (dof,) array."""
    if value is None:
        return np.full(dof, default)
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return np.full(dof, float(arr))
    if arr.shape == (dof,):
        return arr.copy()
    raise ModelError(f"limit shape {arr.shape} incompatible with {dof} dof")


def make_joint(
    name: str,
    joint_type: str,
    parent: str,
    child: str,
    axis=(0.0, 0.0, 1.0),
    pos_limits=None,
    vel_limit: float = 10.0,
    torque_limits=None,
    mirror: str | None = None,
) -> JointSpec:
    if joint_type not in _JOINT_DOF:
        raise ModelError(f"unknown joint type {joint_type!r}")
    dof = _JOINT_DOF[joint_type]
    axis = np.asarray(axis, dtype=float)
    if abs(np.linalg.norm(axis) - 1.0) > 1e-9:
        raise ModelError(f"joint {name!r}: axis must have unit norm")
    if vel_limit <= 0.0:
        raise ModelError(f"joint {name!r}: velocity limit must be positive")
    if pos_limits is None:
        lower = np.full(dof, -np.inf)
        upper = np.full(dof, np.inf)
    else:
        lo, hi = pos_limits
        lower = _as_limits(lo, dof, -np.inf)
        upper = _as_limits(hi, dof, np.inf)
    if np.any(lower >= upper):
        raise ModelError(f"joint {name!r}: lower position limit must be < upper")
    if torque_limits is None:
        tau_lo = np.zeros(dof)
        tau_hi = np.zeros(dof)
    else:
        tlo, thi = torque_limits
        tau_lo = _as_limits(tlo, dof, 0.0)
        tau_hi = _as_limits(thi, dof, 0.0)
    if np.any(tau_lo > tau_hi):
        raise ModelError(f"joint {name!r}: torque lower bound exceeds upper bound")
    return JointSpec(
        name=name,
        joint_type=joint_type,
        axis=axis,
        parent=parent,
        child=child,
        pos_lower=lower,
        pos_upper=upper,
        vel_limit=float(vel_limit),
        tau_lower=tau_lo,
        tau_upper=tau_hi,
        mirror=mirror,
    )


class RobotModel:
    """Kinematic tree with joint limits, torque limits and link masses.

    Construction validates the tree structure: every body except the root has
    exactly one parent joint, there are no cycles, masses are non-negative
    with positive total, and mirror partnerships are symmetric.
    """

    def __init__(self, name: str, bodies, joints, nominal_q, polytopes=None):
        self.name = name
        self.bodies: tuple[RigidBody, ...] = tuple(bodies)
        self.joints: tuple[JointSpec, ...] = tuple(joints)
        self.polytopes = list(polytopes) if polytopes is not None else []

        self._body_index = {b.name: i for i, b in enumerate(self.bodies)}
        if len(self._body_index) != len(self.bodies):
            raise ModelError("duplicate body names")
        self._joint_index = {j.name: i for i, j in enumerate(self.joints)}
        if len(self._joint_index) != len(self.joints):
            raise ModelError("duplicate joint names")

        # q layout: contiguous segment per joint, in declaration order.
        self._q_offset: dict[str, int] = {}
        offset = 0
        for j in self.joints:
            self._q_offset[j.name] = offset
            offset += j.dof
        self.n = offset

        self._parent_joint: dict[str, JointSpec] = {}
        for j in self.joints:
            if j.child not in self._body_index:
                raise ModelError(f"joint {j.name!r}: unknown child body {j.child!r}")
            if j.child in self._parent_joint:
                raise ModelError(f"body {j.child!r} has more than one parent joint")
            if j.parent != WORLD and j.parent not in self._body_index:
                raise ModelError(f"joint {j.name!r}: unknown parent body {j.parent!r}")
            if j.is_base and j.parent != WORLD:
                raise ModelError(f"base joint {j.name!r} must attach to the world frame")
            self._parent_joint[j.child] = j

        roots = [
            b.name
            for b in self.bodies
            if b.name not in self._parent_joint or self._parent_joint[b.name].parent == WORLD
        ]
        if len(roots) != 1:
            raise ModelError(f"model must have exactly one root body, found {roots}")
        self.root = roots[0]

        # Topological order via walk from the root; also catches cycles and
        # disconnected bodies.
        children: dict[str, list[str]] = {b.name: [] for b in self.bodies}
        for body, joint in self._parent_joint.items():
            if joint.parent != WORLD:
                children[joint.parent].append(body)
        order: list[str] = []
        stack = [self.root]
        while stack:
            cur = stack.pop()
            order.append(cur)
            stack.extend(reversed(children[cur]))
        if len(order) != len(self.bodies):
            missing = set(self._body_index) - set(order)
            raise ModelError(f"bodies unreachable from root (cycle or orphan): {sorted(missing)}")
        self._topo_order = tuple(order)

        for b in self.bodies:
            if b.mass < 0.0:
                raise ModelError(f"body {b.name!r}: negative mass")
            if not b.origin.is_rigid():
                raise ModelError(f"body {b.name!r}: origin transform is not rigid")
        self.total_mass = float(sum(b.mass for b in self.bodies))
        if self.total_mass <= 0.0:
            raise ModelError("total mass must be positive")

        for j in self.joints:
            if j.mirror is not None:
                partner = self._joint_index.get(j.mirror)
                if partner is None:
                    raise ModelError(f"joint {j.name!r}: unknown mirror partner {j.mirror!r}")
                if self.joints[partner].mirror != j.name:
                    raise ModelError(
                        f"mirror partnership {j.name!r} <-> {j.mirror!r} is not symmetric"
                    )
            if j.joint_type == PLANAR_BASE and not np.allclose(j.axis, [0.0, 1.0, 0.0]):
                raise ModelError("planar-base joints support only axis (0, 1, 0): x/z/pitch")

        # Ancestor joint chain (root -> body) per body, indices into joints.
        self._chain: dict[str, tuple[int, ...]] = {}
        for body in self._topo_order:
            chain: list[int] = []
            cur = body
            while cur in self._parent_joint:
                j = self._parent_joint[cur]
                chain.append(self._joint_index[j.name])
                if j.parent == WORLD:
                    break
                cur = j.parent
            self._chain[body] = tuple(reversed(chain))

        self.nominal_q = np.asarray(nominal_q, dtype=float).copy()
        self.check_config(self.nominal_q)

    # -- lookups -----------------------------------------------------------

    def body(self, name: str) -> RigidBody:
        try:
            return self.bodies[self._body_index[name]]
        except KeyError:
            raise ModelError(f"unknown body {name!r}") from None

    def joint(self, name: str) -> JointSpec:
        try:
            return self.joints[self._joint_index[name]]
        except KeyError:
            raise ModelError(f"unknown joint {name!r}") from None

    def has_body(self, name: str) -> bool:
        return name in self._body_index

    def q_slice(self, joint_name: str) -> slice:
        j = self.joint(joint_name)
        off = self._q_offset[joint_name]
        return slice(off, off + j.dof)

    def chain_joints(self, body: str, actuated_only: bool = True) -> tuple[str, ...]:
        """Joint names on the path root -> body; base joints dropped by default."""
        names = [self.joints[i].name for i in self._chain[self._require_body(body)]]
        if actuated_only:
            names = [n for n in names if not self.joint(n).is_base]
        return tuple(names)

    def _require_body(self, name: str) -> str:
        if name not in self._body_index:
            raise ModelError(f"unknown body {name!r}")
        return name

    def mirror_partner(self, joint_name: str) -> str | None:
        return self.joint(joint_name).mirror

    # -- limit vectors -----------------------------------------------------

    def position_limits(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.concatenate([j.pos_lower for j in self.joints]) if self.joints else np.zeros(0)
        hi = np.concatenate([j.pos_upper for j in self.joints]) if self.joints else np.zeros(0)
        return lo, hi

    def velocity_limits(self) -> np.ndarray:
        if not self.joints:
            return np.zeros(0)
        return np.concatenate([np.full(j.dof, j.vel_limit) for j in self.joints])

    def torque_limits(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.concatenate([j.tau_lower for j in self.joints]) if self.joints else np.zeros(0)
        hi = np.concatenate([j.tau_upper for j in self.joints]) if self.joints else np.zeros(0)
        return lo, hi

    def base_dof_mask(self) -> np.ndarray:
        """Boolean mask over q entries belonging to unactuated base joints."""
        mask = np.zeros(self.n, dtype=bool)
        for j in self.joints:
            if j.is_base:
                mask[self.q_slice(j.name)] = True
        return mask

    def check_config(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        if q.shape != (self.n,):
            raise ConfigurationError(f"configuration has shape {q.shape}, expected ({self.n},)")
        if not np.all(np.isfinite(q)):
            raise ConfigurationError("configuration contains non-finite entries")
        return q


# ---------------------------------------------------------------------------
# forward kinematics


def _joint_motion(joint: JointSpec, qj: np.ndarray) -> Transform:
    if joint.joint_type == REVOLUTE:
        return Transform(rotvec_to_matrix(joint.axis * qj[0]), np.zeros(3))
    if joint.joint_type == PRISMATIC:
        return Transform(np.eye(3), joint.axis * qj[0])
    if joint.joint_type == PLANAR_BASE:
        x, z, pitch = qj
        return Transform(rotvec_to_matrix(np.array([0.0, pitch, 0.0])), np.array([x, 0.0, z]))
    if joint.joint_type == FREE_BASE:
        return Transform(rotvec_to_matrix(qj[3:6]), qj[0:3].copy())
    raise ModelError(f"unknown joint type {joint.joint_type!r}")


@dataclass(eq=False)
class KinSnapshot:
    """Forward-kinematics pass shared by the Jacobian and centroidal routines."""

    body_pose: dict[str, Transform]
    joint_origin: dict[str, np.ndarray]
    joint_rot_pre: dict[str, np.ndarray]


def _fk(model: RobotModel, q: np.ndarray) -> KinSnapshot:
    body_pose: dict[str, Transform] = {}
    joint_origin: dict[str, np.ndarray] = {}
    joint_rot_pre: dict[str, np.ndarray] = {}
    for name in model._topo_order:
        body = model.body(name)
        joint = model._parent_joint.get(name)
        if joint is None:
            body_pose[name] = body.origin
            continue
        parent_pose = Transform.identity() if joint.parent == WORLD else body_pose[joint.parent]
        frame = parent_pose.compose(body.origin)
        joint_origin[joint.name] = frame.translation
        joint_rot_pre[joint.name] = frame.rotation
        qj = q[model.q_slice(joint.name)]
        body_pose[name] = frame.compose(_joint_motion(joint, qj))
    return KinSnapshot(body_pose, joint_origin, joint_rot_pre)


def forward_kinematics(model: RobotModel, q) -> dict[str, Transform]:
    """World pose of every body at configuration q."""
    q = model.check_config(q)
    return _fk(model, q).body_pose


def _jacobian_at_point(
    model: RobotModel, snap: KinSnapshot, body: str, point_world: np.ndarray
) -> np.ndarray:
    """6 x n world Jacobian (angular rows then linear rows) of a point on a body."""
    J = np.zeros((6, model.n))
    for ji in model._chain[body]:
        joint = model.joints[ji]
        off = model._q_offset[joint.name]
        R_pre = snap.joint_rot_pre[joint.name]
        p_j = snap.joint_origin[joint.name]
        if joint.joint_type == REVOLUTE:
            axis_w = R_pre @ joint.axis
            J[0:3, off] = axis_w
            J[3:6, off] = np.cross(axis_w, point_world - p_j)
        elif joint.joint_type == PRISMATIC:
            J[3:6, off] = R_pre @ joint.axis
        elif joint.joint_type == PLANAR_BASE:
            ex = R_pre @ np.array([1.0, 0.0, 0.0])
            ez = R_pre @ np.array([0.0, 0.0, 1.0])
            ey = R_pre @ np.array([0.0, 1.0, 0.0])
            # Pitch rotates about the post-translation body origin.
            body_origin = snap.body_pose[joint.child].translation
            J[3:6, off] = ex
            J[3:6, off + 1] = ez
            J[0:3, off + 2] = ey
            J[3:6, off + 2] = np.cross(ey, point_world - body_origin)
        elif joint.joint_type == FREE_BASE:
            qj_origin = snap.body_pose[joint.child].translation
            for k in range(3):
                e = R_pre[:, k]
                J[3:6, off + k] = e
                J[0:3, off + 3 + k] = e
                J[3:6, off + 3 + k] = np.cross(e, point_world - qj_origin)
    return J


def spatial_jacobian(model: RobotModel, q, body: str, control_frame: Transform | None = None):
    """6 x n Jacobian of a control frame attached to a body.

    Maps joint velocities to the world-frame spatial velocity
    ``(angular; linear)`` of the control frame origin.
    """
    q = model.check_config(q)
    model._require_body(body)
    snap = _fk(model, q)
    pose = snap.body_pose[body]
    if control_frame is not None:
        if not control_frame.is_rigid():
            raise ModelError("control frame offset must be a rigid transform")
        pose = pose.compose(control_frame)
    return _jacobian_at_point(model, snap, body, pose.translation)


def com_and_momentum_matrix(model: RobotModel, q) -> tuple[np.ndarray, np.ndarray]:
    """Center of mass and the linear centroidal momentum matrix A.

    ``A @ v`` is the robot's linear momentum, so ``A / total_mass`` is the
    CoM Jacobian.
    """
    q = model.check_config(q)
    snap = _fk(model, q)
    com = np.zeros(3)
    A = np.zeros((3, model.n))
    for body in model.bodies:
        if body.mass == 0.0:
            continue
        pose = snap.body_pose[body.name]
        c_world = pose.apply(body.com)
        com += body.mass * c_world
        A += body.mass * _jacobian_at_point(model, snap, body.name, c_world)[3:6]
    com /= model.total_mass
    return com, A


def gravity_torques(model: RobotModel, q) -> np.ndarray:
    """Generalized torques holding the robot static under gravity, no contacts.

    Equals the configuration gradient of the total potential energy; the
    z-row of the momentum matrix gives exactly the mass-weighted height
    sensitivities.
    """
    _, A = com_and_momentum_matrix(model, q)
    return GRAVITY * A[2]


def potential_energy(model: RobotModel, q) -> float:
    q = model.check_config(q)
    snap = _fk(model, q)
    energy = 0.0
    for body in model.bodies:
        if body.mass == 0.0:
            continue
        c_world = snap.body_pose[body.name].apply(body.com)
        energy += body.mass * GRAVITY * float(c_world[2])
    return energy


def integrate(model: RobotModel, q, v, dt: float) -> np.ndarray:
    """One Euler step ``q + v * dt``; free-base orientation steps on SO(3)."""
    q = model.check_config(q)
    v = np.asarray(v, dtype=float)
    if v.shape != (model.n,):
        raise ConfigurationError(f"velocity has shape {v.shape}, expected ({model.n},)")
    if not np.all(np.isfinite(v)) or not np.isfinite(dt):
        raise ConfigurationError("non-finite integration inputs")
    out = q + v * dt
    for joint in model.joints:
        if joint.joint_type == FREE_BASE:
            sl = model.q_slice(joint.name)
            w = v[sl.start + 3 : sl.start + 6]
            R = rotvec_to_matrix(q[sl.start + 3 : sl.start + 6])
            R_new = rotvec_to_matrix(w * dt) @ R
            out[sl.start + 3 : sl.start + 6] = matrix_to_rotvec(R_new)
    return out


def config_difference(model: RobotModel, q_to, q_from) -> np.ndarray:
    """Velocity-space difference d with integrate(q_from, d, 1) ~ q_to."""
    q_to = model.check_config(q_to)
    q_from = model.check_config(q_from)
    d = q_to - q_from
    for joint in model.joints:
        if joint.joint_type == FREE_BASE:
            sl = model.q_slice(joint.name)
            R_to = rotvec_to_matrix(q_to[sl.start + 3 : sl.start + 6])
            R_from = rotvec_to_matrix(q_from[sl.start + 3 : sl.start + 6])
            d[sl.start + 3 : sl.start + 6] = matrix_to_rotvec(R_to @ R_from.T)
    return d


def clip_to_limits(model: RobotModel, q) -> np.ndarray:
    lo, hi = model.position_limits()
    return np.clip(q, lo, hi)


# ---------------------------------------------------------------------------
# model JSON serialization
#
# Field names below are the normative fixture format:
#   {"bodies": [...], "joints": [...], "nominal_q": [...]}
# with each joint {"name","type","axis","parent","child",
#                  "limits":{"pos":[lo,hi],"vel":v,"torque":[lo,hi]},"mirror":...}


def _origin_from_dict(d) -> Transform:
    if d is None:
        return Transform.identity()
    xyz = np.asarray(d.get("xyz", [0.0, 0.0, 0.0]), dtype=float)
    rpy = d.get("rpy")
    R = rpy_to_matrix(rpy) if rpy is not None else np.eye(3)
    return Transform(R, xyz)


def robot_model_from_dict(data: dict) -> RobotModel:
    try:
        bodies = []
        for b in data["bodies"]:
            bodies.append(
                RigidBody(
                    name=b["name"],
                    mass=float(b.get("mass", 0.0)),
                    com=np.asarray(b.get("com", [0.0, 0.0, 0.0]), dtype=float),
                    origin=_origin_from_dict(b.get("origin")),
                    polytope_ids=tuple(b.get("polytopes", [])),
                )
            )
        joints = []
        for j in data["joints"]:
            limits = j.get("limits", {})
            pos = limits.get("pos")
            joints.append(
                make_joint(
                    name=j["name"],
                    joint_type=j["type"],
                    parent=j["parent"],
                    child=j["child"],
                    axis=j.get("axis", [0.0, 0.0, 1.0]),
                    pos_limits=None if pos is None else (pos[0], pos[1]),
                    vel_limit=float(limits.get("vel", 10.0)),
                    torque_limits=(
                        None
                        if limits.get("torque") is None
                        else (limits["torque"][0], limits["torque"][1])
                    ),
                    mirror=j.get("mirror"),
                )
            )
        polytopes = [
            {
                "id": p["id"],
                "body": p["body"],
                "vertices": np.asarray(p["vertices"], dtype=float),
            }
            for p in data.get("polytopes", [])
        ]
        return RobotModel(
            name=data.get("name", "robot"),
            bodies=bodies,
            joints=joints,
            nominal_q=data["nominal_q"],
            polytopes=polytopes,
        )
    except KeyError as exc:
        raise ModelError(f"model document missing field {exc}") from exc


def load_robot_model(path) -> RobotModel:
    with open(path, "r", encoding="utf-8") as fh:
        return robot_model_from_dict(json.load(fh))


def robot_model_to_dict(model: RobotModel) -> dict:
    def origin_dict(t: Transform):
        if np.allclose(t.rotation, np.eye(3)) and np.allclose(t.translation, 0.0):
            return None
        rpy = matrix_to_rpy(t.rotation)
        return {"xyz": [float(x) for x in t.translation], "rpy": [float(x) for x in rpy]}

    doc: dict = {"name": model.name, "bodies": [], "joints": [], "nominal_q": []}
    for b in model.bodies:
        entry: dict = {"name": b.name, "mass": float(b.mass), "com": [float(x) for x in b.com]}
        o = origin_dict(b.origin)
        if o is not None:
            entry["origin"] = o
        if b.polytope_ids:
            entry["polytopes"] = list(b.polytope_ids)
        doc["bodies"].append(entry)
    for j in model.joints:
        pos = None
        if np.all(np.isfinite(j.pos_lower)) and np.all(np.isfinite(j.pos_upper)):
            # Multi-dof joints broadcast a scalar pair on load, so exporting
            # the first entry round-trips.
            pos = [float(j.pos_lower[0]), float(j.pos_upper[0])]
        entry = {
            "name": j.name,
            "type": j.joint_type,
            "axis": [float(x) for x in j.axis],
            "parent": j.parent,
            "child": j.child,
            "limits": {
                "pos": pos,
                "vel": float(j.vel_limit),
                "torque": [float(j.tau_lower[0]), float(j.tau_upper[0])],
            },
        }
        if j.mirror is not None:
            entry["mirror"] = j.mirror
        doc["joints"].append(entry)
    doc["nominal_q"] = [float(x) for x in model.nominal_q]
    if model.polytopes:
        doc["polytopes"] = [
            {
                "id": p["id"],
                "body": p["body"],
                "vertices": [[float(x) for x in row] for row in np.asarray(p["vertices"])],
            }
            for p in model.polytopes
        ]
    return doc


def save_robot_model(model: RobotModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(robot_model_to_dict(model), fh, indent=2, sort_keys=True)
        fh.write("\n")
