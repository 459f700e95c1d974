"""Authoring data model: anchors, keyframes, undo, session state, persistence.

A session owns the puppet configuration the solver updates, the controller
reference configuration standing in for the executing robot, the live anchor
set, and the recorded keyframe script. Scripts persist as canonical JSON
(sorted keys, shortest round-trip floats) so identical states produce
byte-identical files.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field

import numpy as np

from . import feasibility, ik
from .kinematics import RobotModel, com_and_momentum_matrix, forward_kinematics
from .transforms import Transform

SCRIPT_VERSION = 1

TIERS = ("low", "medium", "high")
FOLLOW_MODES = ("none", "track-controller", "snap-once")
KINDS = ("spatial", "com", "joint")


class ScriptError(ValueError):
    pass


class MigrationError(ScriptError):
    pass


class AnchorEditError(ValueError):
    pass


@dataclass(eq=False)
class Anchor:
    """Operator-facing kinematic objective with weight tier and flags."""

    id: str
    kind: str  # spatial | com | joint
    body: str | None = None
    joint: str | None = None
    offset: Transform = field(default_factory=Transform.identity)  # spatial control frame
    target_pose: Transform | None = None  # spatial
    target_point: np.ndarray | None = None  # com
    target_value: float | None = None  # joint
    axes: tuple[bool, ...] = ()
    tier: str = "medium"
    contact: bool = False
    persistent: bool = False
    follow: str = "none"
    mirroring: bool = False
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ScriptError(f"unknown anchor kind {self.kind!r}")
        if self.tier not in TIERS:
            raise ScriptError(f"unknown weight tier {self.tier!r}")
        if self.follow not in FOLLOW_MODES:
            raise ScriptError(f"unknown follow mode {self.follow!r}")
        if not self.axes:
            defaults = {"spatial": (True,) * 6, "com": (True,) * 3, "joint": (True,)}
            self.axes = defaults[self.kind]
        if not any(self.axes):
            raise ScriptError(f"anchor {self.id!r}: empty axis mask")
        if self.contact and self.kind != "spatial":
            raise ScriptError("contact flag applies only to spatial anchors")
        if self.mirroring and self.kind != "joint":
            raise ScriptError("mirroring applies only to joint anchors")

    def clone(self) -> "Anchor":
        a = copy.copy(self)
        a.offset = Transform(self.offset.rotation.copy(), self.offset.translation.copy())
        if self.target_pose is not None:
            a.target_pose = Transform(
                self.target_pose.rotation.copy(), self.target_pose.translation.copy()
            )
        if self.target_point is not None:
            a.target_point = self.target_point.copy()
        a.extra = copy.deepcopy(self.extra)
        a.axes = tuple(self.axes)
        return a


@dataclass(eq=False)
class KeyFrame:
    index: int
    # None defers to the run profile's default transition at compile time.
    duration_s: float | None
    controller_q: np.ndarray
    puppet_q: np.ndarray
    anchors: list[Anchor]
    region_mode: str = "flat"
    notes: str = ""
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.duration_s is not None and self.duration_s <= 0:
            raise ScriptError("transition duration must be positive")


@dataclass(eq=False)
class Script:
    model_name: str
    environment_name: str = ""
    keyframes: list[KeyFrame] = field(default_factory=list)
    version: int = SCRIPT_VERSION
    extra: dict = field(default_factory=dict)


@dataclass(eq=False)
class UndoEntry:
    keyframe_index: int
    controller_q: np.ndarray
    puppet_q: np.ndarray


class UndoStack:
    """Bounded LIFO of pre-dispatch snapshots; pop restores exactly."""

    def __init__(self, depth: int = 64):
        self.depth = depth
        self._entries: list[UndoEntry] = []

    def push(self, entry: UndoEntry) -> None:
        self._entries.append(entry)
        if len(self._entries) > self.depth:
            self._entries.pop(0)

    def pop(self) -> UndoEntry | None:
        return self._entries.pop() if self._entries else None

    def __len__(self) -> int:
        return len(self._entries)


# ---------------------------------------------------------------------------
# session


class AuthoringSession:
    """Mutable workbench state for one operator; single logical writer."""

    def __init__(
        self,
        model: RobotModel,
        environment=None,
        settings: ik.SolverSettings | None = None,
        mode: str = "simulation",
        default_mu: float = 0.7,
    ):
        if mode not in ("simulation", "hardware"):
            raise ScriptError(f"unknown session mode {mode!r}")
        self.model = model
        self.environment = environment
        self.settings = settings or ik.SolverSettings()
        self.mode = mode
        self.default_mu = default_mu
        self.anchors: dict[str, Anchor] = {}
        self.puppet_q = model.nominal_q.copy()
        self.controller_q = model.nominal_q.copy()
        self.nominal_q = model.nominal_q.copy()
        self.script = Script(model_name=model.name, environment_name=getattr(environment, "name", ""))
        self.undo_stack = UndoStack()
        self.region_mode = "flat"  # flat | multi-contact | off
        self._id_counter = 0

    def default_duration(self) -> float:
        return 2.0 if self.mode == "simulation" else 4.0

    def next_anchor_id(self) -> str:
        self._id_counter += 1
        return f"a{self._id_counter}"


# ---------------------------------------------------------------------------
# anchor edits


@dataclass(eq=False)
class AnchorEdit:
    op: str  # create | move | retier | flag | remove
    anchor: Anchor | None = None  # create
    anchor_id: str | None = None
    target: object = None  # move: Transform | 3-vector | float
    tier: str | None = None
    flag: str | None = None  # contact | persistent | mirroring | follow
    value: object = None


def _mirror_partner_anchor(session: AuthoringSession, anchor: Anchor) -> Anchor | None:
    partner_joint = session.model.mirror_partner(anchor.joint)
    if partner_joint is None:
        return None
    for other in session.anchors.values():
        if other.kind == "joint" and other.joint == partner_joint:
            return other
    return None


def _set_target(anchor: Anchor, target) -> None:
    if anchor.kind == "joint":
        anchor.target_value = float(target)
    elif anchor.kind == "com":
        anchor.target_point = np.asarray(target, dtype=float).reshape(3).copy()
    else:
        if not isinstance(target, Transform):
            raise AnchorEditError("spatial anchors move to a Transform target")
        anchor.target_pose = Transform(target.rotation.copy(), target.translation.copy())


def apply_anchor_edit(session: AuthoringSession, edit: AnchorEdit) -> dict[str, Anchor]:
    """Apply one edit; joint-anchor edits with mirroring duplicate onto the
    opposite-side joint. Returns the updated anchor mapping."""
    model = session.model
    op = edit.op
    if op == "create":
        anchor = edit.anchor
        if anchor is None:
            raise AnchorEditError("create needs an anchor")
        if anchor.kind == "spatial" and not model.has_body(anchor.body):
            raise AnchorEditError(f"unknown body {anchor.body!r}")
        if anchor.kind == "joint":
            model.joint(anchor.joint)  # raises for unknown joints
            if anchor.mirroring and model.mirror_partner(anchor.joint) is None:
                raise AnchorEditError(
                    f"joint {anchor.joint!r} has no mirror partner; cannot mirror"
                )
        if anchor.id in session.anchors:
            raise AnchorEditError(f"anchor id {anchor.id!r} already exists")
        session.anchors[anchor.id] = anchor
        if anchor.kind == "joint" and anchor.mirroring:
            partner_joint = model.mirror_partner(anchor.joint)
            twin = anchor.clone()
            twin.id = f"{anchor.id}.m"
            twin.joint = partner_joint
            session.anchors[twin.id] = twin
        return session.anchors

    anchor = session.anchors.get(edit.anchor_id)
    if anchor is None:
        raise AnchorEditError(f"unknown anchor id {edit.anchor_id!r}")
    twins = [anchor]
    if anchor.kind == "joint" and anchor.mirroring:
        partner = _mirror_partner_anchor(session, anchor)
        if partner is not None and partner is not anchor:
            twins.append(partner)

    if op == "move":
        for a in twins:
            _set_target(a, edit.target)
    elif op == "retier":
        if edit.tier not in TIERS:
            raise AnchorEditError(f"unknown tier {edit.tier!r}")
        for a in twins:
            a.tier = edit.tier
    elif op == "flag":
        if edit.flag not in ("contact", "persistent", "mirroring", "follow"):
            raise AnchorEditError(f"unknown flag {edit.flag!r}")
        for a in twins:
            if edit.flag == "follow":
                if edit.value not in FOLLOW_MODES:
                    raise AnchorEditError(f"unknown follow mode {edit.value!r}")
                a.follow = edit.value
            elif edit.flag == "contact":
                if a.kind != "spatial":
                    raise AnchorEditError("contact flag applies only to spatial anchors")
                a.contact = bool(edit.value)
            elif edit.flag == "mirroring":
                if a.kind != "joint":
                    raise AnchorEditError("mirroring applies only to joint anchors")
                if edit.value and session.model.mirror_partner(a.joint) is None:
                    raise AnchorEditError(f"joint {a.joint!r} has no mirror partner")
                a.mirroring = bool(edit.value)
            else:
                a.persistent = bool(edit.value)
    elif op == "remove":
        for a in twins:
            session.anchors.pop(a.id, None)
    else:
        raise AnchorEditError(f"unknown edit op {op!r}")
    return session.anchors


def clear_non_persistent(anchors: dict[str, Anchor]) -> dict[str, Anchor]:
    """Keep exactly the persistent anchors, order preserved."""
    return {k: a for k, a in anchors.items() if a.persistent}


# ---------------------------------------------------------------------------
# snapping


def achieved_value(model: RobotModel, q, anchor: Anchor):
    """The puppet's achieved value for an anchor's objective."""
    if anchor.kind == "joint":
        return float(q[model.q_slice(anchor.joint).start])
    if anchor.kind == "com":
        com, _ = com_and_momentum_matrix(model, q)
        return com
    pose = forward_kinematics(model, q)[anchor.body].compose(anchor.offset)
    return pose


def snap_anchors_to_puppet(anchors: dict[str, Anchor], model: RobotModel, puppet_q) -> dict[str, Anchor]:
    """Replace each anchor's setpoint with the puppet's achieved value.

    Masked-out (inactive) target components are left untouched; flags and
    masks themselves never change.
    """
    for anchor in anchors.values():
        achieved = achieved_value(model, puppet_q, anchor)
        if anchor.kind == "joint":
            anchor.target_value = achieved
        elif anchor.kind == "com":
            if anchor.target_point is None:
                anchor.target_point = np.asarray(achieved, dtype=float).copy()
            else:
                mask = np.asarray(anchor.axes, dtype=bool)
                merged = anchor.target_point.copy()
                merged[mask] = achieved[mask]
                anchor.target_point = merged
        else:
            if anchor.target_pose is None:
                anchor.target_pose = achieved
            else:
                lin_mask = np.asarray(anchor.axes[3:6], dtype=bool)
                pos = anchor.target_pose.translation.copy()
                pos[lin_mask] = achieved.translation[lin_mask]
                rot = achieved.rotation if any(anchor.axes[0:3]) else anchor.target_pose.rotation
                anchor.target_pose = Transform(rot.copy(), pos)
    return anchors


def snap_puppet_nominal(session: AuthoringSession) -> AuthoringSession:
    """Set the solver's nominal configuration to the current puppet solution."""
    session.nominal_q = session.puppet_q.copy()
    return session


# ---------------------------------------------------------------------------
# anchors -> solver inputs


def tasks_from_anchors(session: AuthoringSession) -> list[ik.KinematicTask]:
    tasks: list[ik.KinematicTask] = []
    settings = session.settings
    for anchor in list(session.anchors.values()):
        weight = settings.contact_weight if anchor.contact else settings.tier_weight(anchor.tier)
        if anchor.follow in ("track-controller", "snap-once"):
            achieved = achieved_value(session.model, session.controller_q, anchor)
            if anchor.kind == "joint":
                anchor.target_value = achieved
            elif anchor.kind == "com":
                anchor.target_point = np.asarray(achieved, dtype=float).copy()
            else:
                anchor.target_pose = achieved
            if anchor.follow == "snap-once":
                anchor.follow = "none"
        if anchor.kind == "joint":
            if anchor.target_value is None:
                continue
            tasks.append(
                ik.JointPositionTask(
                    joint=anchor.joint, target=anchor.target_value, weight=weight, name=anchor.id
                )
            )
        elif anchor.kind == "com":
            if anchor.target_point is None:
                continue
            tasks.append(
                ik.CoMTask(
                    target=anchor.target_point,
                    axes=tuple(anchor.axes),
                    weight=weight,
                    name=anchor.id,
                )
            )
        else:
            if anchor.target_pose is None:
                continue
            tasks.append(
                ik.SpatialPoseTask(
                    body=anchor.body,
                    target=anchor.target_pose,
                    control_frame=anchor.offset,
                    axes=tuple(anchor.axes),
                    weight=weight,
                    name=anchor.id,
                )
            )
    return tasks


def contacts_from_anchors(session: AuthoringSession) -> list[feasibility.ContactPoint]:
    """Contact-flagged anchors registered as point contacts for feasibility.

    The contact frame's z axis tracks the robot surface normal, so the
    environment-into-robot normal is its negation at the current puppet pose.
    """
    contacts = []
    poses = forward_kinematics(session.model, session.puppet_q)
    for anchor in session.anchors.values():
        if not (anchor.kind == "spatial" and anchor.contact):
            continue
        frame = poses[anchor.body].compose(anchor.offset)
        normal = -frame.rotation[:, 2]
        contacts.append(
            feasibility.ContactPoint(
                body=anchor.body,
                point=anchor.offset.translation,
                normal=normal,
                mu=session.default_mu,
                name=anchor.id,
            )
        )
    return contacts


def session_region(session: AuthoringSession):
    if session.region_mode == "off":
        return None
    contacts = contacts_from_anchors(session)
    if session.region_mode == "multi-contact":
        if len(contacts) >= 2:
            return feasibility.support_region_multicontact(
                session.model, session.puppet_q, contacts
            )
        return None
    if contacts:
        return feasibility.support_region_flat(session.model, session.puppet_q, contacts)
    return None


def solve_session(session: AuthoringSession, max_iterations: int | None = None) -> ik.SolveDiagnostics:
    """Assemble tasks/region from the anchor set and advance the puppet."""
    tasks = tasks_from_anchors(session)
    region = session_region(session)
    q, diag = ik.solve(
        session.model,
        session.puppet_q,
        tasks,
        environment=session.environment,
        region=region.vertices if region is not None and not region.empty else None,
        settings=session.settings,
        nominal_q=session.nominal_q,
        max_iterations=max_iterations,
    )
    session.puppet_q = q
    return diag


# ---------------------------------------------------------------------------
# keyframes


def record_keyframe(session: AuthoringSession, duration_s: float | None = None) -> KeyFrame:
    """Store the current pose pair + anchors; dispatch puppet to controller."""
    duration = session.default_duration() if duration_s is None else float(duration_s)
    if duration <= 0:
        raise ScriptError("transition duration must be positive")
    frame = KeyFrame(
        index=len(session.script.keyframes),
        duration_s=duration,
        controller_q=session.controller_q.copy(),
        puppet_q=session.puppet_q.copy(),
        anchors=[a.clone() for a in session.anchors.values()],
        region_mode=session.region_mode,
    )
    session.undo_stack.push(
        UndoEntry(
            keyframe_index=frame.index,
            controller_q=session.controller_q.copy(),
            puppet_q=session.puppet_q.copy(),
        )
    )
    session.script.keyframes.append(frame)
    session.controller_q = session.puppet_q.copy()
    return frame


def undo(session: AuthoringSession) -> bool:
    """Rewind to the pre-dispatch state and drop the stored keyframe."""
    entry = session.undo_stack.pop()
    if entry is None:
        return False
    session.controller_q = entry.controller_q.copy()
    session.puppet_q = entry.puppet_q.copy()
    if session.script.keyframes and session.script.keyframes[-1].index == entry.keyframe_index:
        session.script.keyframes.pop()
    return True


# ---------------------------------------------------------------------------
# persistence

_KNOWN_ANCHOR_FIELDS = {
    "id", "kind", "body", "joint", "target", "axes", "tier",
    "contact", "persistent", "follow", "mirroring", "offset",
}
_KNOWN_KEYFRAME_FIELDS = {
    "index", "duration_s", "controller_q", "puppet_q", "anchors", "region_mode", "notes",
}
_KNOWN_SCRIPT_FIELDS = {"version", "model", "environment", "keyframes"}


def _pose_to_json(t: Transform) -> dict:
    # The raw rotation matrix round-trips float-exactly; a quaternion would
    # drift by an ulp per save/load cycle.
    return {
        "position": [float(x) for x in t.translation],
        "rotation": [[float(x) for x in row] for row in t.rotation],
    }


def _pose_from_json(d) -> Transform:
    t = Transform(
        np.asarray(d["rotation"], dtype=float), np.asarray(d["position"], dtype=float)
    )
    if not t.is_rigid(tol=1e-6):
        raise ScriptError("pose rotation block is not a rigid rotation")
    return t


def anchor_to_dict(anchor: Anchor) -> dict:
    doc: dict = {
        "id": anchor.id,
        "kind": anchor.kind,
        "axes": [bool(b) for b in anchor.axes],
        "tier": anchor.tier,
        "contact": anchor.contact,
        "persistent": anchor.persistent,
        "follow": anchor.follow,
        "mirroring": anchor.mirroring,
    }
    if anchor.kind == "spatial":
        doc["body"] = anchor.body
        doc["target"] = None if anchor.target_pose is None else _pose_to_json(anchor.target_pose)
        doc["offset"] = _pose_to_json(anchor.offset)
    elif anchor.kind == "com":
        doc["target"] = (
            None if anchor.target_point is None else [float(x) for x in anchor.target_point]
        )
    else:
        doc["joint"] = anchor.joint
        doc["target"] = None if anchor.target_value is None else float(anchor.target_value)
    doc.update(anchor.extra)
    return doc


def anchor_from_dict(doc: dict) -> Anchor:
    kind = doc["kind"]
    extra = {k: v for k, v in doc.items() if k not in _KNOWN_ANCHOR_FIELDS}
    anchor = Anchor(
        id=doc["id"],
        kind=kind,
        body=doc.get("body"),
        joint=doc.get("joint"),
        axes=tuple(bool(b) for b in doc["axes"]),
        tier=doc.get("tier", "medium"),
        contact=doc.get("contact", False),
        persistent=doc.get("persistent", False),
        follow=doc.get("follow", "none"),
        mirroring=doc.get("mirroring", False),
        extra=extra,
    )
    target = doc.get("target")
    if kind == "spatial":
        if "offset" in doc:
            anchor.offset = _pose_from_json(doc["offset"])
        if target is not None:
            anchor.target_pose = _pose_from_json(target)
    elif kind == "com":
        if target is not None:
            anchor.target_point = np.asarray(target, dtype=float)
    else:
        if target is not None:
            anchor.target_value = float(target)
    return anchor


def script_to_dict(script: Script) -> dict:
    doc = {
        "version": script.version,
        "model": script.model_name,
        "environment": script.environment_name,
        "keyframes": [],
    }
    for kf in script.keyframes:
        entry = {
            "index": kf.index,
            "duration_s": None if kf.duration_s is None else float(kf.duration_s),
            "controller_q": [float(x) for x in kf.controller_q],
            "puppet_q": [float(x) for x in kf.puppet_q],
            "anchors": [anchor_to_dict(a) for a in kf.anchors],
            "region_mode": kf.region_mode,
            "notes": kf.notes,
        }
        entry.update(kf.extra)
        doc["keyframes"].append(entry)
    doc.update(script.extra)
    return doc


def script_from_dict(doc: dict) -> Script:
    version = doc.get("version")
    if version != SCRIPT_VERSION:
        raise MigrationError(
            f"script version {version!r} not supported (expected {SCRIPT_VERSION}); migrate first"
        )
    script = Script(
        model_name=doc.get("model", ""),
        environment_name=doc.get("environment", ""),
        version=version,
        extra={k: v for k, v in doc.items() if k not in _KNOWN_SCRIPT_FIELDS},
    )
    for i, entry in enumerate(doc.get("keyframes", [])):
        raw_duration = entry.get("duration_s")
        kf = KeyFrame(
            index=int(entry["index"]),
            duration_s=None if raw_duration is None else float(raw_duration),
            controller_q=np.asarray(entry["controller_q"], dtype=float),
            puppet_q=np.asarray(entry["puppet_q"], dtype=float),
            anchors=[anchor_from_dict(a) for a in entry.get("anchors", [])],
            region_mode=entry.get("region_mode", "flat"),
            notes=entry.get("notes", ""),
            extra={k: v for k, v in entry.items() if k not in _KNOWN_KEYFRAME_FIELDS},
        )
        if kf.index != i:
            raise ScriptError(f"keyframe indices must be contiguous from 0 (got {kf.index} at {i})")
        script.keyframes.append(kf)
    return script


def canonical_json(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, indent=2, allow_nan=False) + "\n"


def save_script(script: Script, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(canonical_json(script_to_dict(script)))


def load_script(path) -> Script:
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScriptError(f"malformed script JSON at byte offset {exc.pos}: {exc.msg}") from exc
    return script_from_dict(doc)
