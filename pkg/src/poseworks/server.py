"""Live authoring service: per-session solver state behind a JSON protocol.

Transport is a persistent bidirectional connection carrying one JSON message
per line. Each client message carries a sequence number one above the last
accepted one and is acknowledged in order; every state broadcast carries a
monotonically increasing revision. The server owns all solver math: clients
render only what state updates deliver.

Drag streams are coalesced: pose samples are acknowledged immediately, but
the solver runs at most once per tick (default 30 Hz) using the latest
sample, so a fast operator cannot outrun the solve loop.
"""

from __future__ import annotations

import asyncio
import json
from dataclasses import dataclass, field

import numpy as np

from . import feasibility, ik
from .geometry import Environment, project_to_surface, robot_placed_polytopes, tangent_contact_target
from .kinematics import RobotModel, forward_kinematics
from .script import (
    Anchor,
    AnchorEdit,
    AnchorEditError,
    AuthoringSession,
    ScriptError,
    anchor_from_dict,
    anchor_to_dict,
    apply_anchor_edit,
    clear_non_persistent,
    contacts_from_anchors,
    record_keyframe,
    script_from_dict,
    script_to_dict,
    session_region,
    snap_anchors_to_puppet,
    snap_puppet_nominal,
    solve_session,
    undo,
)
from .transforms import Transform

PROTOCOL_VERSION = 1
HEARTBEAT_INTERVAL_S = 5.0
DEFAULT_TICK_HZ = 30.0

CLIENT_TYPES = (
    "hello",
    "anchor_edit",
    "drag_pose",
    "drag_end",
    "solve_tick",
    "record_keyframe",
    "undo",
    "snap_anchors",
    "snap_nominal",
    "clear_non_persistent",
    "set_region_mode",
    "configure_solver",
    "query_feasibility",
    "project_point",
    "export_script",
    "import_script",
    "heartbeat",
)

# Solver settings an operator may adjust live (the UI's solver menu).
CONFIGURABLE_SETTINGS = {
    "enable_com_constraint": bool,
    "enable_collision_constraints": bool,
    "max_iterations": int,
    "dt": float,
    "collision_margin": float,
    "residual_tolerance": float,
}
SERVER_TYPES = ("welcome", "state_update", "error", "projection", "script_data", "ack", "heartbeat")

# Message types that mutate or read session state and therefore take part in
# the sequence-number contract.
SEQUENCED_TYPES = tuple(t for t in CLIENT_TYPES if t not in ("hello", "heartbeat"))


class ProtocolError(ValueError):
    pass


@dataclass(eq=False)
class DragState:
    anchor_id: str | None = None
    pose: Transform | None = None
    dirty: bool = False
    last_solve_time: float = -1e18


@dataclass(eq=False)
class SessionState:
    id: str
    session: AuthoringSession
    revision: int = 0
    last_seq: int = 0
    tick_hz: float = DEFAULT_TICK_HZ
    drag: DragState = field(default_factory=DragState)
    solve_count: int = 0
    last_diag: ik.SolveDiagnostics | None = None


class SessionHub:
    """Owns sessions; one logical writer per session, no shared state."""

    def __init__(self, model: RobotModel, environment: Environment | None = None, settings=None):
        self.model = model
        self.environment = environment
        self.settings = settings
        self._sessions: dict[str, SessionState] = {}
        self._counter = 0

    def create(self) -> SessionState:
        self._counter += 1
        sid = f"s{self._counter}"
        state = SessionState(
            id=sid,
            session=AuthoringSession(self.model, environment=self.environment, settings=self.settings),
        )
        self._sessions[sid] = state
        return state

    def resume(self, session_id: str) -> SessionState | None:
        return self._sessions.get(session_id)


# ---------------------------------------------------------------------------
# pose (de)serialization shared with script files


def _pose_to_wire(t: Transform) -> dict:
    return {
        "position": [float(x) for x in t.translation],
        "rotation": [[float(x) for x in row] for row in t.rotation],
    }


def _pose_from_wire(doc) -> Transform:
    t = Transform(np.asarray(doc["rotation"], dtype=float), np.asarray(doc["position"], dtype=float))
    if not t.is_rigid(tol=1e-6):
        raise ProtocolError("pose rotation is not a rigid rotation")
    return t


def _model_description(state: SessionState) -> dict:
    model = state.session.model
    env = state.session.environment
    return {
        "name": model.name,
        "dof": model.n,
        "joints": [j.name for j in model.joints],
        "bodies": [b.name for b in model.bodies],
        "polytopes": [
            {
                "id": p["id"],
                "body": p["body"],
                "vertices": [[float(x) for x in row] for row in np.asarray(p["vertices"])],
            }
            for p in model.polytopes
        ],
        "environment": [
            {"name": p.name, "vertices": [[float(x) for x in row] for row in p.vertices]}
            for p in (env.polytopes if env is not None else [])
        ],
    }


def _state_update(state: SessionState, extras: dict | None = None) -> dict:
    state.revision += 1
    session = state.session
    poses = forward_kinematics(session.model, session.puppet_q)
    payload = {
        "puppet_q": [float(x) for x in session.puppet_q],
        "controller_q": [float(x) for x in session.controller_q],
        "anchors": [anchor_to_dict(a) for a in session.anchors.values()],
        "body_poses": {name: _pose_to_wire(pose) for name, pose in poses.items()},
        "region_mode": session.region_mode,
        "undo_depth": len(session.undo_stack),
        "keyframes": len(session.script.keyframes),
    }
    if state.last_diag is not None:
        payload["solve"] = {
            "status": state.last_diag.status,
            "iterations": state.last_diag.iterations,
            "residuals": {k: float(v) for k, v in state.last_diag.task_residuals.items()},
        }
    if extras:
        payload.update(extras)
    return {"type": "state_update", "revision": state.revision, "payload": payload}


def _error(message: str, ack: int | None = None) -> dict:
    out = {"type": "error", "payload": {"message": message}}
    if ack is not None:
        out["ack"] = ack
    return out


def _region_payload(session: AuthoringSession):
    region = session_region(session)
    if region is None or region.empty:
        return None
    return {
        "mode": region.mode,
        "vertices": [[float(x) for x in v] for v in region.vertices],
    }


# ---------------------------------------------------------------------------
# message handling


def handle_message(hub: SessionHub, state: SessionState | None, raw) -> tuple[SessionState | None, list[dict]]:
    """Process one decoded message; returns (session state, outbound messages).

    Malformed input never mutates the session: every reply to an invalid
    message is an error with the state untouched.
    """
    if not isinstance(raw, dict):
        return state, [_error("message must be a JSON object")]
    mtype = raw.get("type")
    if mtype not in CLIENT_TYPES:
        return state, [_error(f"unknown message type {mtype!r}")]

    if mtype == "heartbeat":
        return state, []

    if mtype == "hello":
        proto = raw.get("proto")
        if proto != PROTOCOL_VERSION:
            return state, [_error(f"unsupported protocol version {proto!r}")]
        wanted = raw.get("payload", {}).get("session") if isinstance(raw.get("payload"), dict) else None
        resumed = hub.resume(wanted) if wanted else None
        state = resumed if resumed is not None else hub.create()
        welcome = {
            "type": "welcome",
            "payload": {
                "session": state.id,
                "proto": PROTOCOL_VERSION,
                "revision": state.revision,
                "last_seq": state.last_seq,
                "heartbeat_interval_s": HEARTBEAT_INTERVAL_S,
                "tick_hz": state.tick_hz,
                "model": _model_description(state),
            },
        }
        return state, [welcome, _state_update(state)]

    if state is None:
        return state, [_error("no session; send hello first")]

    seq = raw.get("seq")
    if not isinstance(seq, int) or seq != state.last_seq + 1:
        return state, [_error(f"bad sequence number {seq!r}, expected {state.last_seq + 1}")]
    payload = raw.get("payload")
    if payload is None:
        payload = {}
    if not isinstance(payload, dict):
        return state, [_error("payload must be an object", ack=seq)]

    try:
        replies = _dispatch(hub, state, mtype, payload, seq)
    except (AnchorEditError, ScriptError, ProtocolError, KeyError, TypeError, ValueError) as exc:
        # Schema-valid, in-sequence messages consume their sequence number
        # even when the operation itself is rejected.
        state.last_seq = seq
        return state, [_error(f"{type(exc).__name__}: {exc}", ack=seq)]
    state.last_seq = seq
    return state, replies


def _dispatch(hub, state: SessionState, mtype: str, payload: dict, seq: int) -> list[dict]:
    session = state.session
    if mtype == "anchor_edit":
        edit = _edit_from_payload(session, payload)
        apply_anchor_edit(session, edit)
        out = _state_update(state)
        out["ack"] = seq
        return [out]

    if mtype == "drag_pose":
        anchor_id = payload["anchor_id"]
        if anchor_id not in session.anchors:
            raise ProtocolError(f"unknown anchor id {anchor_id!r}")
        state.drag.anchor_id = anchor_id
        state.drag.pose = _drag_target(session, anchor_id, payload)
        state.drag.dirty = True
        # Samples are acknowledged cheaply; solves happen on the tick.
        return [{"type": "ack", "ack": seq}]

    if mtype == "drag_end":
        replies = drag_tick(state, now=float("inf"))
        for r in replies:
            r.setdefault("ack", seq)
        state.drag = DragState()
        if not replies:
            out = _state_update(state)
            out["ack"] = seq
            replies = [out]
        return replies

    if mtype == "solve_tick":
        return _run_solve(state, seq)

    if mtype == "record_keyframe":
        duration = payload.get("duration_s")
        record_keyframe(session, duration_s=duration)
        out = _state_update(state)
        out["ack"] = seq
        return [out]

    if mtype == "undo":
        if not undo(session):
            return [_error("undo stack is empty", ack=seq)]
        out = _state_update(state)
        out["ack"] = seq
        return [out]

    if mtype == "snap_anchors":
        snap_anchors_to_puppet(session.anchors, session.model, session.puppet_q)
        out = _state_update(state)
        out["ack"] = seq
        return [out]

    if mtype == "snap_nominal":
        snap_puppet_nominal(session)
        out = _state_update(state)
        out["ack"] = seq
        return [out]

    if mtype == "clear_non_persistent":
        session.anchors = clear_non_persistent(session.anchors)
        out = _state_update(state)
        out["ack"] = seq
        return [out]

    if mtype == "set_region_mode":
        mode = payload.get("mode")
        if mode not in ("flat", "multi-contact", "off"):
            raise ProtocolError(f"unknown region mode {mode!r}")
        session.region_mode = mode
        out = _state_update(state)
        out["ack"] = seq
        return [out]

    if mtype == "configure_solver":
        import dataclasses

        changes = {}
        for key, value in payload.items():
            expected = CONFIGURABLE_SETTINGS.get(key)
            if expected is None:
                raise ProtocolError(f"setting {key!r} is not operator-configurable")
            if expected is bool:
                if not isinstance(value, bool):
                    raise ProtocolError(f"setting {key!r} expects a boolean")
                changes[key] = value
            elif expected is int:
                if not isinstance(value, int) or isinstance(value, bool):
                    raise ProtocolError(f"setting {key!r} expects an integer")
                changes[key] = value
            else:
                if not isinstance(value, (int, float)) or isinstance(value, bool):
                    raise ProtocolError(f"setting {key!r} expects a number")
                changes[key] = float(value)
        # replace() re-runs the settings validation before anything mutates.
        session.settings = dataclasses.replace(session.settings, **changes)
        out = _state_update(state)
        out["ack"] = seq
        return [out]

    if mtype == "query_feasibility":
        extras: dict = {}
        if payload.get("region", True):
            extras["region"] = _region_payload(session)
        if payload.get("torques"):
            contacts = contacts_from_anchors(session)
            if contacts:
                report = feasibility.static_torques(session.model, session.puppet_q, contacts)
                extras["saturation"] = [float(x) for x in report.saturation]
                extras["balanced"] = report.balanced
        wanted = payload.get("force_polytopes") or []
        if wanted:
            contacts = {c.name: c for c in contacts_from_anchors(session)}
            polys = {}
            names = contacts.keys() if wanted == "all" else wanted
            for name in names:
                if name in contacts:
                    fp = feasibility.force_polytope(session.model, session.puppet_q, contacts[name])
                    polys[name] = [[float(x) for x in v] for v in fp.vertices]
            extras["force_polytopes"] = polys
        out = _state_update(state, extras)
        out["ack"] = seq
        return [out]

    if mtype == "project_point":
        point = np.asarray(payload["point"], dtype=float).reshape(3)
        target = payload.get("target", "robot")
        found = _project(session, point, target)
        if found is None:
            return [_error("no polytopes to project onto", ack=seq)]
        surface, normal, name = found
        return [
            {
                "type": "projection",
                "ack": seq,
                "payload": {
                    "target": target,
                    "name": name,
                    "point": [float(x) for x in surface],
                    "normal": [float(x) for x in normal],
                },
            }
        ]

    if mtype == "export_script":
        return [
            {
                "type": "script_data",
                "ack": seq,
                "payload": {"script": script_to_dict(session.script)},
            }
        ]

    if mtype == "import_script":
        script = script_from_dict(payload["script"])
        session.script = script
        if script.keyframes:
            last = script.keyframes[-1]
            session.puppet_q = np.asarray(last.puppet_q, dtype=float).copy()
            session.controller_q = np.asarray(last.puppet_q, dtype=float).copy()
            session.anchors = {a.id: a.clone() for a in last.anchors}
        out = _state_update(state)
        out["ack"] = seq
        return [out]

    raise ProtocolError(f"unhandled message type {mtype!r}")


def _edit_from_payload(session: AuthoringSession, payload: dict) -> AnchorEdit:
    op = payload.get("op")
    if op == "create":
        anchor = anchor_from_dict(payload["anchor"])
        return AnchorEdit("create", anchor=anchor)
    if op == "create_contact":
        # Two-phase contact creation: robot surface point/normal plus the
        # environment point/normal chosen by the operator.
        body = payload["body"]
        body_point = np.asarray(payload["body_point"], dtype=float)
        robot_normal = np.asarray(payload["robot_normal"], dtype=float)
        env_point = np.asarray(payload["env_point"], dtype=float)
        env_normal = np.asarray(payload["env_normal"], dtype=float)
        target = tangent_contact_target(robot_normal, env_point, env_normal)
        poses = forward_kinematics(session.model, session.puppet_q)
        body_pose = poses[body]
        from .transforms import frame_with_z

        offset = Transform(
            body_pose.rotation.T @ frame_with_z(robot_normal),
            body_pose.inverse().apply(body_point),
        )
        current = body_pose.compose(offset)
        target_pose = Transform(target.rotation @ current.rotation, target.position)
        anchor = Anchor(
            id=payload.get("id") or session.next_anchor_id(),
            kind="spatial",
            body=body,
            offset=offset,
            target_pose=target_pose,
            axes=tuple(payload.get("axes", target.axis_mask)),
            tier=payload.get("tier", "high"),
            contact=True,
        )
        return AnchorEdit("create", anchor=anchor)
    if op == "move":
        target = payload["target"]
        anchor = session.anchors.get(payload["id"])
        if anchor is not None and anchor.kind == "spatial" and isinstance(target, dict):
            target = _pose_from_wire(target)
        return AnchorEdit("move", anchor_id=payload["id"], target=target)
    if op == "retier":
        return AnchorEdit("retier", anchor_id=payload["id"], tier=payload.get("tier"))
    if op == "flag":
        return AnchorEdit(
            "flag", anchor_id=payload["id"], flag=payload.get("flag"), value=payload.get("value")
        )
    if op == "remove":
        return AnchorEdit("remove", anchor_id=payload["id"])
    raise ProtocolError(f"unknown anchor edit op {op!r}")


def _drag_target(session: AuthoringSession, anchor_id: str, payload: dict):
    anchor = session.anchors[anchor_id]
    if anchor.kind == "joint":
        return float(payload["target"])
    if anchor.kind == "com":
        return np.asarray(payload["target"], dtype=float).reshape(3)
    pose = _pose_from_wire(payload["target"])
    if payload.get("contact_mode") and session.environment is not None:
        # Contact-mode drags snap the requested position onto the nearest
        # environment surface before solving.
        best = None
        for placed in session.environment.placed():
            pt, _ = project_to_surface(placed, pose.translation)
            d = float(np.linalg.norm(pt - pose.translation))
            if best is None or d < best[0]:
                best = (d, pt)
        if best is not None:
            pose = Transform(pose.rotation, best[1])
    return pose


def _run_solve(state: SessionState, seq: int | None) -> list[dict]:
    session = state.session
    held = session.puppet_q.copy()
    diag = solve_session(session)
    state.last_diag = diag
    state.solve_count += 1
    if diag.status in (ik.INFEASIBLE_QP, ik.UNSTABLE):
        # Halt and hold the last stable puppet state; the session survives.
        session.puppet_q = held
        replies = [_error(f"solve failed: {diag.status}; puppet held at last stable state", ack=seq)]
        out = _state_update(state)
        replies.append(out)
        return replies
    out = _state_update(state)
    if seq is not None:
        out["ack"] = seq
    return [out]


def _project(session: AuthoringSession, point, target):
    if target == "robot":
        poses = forward_kinematics(session.model, session.puppet_q)
        placed = robot_placed_polytopes(session.model, poses)
        names = [p.source.attachment for p in placed]
    elif target == "environment":
        if session.environment is None:
            return None
        placed = session.environment.placed()
        names = [p.source.name for p in placed]
    else:
        raise ProtocolError(f"unknown projection target {target!r}")
    if not placed:
        return None
    best = None
    for poly, name in zip(placed, names):
        pt, normal = project_to_surface(poly, point)
        d = float(np.linalg.norm(pt - point))
        if best is None or d < best[0]:
            best = (d, pt, normal, name)
    return best[1], best[2], best[3]


# ---------------------------------------------------------------------------
# drag coalescing


def drag_tick(state: SessionState, now: float) -> list[dict]:
    """Run at most one drag solve per tick using the latest pose sample."""
    drag = state.drag
    if not drag.dirty or drag.anchor_id is None:
        return []
    if now - drag.last_solve_time < 1.0 / state.tick_hz:
        return []
    session = state.session
    if drag.anchor_id not in session.anchors:
        state.drag = DragState()
        return []
    apply_anchor_edit(session, AnchorEdit("move", anchor_id=drag.anchor_id, target=drag.pose))
    drag.dirty = False
    drag.last_solve_time = now
    return _run_solve(state, seq=None)


# ---------------------------------------------------------------------------
# newline-JSON transport


async def serve(hub: SessionHub, host: str = "127.0.0.1", port: int = 0):
    """Serve the hub over newline-delimited JSON; returns the asyncio server."""

    async def on_connection(reader: asyncio.StreamReader, writer: asyncio.StreamWriter):
        state: SessionState | None = None
        queue: asyncio.Queue = asyncio.Queue()

        async def writer_task():
            while True:
                msg = await queue.get()
                if msg is None:
                    break
                writer.write((json.dumps(msg, sort_keys=True) + "\n").encode())
                await writer.drain()

        async def heartbeat_task():
            while True:
                await asyncio.sleep(HEARTBEAT_INTERVAL_S)
                await queue.put({"type": "heartbeat"})

        async def ticker_task():
            while True:
                await asyncio.sleep(1.0 / DEFAULT_TICK_HZ)
                if state is not None:
                    for msg in drag_tick(state, now=asyncio.get_event_loop().time()):
                        await queue.put(msg)

        wt = asyncio.create_task(writer_task())
        hb = asyncio.create_task(heartbeat_task())
        tk = asyncio.create_task(ticker_task())
        try:
            while True:
                line = await reader.readline()
                if not line:
                    break
                try:
                    raw = json.loads(line.decode("utf-8", errors="replace"))
                except json.JSONDecodeError as exc:
                    await queue.put(_error(f"malformed JSON: {exc.msg}"))
                    continue
                state, replies = handle_message(hub, state, raw)
                for msg in replies:
                    await queue.put(msg)
        finally:
            hb.cancel()
            tk.cancel()
            await queue.put(None)  # drain pending updates, then close
            await wt
            writer.close()

    return await asyncio.start_server(on_connection, host, port)
