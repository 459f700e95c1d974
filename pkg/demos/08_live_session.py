"""Live session protocol: hello/welcome, anchor edits, drag coalescing.

Exercises the message handler directly (the asyncio transport wraps exactly
this function), including the two-phase contact creation flow and a drag
stream coalesced to the solver tick.
"""

import numpy as np

from poseworks import sample_models
from poseworks.geometry import environment_from_list
from poseworks.script import anchor_to_dict, Anchor
from poseworks.server import SessionHub, drag_tick, handle_message
from poseworks.transforms import Transform

model = sample_models.make_planar_arm()
model.polytopes.append(
    {
        "id": "hand",
        "body": "link2",
        "vertices": sample_models._box_vertices(0.05, 0.05, 0.05, center=(1.0, 0.0, 0.0)),
    }
)
env = environment_from_list([sample_models.block((1.2, 0.0, -1.5), (0.3, 0.3, 0.3))], name="demo")
hub = SessionHub(model, environment=env)

state, replies = handle_message(hub, None, {"type": "hello", "proto": 1})
welcome, update = replies
print("welcome: session", welcome["payload"]["session"], "model", welcome["payload"]["model"]["name"])
print("initial revision:", update["revision"])
state.session.puppet_q = np.array([0.2, -0.4])

seq = 0


def send(mtype, payload):
    global state, seq
    seq += 1
    state, out = handle_message(hub, state, {"type": mtype, "seq": seq, "payload": payload})
    return out


# Two-phase contact creation via server-side projections.
p1 = send("project_point", {"point": [2.0, 0.0, 0.5], "target": "robot"})[0]["payload"]
print("\nphase 1 (robot surface):", np.round(p1["point"], 3), "normal", np.round(p1["normal"], 3))
p2 = send("project_point", {"point": [1.2, 0.0, -1.1], "target": "environment"})[0]["payload"]
print("phase 2 (environment):  ", np.round(p2["point"], 3), "normal", np.round(p2["normal"], 3))
out = send(
    "anchor_edit",
    {
        "op": "create_contact",
        "id": "hand_block",
        "body": "link2",
        "body_point": p1["point"],
        "robot_normal": p1["normal"],
        "env_point": p2["point"],
        "env_normal": p2["normal"],
    },
)
anchor = [a for a in out[0]["payload"]["anchors"] if a["id"] == "hand_block"][0]
print("contact anchor created, axes mask:", anchor["axes"])
send("anchor_edit", {"op": "remove", "id": "hand_block"})

# A drag stream: 300 samples in half a second, coalesced to the 30 Hz tick.
pose0 = {a["id"]: a for a in out[0]["payload"]["anchors"]}
tip = Anchor(
    id="tip",
    kind="spatial",
    body="link2",
    offset=Transform.from_parts(translation=[1.0, 0.0, 0.0]),
    target_pose=Transform.from_parts(translation=[1.6, 0.0, -0.6]),
    axes=(False, False, False, True, False, True),
    tier="high",
)
send("anchor_edit", {"op": "create", "anchor": anchor_to_dict(tip)})
solves_before = state.solve_count
updates = 0
for i in range(300):
    now = i / 600.0
    target = [1.5 + 0.2 * np.sin(12.0 * now), 0.0, -0.5]
    send(
        "drag_pose",
        {
            "anchor_id": "tip",
            "target": {"position": target, "rotation": [[1, 0, 0], [0, 1, 0], [0, 0, 1]]},
        },
    )
    updates += len(drag_tick(state, now))
print(f"\ndrag: 300 samples -> {state.solve_count - solves_before} solves, {updates} state updates")

out = send("record_keyframe", {})
print("recorded keyframes:", out[0]["payload"]["keyframes"])
out = send("export_script", {})
print("exported script keyframes:", len(out[0]["payload"]["script"]["keyframes"]))
