"""Keyframe authoring: anchors, mirroring, snapping, record/undo, scripts.

Drives an in-memory session exactly the way the live server does: create
anchors (with mirroring), solve, record keyframes, undo one, then persist
the script and load it back byte-identically.
"""

import tempfile
from pathlib import Path

import numpy as np

from poseworks import sample_models
from poseworks.kinematics import com_and_momentum_matrix
from poseworks.script import (
    Anchor,
    AnchorEdit,
    AuthoringSession,
    apply_anchor_edit,
    clear_non_persistent,
    load_script,
    record_keyframe,
    save_script,
    script_to_dict,
    snap_anchors_to_puppet,
    snap_puppet_nominal,
    solve_session,
    undo,
)

humanoid = sample_models.make_humanoid()
session = AuthoringSession(humanoid, mode="simulation")

# A mirrored joint anchor: editing the left elbow edits the right one too.
apply_anchor_edit(
    session,
    AnchorEdit(
        "create",
        anchor=Anchor(id="elbows", kind="joint", joint="l_elbow_pitch", target_value=-0.9, mirroring=True),
    ),
)
print("anchors after mirrored create:", list(session.anchors))
apply_anchor_edit(session, AnchorEdit("move", anchor_id="elbows", target=-1.1))
print("right elbow target follows:", session.anchors["elbows.m"].target_value)

# A persistent CoM anchor nudging the body forward.
com0, _ = com_and_momentum_matrix(humanoid, session.puppet_q)
apply_anchor_edit(
    session,
    AnchorEdit(
        "create",
        anchor=Anchor(
            id="com", kind="com", target_point=com0 + np.array([0.02, 0.0, -0.01]),
            axes=(True, False, True), tier="high", persistent=True,
        ),
    ),
)

diag = solve_session(session)
print(f"solve: {diag.status} in {diag.iterations} iterations")

# Record two keyframes; the second with an explicit slow transition.
record_keyframe(session)
record_keyframe(session, duration_s=4.5)
print("keyframes recorded:", len(session.script.keyframes))

# Undo rewinds the dispatch and removes the stored keyframe.
undo(session)
print("after undo:", len(session.script.keyframes), "keyframe(s), undo depth", len(session.undo_stack))

# Snap tools: anchor setpoints take the achieved values; the solver's
# nominal posture becomes the current solution.
snap_anchors_to_puppet(session.anchors, humanoid, session.puppet_q)
snap_puppet_nominal(session)
print("elbow target after snap:", round(float(session.anchors['elbows'].target_value), 4))

# Clearing non-persistent anchors keeps only the CoM anchor.
session.anchors = clear_non_persistent(session.anchors)
print("after clear_non_persistent:", list(session.anchors))

# Scripts persist as canonical JSON: same state, same bytes.
with tempfile.TemporaryDirectory() as d:
    p1, p2 = Path(d) / "a.json", Path(d) / "b.json"
    save_script(session.script, p1)
    loaded = load_script(p1)
    save_script(loaded, p2)
    print("round-trip deep-equal:", script_to_dict(loaded) == script_to_dict(session.script))
    print("canonical bytes identical:", p1.read_bytes() == p2.read_bytes())
