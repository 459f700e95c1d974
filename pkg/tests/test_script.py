"""Anchor editing, snapping, record/undo, and script persistence checks."""

import json

import numpy as np
import pytest

from poseworks import sample_models
from poseworks.ik import SolverSettings, SpatialPoseTask, solve
from poseworks.kinematics import com_and_momentum_matrix, forward_kinematics
from poseworks.script import (
    Anchor,
    AnchorEdit,
    AnchorEditError,
    AuthoringSession,
    MigrationError,
    ScriptError,
    achieved_value,
    anchor_from_dict,
    anchor_to_dict,
    apply_anchor_edit,
    canonical_json,
    clear_non_persistent,
    load_script,
    record_keyframe,
    save_script,
    script_from_dict,
    script_to_dict,
    snap_anchors_to_puppet,
    snap_puppet_nominal,
    solve_session,
    tasks_from_anchors,
    undo,
)
from poseworks.transforms import Transform, rotvec_to_matrix


def humanoid_session(humanoid):
    return AuthoringSession(humanoid)


def joint_anchor(aid, joint, target, **kw):
    return Anchor(id=aid, kind="joint", joint=joint, target_value=target, **kw)


class TestAnchorEdits:
    def test_mirrored_create(self, humanoid):
        session = humanoid_session(humanoid)
        apply_anchor_edit(
            session,
            AnchorEdit("create", anchor=joint_anchor("e", "l_elbow_pitch", 1.2, mirroring=True)),
        )
        assert set(session.anchors) == {"e", "e.m"}
        twin = session.anchors["e.m"]
        assert twin.joint == "r_elbow_pitch"
        assert twin.target_value == 1.2

    def test_mirrored_move_and_remove(self, humanoid):
        session = humanoid_session(humanoid)
        apply_anchor_edit(
            session,
            AnchorEdit("create", anchor=joint_anchor("e", "l_elbow_pitch", 0.5, mirroring=True)),
        )
        apply_anchor_edit(session, AnchorEdit("move", anchor_id="e", target=0.9))
        assert session.anchors["e.m"].target_value == 0.9
        apply_anchor_edit(session, AnchorEdit("remove", anchor_id="e"))
        assert session.anchors == {}

    def test_mirroring_without_partner_rejected(self, humanoid):
        session = humanoid_session(humanoid)
        with pytest.raises(AnchorEditError):
            apply_anchor_edit(
                session,
                AnchorEdit("create", anchor=joint_anchor("t", "torso_pitch", 0.1, mirroring=True)),
            )
        assert session.anchors == {}

    def test_retier_changes_solver_weight(self, humanoid):
        session = humanoid_session(humanoid)
        apply_anchor_edit(
            session, AnchorEdit("create", anchor=joint_anchor("e", "l_elbow_pitch", 0.4, tier="low"))
        )
        tasks = tasks_from_anchors(session)
        assert tasks[0].weight == session.settings.tier_weights[0]
        apply_anchor_edit(session, AnchorEdit("retier", anchor_id="e", tier="high"))
        tasks = tasks_from_anchors(session)
        assert tasks[0].weight == session.settings.tier_weights[2] == 100.0

    def test_contact_flag_promotes_weight(self, humanoid):
        session = humanoid_session(humanoid)
        anchor = Anchor(id="h", kind="spatial", body="l_forearm", target_pose=Transform.identity())
        apply_anchor_edit(session, AnchorEdit("create", anchor=anchor))
        apply_anchor_edit(session, AnchorEdit("flag", anchor_id="h", flag="contact", value=True))
        tasks = tasks_from_anchors(session)
        assert tasks[0].weight == session.settings.contact_weight == 500.0

    def test_remove_unknown_id_rejected(self, humanoid):
        session = humanoid_session(humanoid)
        with pytest.raises(AnchorEditError):
            apply_anchor_edit(session, AnchorEdit("remove", anchor_id="nope"))

    def test_mirror_commutes_for_symmetric_models(self, humanoid):
        left = humanoid_session(humanoid)
        apply_anchor_edit(
            left,
            AnchorEdit("create", anchor=joint_anchor("k", "l_knee_pitch", 0.7, mirroring=True)),
        )
        right = humanoid_session(humanoid)
        apply_anchor_edit(
            right,
            AnchorEdit("create", anchor=joint_anchor("k", "r_knee_pitch", 0.7, mirroring=True)),
        )
        left_targets = sorted((a.joint, a.target_value) for a in left.anchors.values())
        right_targets = sorted((a.joint, a.target_value) for a in right.anchors.values())
        assert left_targets == right_targets


class TestClearNonPersistent:
    def test_filter(self):
        anchors = {
            "a": joint_anchor("a", "j", 0.0, persistent=True),
            "b": joint_anchor("b", "j", 0.0),
            "c": joint_anchor("c", "j", 0.0),
        }
        kept = clear_non_persistent(anchors)
        assert list(kept) == ["a"]

    def test_all_persistent_identity(self):
        anchors = {
            "a": joint_anchor("a", "j", 0.0, persistent=True),
            "b": joint_anchor("b", "j", 0.0, persistent=True),
        }
        assert list(clear_non_persistent(anchors)) == ["a", "b"]

    def test_none_persistent_empty(self):
        anchors = {"a": joint_anchor("a", "j", 0.0)}
        assert clear_non_persistent(anchors) == {}

    def test_idempotent(self):
        anchors = {
            "a": joint_anchor("a", "j", 0.0, persistent=True),
            "b": joint_anchor("b", "j", 0.0),
        }
        once = clear_non_persistent(anchors)
        assert clear_non_persistent(once) == once


class TestSnapping:
    def test_joint_anchor_copies_value(self, humanoid):
        session = humanoid_session(humanoid)
        apply_anchor_edit(
            session, AnchorEdit("create", anchor=joint_anchor("e", "l_elbow_pitch", 0.3))
        )
        session.puppet_q = session.puppet_q.copy()
        session.puppet_q[humanoid.q_slice("l_elbow_pitch")] = 0.27
        snap_anchors_to_puppet(session.anchors, humanoid, session.puppet_q)
        assert session.anchors["e"].target_value == pytest.approx(0.27)

    def test_masked_components_unchanged(self, humanoid):
        session = humanoid_session(humanoid)
        com0, _ = com_and_momentum_matrix(humanoid, session.puppet_q)
        anchor = Anchor(
            id="c",
            kind="com",
            target_point=np.array([9.0, 9.0, 9.0]),
            axes=(True, False, False),
        )
        apply_anchor_edit(session, AnchorEdit("create", anchor=anchor))
        snap_anchors_to_puppet(session.anchors, humanoid, session.puppet_q)
        snapped = session.anchors["c"].target_point
        assert snapped[0] == pytest.approx(com0[0])
        assert snapped[1] == 9.0 and snapped[2] == 9.0

    def test_post_snap_resolve_is_fixed_point(self, planar_arm):
        session = AuthoringSession(planar_arm)
        target = forward_kinematics(planar_arm, np.array([0.4, -0.9]))["link2"].apply([1.0, 0, 0])
        anchor = Anchor(
            id="tip",
            kind="spatial",
            body="link2",
            offset=Transform.from_parts(translation=[1.0, 0, 0]),
            target_pose=Transform.from_parts(translation=target),
            axes=(False, False, False, True, False, True),
            tier="high",
        )
        apply_anchor_edit(session, AnchorEdit("create", anchor=anchor))
        solve_session(session)
        q_before = session.puppet_q.copy()
        snap_anchors_to_puppet(session.anchors, planar_arm, session.puppet_q)
        snap_puppet_nominal(session)
        solve_session(session)
        assert np.abs(session.puppet_q - q_before).max() < 1e-9

    def test_snap_nominal_idempotent(self, humanoid):
        session = humanoid_session(humanoid)
        session.puppet_q = session.puppet_q + 0.01
        snap_puppet_nominal(session)
        first = session.nominal_q.copy()
        snap_puppet_nominal(session)
        np.testing.assert_array_equal(first, session.nominal_q)

    def test_nominal_snap_prevents_null_space_drift(self):
        # Redundant 3-link arm with a fixed-tip task: before snapping the
        # nominal, the interior joints drift toward the model nominal.
        model = sample_models.make_planar_arm(link_lengths=(0.7, 0.7, 0.7))
        q_work = np.array([0.5, -0.9, 0.6])
        tip_offset = Transform.from_parts(translation=[0.7, 0.0, 0.0])
        target = forward_kinematics(model, q_work)["link3"].compose(tip_offset).translation
        task_anchor = Anchor(
            id="tip",
            kind="spatial",
            body="link3",
            offset=tip_offset,
            target_pose=Transform.from_parts(translation=target),
            axes=(False, False, False, True, False, True),
            tier="high",
        )
        drift_session = AuthoringSession(model)
        drift_session.puppet_q = q_work.copy()
        apply_anchor_edit(drift_session, AnchorEdit("create", anchor=task_anchor.clone()))
        solve_session(drift_session)
        drift = np.abs(drift_session.puppet_q - q_work).max()
        assert drift > 1e-6  # pulled toward the zero nominal posture

        snap_session = AuthoringSession(model)
        snap_session.puppet_q = q_work.copy()
        snap_puppet_nominal(snap_session)
        apply_anchor_edit(snap_session, AnchorEdit("create", anchor=task_anchor.clone()))
        solve_session(snap_session)
        assert np.abs(snap_session.puppet_q - q_work).max() < 1e-6


class TestRecordUndo:
    def test_record_then_undo_restores_state(self, humanoid):
        session = humanoid_session(humanoid)
        before_ctl = session.controller_q.copy()
        before_pup = session.puppet_q.copy()
        session.puppet_q = session.puppet_q + 0.05
        moved = session.puppet_q.copy()
        record_keyframe(session)
        assert len(session.script.keyframes) == 1
        np.testing.assert_array_equal(session.controller_q, moved)  # dispatched
        assert undo(session)
        assert session.script.keyframes == []
        np.testing.assert_array_equal(session.controller_q, before_ctl)
        np.testing.assert_array_equal(session.puppet_q, moved)  # puppet pre-dispatch
        assert len(session.undo_stack) == 0

    def test_default_durations_by_mode(self, humanoid):
        sim = AuthoringSession(humanoid, mode="simulation")
        hw = AuthoringSession(humanoid, mode="hardware")
        assert record_keyframe(sim).duration_s == 2.0
        assert record_keyframe(hw).duration_s == 4.0

    def test_undo_empty_stack_noop(self, humanoid):
        session = humanoid_session(humanoid)
        assert undo(session) is False

    def test_22_records_yield_22_keyframes(self, humanoid):
        session = humanoid_session(humanoid)
        for _ in range(22):
            record_keyframe(session)
        assert len(session.script.keyframes) == 22


def bracing_style_script(humanoid):
    """Anchor-count fixture shaped like the wall-bracing scenario: 5 keyframes
    covering 6 plain + 9 contact pose anchors, 1 joint anchor, 3 CoM anchors."""
    session = AuthoringSession(humanoid)
    rng = np.random.RandomState(71)
    bodies = ["l_foot", "r_foot", "l_forearm", "r_forearm", "torso"]
    made = 0
    for i in range(15):
        body = bodies[i % len(bodies)]
        contact = i >= 6  # 6 plain + 9 contact
        pose = Transform.from_parts(
            rotation=rotvec_to_matrix(rng.uniform(-0.3, 0.3, size=3)),
            translation=rng.uniform(-0.5, 0.5, size=3),
        )
        anchor = Anchor(
            id=f"p{i}",
            kind="spatial",
            body=body,
            target_pose=pose,
            contact=contact,
            persistent=bool(i % 2),
            axes=(True, True, False, True, True, True) if contact else (True,) * 6,
        )
        apply_anchor_edit(session, AnchorEdit("create", anchor=anchor))
        made += 1
    apply_anchor_edit(
        session, AnchorEdit("create", anchor=joint_anchor("j0", "l_elbow_pitch", 0.8))
    )
    for i in range(3):
        apply_anchor_edit(
            session,
            AnchorEdit(
                "create",
                anchor=Anchor(
                    id=f"c{i}",
                    kind="com",
                    target_point=rng.uniform(-0.2, 0.2, size=3),
                    axes=(True, True, i == 0),
                ),
            ),
        )
    for k in range(5):
        session.puppet_q = session.puppet_q + rng.uniform(-0.01, 0.01, size=humanoid.n)
        record_keyframe(session, duration_s=2.0 + k)
    return session.script


class TestPersistence:
    def test_empty_script_roundtrip(self, humanoid, tmp_path):
        session = humanoid_session(humanoid)
        path = tmp_path / "empty.json"
        save_script(session.script, path)
        loaded = load_script(path)
        assert script_to_dict(loaded) == script_to_dict(session.script)

    def test_bracing_fixture_roundtrip_exact(self, humanoid, tmp_path):
        script = bracing_style_script(humanoid)
        kinds = [a.kind for kf in script.keyframes for a in kf.anchors]
        contacts = [a for kf in script.keyframes for a in kf.anchors if a.contact]
        assert len(script.keyframes) == 5
        path = tmp_path / "bracing.json"
        save_script(script, path)
        loaded = load_script(path)
        assert script_to_dict(loaded) == script_to_dict(script)
        # canonical bytes: saving twice is byte-identical
        path2 = tmp_path / "bracing2.json"
        save_script(loaded, path2)
        assert path.read_bytes() == path2.read_bytes()

    def test_unknown_fields_preserved(self, humanoid, tmp_path):
        script = bracing_style_script(humanoid)
        doc = script_to_dict(script)
        doc["future_field"] = {"nested": [1, 2, 3]}
        doc["keyframes"][0]["future_kf"] = "x"
        doc["keyframes"][0]["anchors"][0]["future_anchor"] = 4.5
        path = tmp_path / "future.json"
        path.write_text(canonical_json(doc))
        loaded = load_script(path)
        path2 = tmp_path / "resaved.json"
        save_script(loaded, path2)
        redoc = json.loads(path2.read_text())
        assert redoc["future_field"] == {"nested": [1, 2, 3]}
        assert redoc["keyframes"][0]["future_kf"] == "x"
        assert redoc["keyframes"][0]["anchors"][0]["future_anchor"] == 4.5

    def test_version_mismatch_raises(self, tmp_path):
        path = tmp_path / "v2.json"
        path.write_text(json.dumps({"version": 2, "model": "m", "keyframes": []}))
        with pytest.raises(MigrationError):
            load_script(path)

    def test_malformed_json_reports_offset(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"version": 1, "keyframes": [')
        with pytest.raises(ScriptError, match="byte offset"):
            load_script(path)

    def test_anchor_roundtrip_all_kinds(self, humanoid):
        anchors = [
            Anchor(
                id="s",
                kind="spatial",
                body="l_foot",
                offset=Transform.from_parts(translation=[0.02, 0.0, -0.05]),
                target_pose=Transform.from_parts(
                    rotation=rotvec_to_matrix([0.1, 0.2, -0.3]), translation=[1, 2, 3.0]
                ),
                axes=(True, True, False, True, True, True),
                contact=True,
                follow="track-controller",
            ),
            Anchor(id="c", kind="com", target_point=np.array([0.1, 0.2, 0.3])),
            Anchor(id="j", kind="joint", joint="l_knee_pitch", target_value=0.5, mirroring=True),
        ]
        for a in anchors:
            doc = anchor_to_dict(a)
            b = anchor_from_dict(doc)
            assert anchor_to_dict(b) == doc
