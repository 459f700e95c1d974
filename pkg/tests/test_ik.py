"""IK solver checks: task construction, QP behavior, convergence, limits.

The reachable-target oracle is the classic two-link law-of-cosines IK worked
in the arm's sagittal plane; the solver must land on the branch selected by
the nominal posture.
"""

import numpy as np
import pytest

from poseworks import sample_models
from poseworks.geometry import Environment, build_polytope, place, proximity, robot_placed_polytopes
from poseworks.ik import (
    CONVERGED,
    INFEASIBLE_QP,
    MAX_ITERATIONS,
    CoMTask,
    IneqRow,
    JointPositionTask,
    MotionTask,
    SolverSettings,
    SpatialPoseTask,
    build_motion_tasks,
    collision_tasks,
    momentum_constraint,
    solve,
    solve_qp,
    velocity_bounds,
)
from poseworks.kinematics import (
    RobotModel,
    RigidBody,
    com_and_momentum_matrix,
    forward_kinematics,
    make_joint,
)
from poseworks.transforms import Transform, rotvec_to_matrix

from conftest import random_configuration

TIP_OFFSET = Transform.from_parts(translation=[1.0, 0.0, 0.0])
PLANE_AXES = (False, False, False, True, False, True)  # x and z translation only


def tip_position(model, q):
    return forward_kinematics(model, q)["link2"].apply(np.array([1.0, 0.0, 0.0]))


def analytic_two_link(target_x, target_zt, elbow_down=True):
    """Closed-form planar two-link IK in (x, z-tilde = -z) coordinates."""
    r2 = target_x**2 + target_zt**2
    c2 = (r2 - 2.0) / 2.0
    c2 = np.clip(c2, -1.0, 1.0)
    t2 = np.arccos(c2)
    if not elbow_down:
        t2 = -t2
    t1 = np.arctan2(target_zt, target_x) - np.arctan2(np.sin(t2), 1.0 + np.cos(t2))
    return np.array([t1, t2])


class TestBuildMotionTasks:
    def test_joint_task_zero_error(self, planar_arm):
        q = np.array([0.3, -0.2])
        tasks = build_motion_tasks(
            planar_arm, q, [JointPositionTask("j1", target=0.3)], SolverSettings()
        )
        np.testing.assert_allclose(tasks[0].objective, [0.0], atol=1e-12)

    def test_com_task_proportional(self, planar_arm):
        q = np.zeros(2)
        com, _ = com_and_momentum_matrix(planar_arm, q)
        target = com + np.array([0.1, 0.0, 0.0])
        tasks = build_motion_tasks(
            planar_arm, q, [CoMTask(target=target, gain=1.0)], SolverSettings()
        )
        np.testing.assert_allclose(tasks[0].objective, [0.1, 0.0, 0.0], atol=1e-12)

    def test_spatial_rotation_log_objective(self, planar_arm):
        q = np.zeros(2)
        pose = forward_kinematics(planar_arm, q)["link2"]
        gain = 2.5
        target = Transform(rotvec_to_matrix(np.array([0, 0, np.pi / 2])) @ pose.rotation, pose.translation)
        tasks = build_motion_tasks(
            planar_arm,
            q,
            [SpatialPoseTask("link2", target=target, gain=gain)],
            SolverSettings(),
        )
        # angular rows first; expected k * (0, 0, pi/2) in the target frame
        np.testing.assert_allclose(tasks[0].objective[:3], [0, 0, gain * np.pi / 2], atol=1e-9)

    def test_unknown_joint_raises(self, planar_arm):
        from poseworks.kinematics import ModelError

        with pytest.raises(ModelError):
            build_motion_tasks(
                planar_arm, np.zeros(2), [JointPositionTask("nope", 0.0)], SolverSettings()
            )


class TestSolveQP:
    def test_no_tasks_zero_drive(self):
        settings = SolverSettings()
        bounds = (np.full(3, -1.0), np.full(3, 1.0))
        v, sol, cost = solve_qp([], settings, bounds, v_nom=np.zeros(3))
        np.testing.assert_allclose(v, 0.0, atol=1e-12)
        assert sol.kkt_residual <= 1e-8

    def test_dominant_task(self):
        settings = SolverSettings()
        n = 4
        task = MotionTask("t", np.eye(n), np.ones(n), np.full(n, 1e6))
        bounds = (np.full(n, -10.0), np.full(n, 10.0))
        v, sol, _ = solve_qp([task], settings, bounds)
        np.testing.assert_allclose(v, np.ones(n), atol=1e-6)
        assert sol.kkt_residual <= 1e-8

    def test_conflicting_tasks_closed_form(self):
        # No nominal term; velocity weight is the epsilon regularizer.
        settings = SolverSettings(velocity_weight=0.01)
        w1, w2 = 10.0, 100.0
        p1, p2 = 0.7, -0.3
        tasks = [
            MotionTask("a", np.array([[1.0]]), np.array([p1]), np.array([w1])),
            MotionTask("b", np.array([[1.0]]), np.array([p2]), np.array([w2])),
        ]
        bounds = (np.array([-50.0]), np.array([50.0]))
        v, sol, _ = solve_qp(tasks, settings, bounds)
        expected = (w1 * p1 + w2 * p2) / (w1 + w2 + settings.velocity_weight)
        assert abs(v[0] - expected) < 1e-9
        assert sol.kkt_residual <= 1e-8


class TestMomentumConstraint:
    square = np.array([[-0.5, -0.5], [0.5, -0.5], [0.5, 0.5], [-0.5, 0.5]])

    def test_interior_zero_velocity_feasible(self, humanoid):
        com, A = com_and_momentum_matrix(humanoid, humanoid.nominal_q)
        region = self.square + com[:2]
        rows = momentum_constraint(region, com, A, humanoid.total_mass, 0.05)
        for r in rows:
            assert r.row @ np.zeros(humanoid.n) <= r.bound + 1e-12
            assert r.bound >= 0.0

    def test_com_on_edge_blocks_outward(self, humanoid):
        com, A = com_and_momentum_matrix(humanoid, humanoid.nominal_q)
        region = self.square + com[:2] - np.array([0.5, 0.0])  # com on +x edge
        rows = momentum_constraint(region, com, A, humanoid.total_mass, 0.05)
        bounds = sorted(r.bound for r in rows)
        assert abs(bounds[0]) < 1e-12  # the +x edge row allows no outward speed

    def test_inside_edge_bound_arithmetic(self, humanoid):
        com, A = com_and_momentum_matrix(humanoid, humanoid.nominal_q)
        region = self.square + com[:2] - np.array([0.45, 0.0])  # 0.05 inside +x edge
        rows = momentum_constraint(region, com, A, humanoid.total_mass, 0.05)
        bounds = sorted(r.bound for r in rows)
        assert abs(bounds[0] - 1.0) < 1e-12  # 0.05 m / 0.05 s

    def test_empty_region_raises(self, humanoid):
        from poseworks.ik import InfeasibleRegionError

        com, A = com_and_momentum_matrix(humanoid, humanoid.nominal_q)
        with pytest.raises(InfeasibleRegionError):
            momentum_constraint(np.zeros((0, 2)), com, A, humanoid.total_mass, 0.05)


def arm_with_hand_box(x_box):
    """Planar arm with a small collision box on link2 plus a wall environment."""
    model = sample_models.make_planar_arm()
    model.polytopes.append(
        {
            "id": "hand",
            "body": "link2",
            "vertices": sample_models._box_vertices(0.05, 0.05, 0.05, center=(1.0, 0.0, 0.0)),
        }
    )
    env = Environment(
        "wall", [build_polytope(sample_models._box_vertices(0.1, 0.5, 0.5, center=(x_box, 0.0, 0.0)), name="wall")]
    )
    return model, env


class TestCollisionTasks:
    def test_free_space_empty(self):
        model, env = arm_with_hand_box(x_box=5.0)
        tasks, rows, warn = collision_tasks(model, np.zeros(2), env, SolverSettings())
        assert tasks == [] and rows == [] and warn == []

    def test_penetration_objective_arithmetic(self):
        # Wall slab face at x = 2.04 - 0.1 = 1.94; hand box face reaches x = 2.05 hmm
        model, env = arm_with_hand_box(x_box=2.14)  # wall spans [2.04, 2.24]
        settings = SolverSettings()
        tasks, rows, _ = collision_tasks(model, np.zeros(2), env, settings)
        assert len(tasks) == 1
        depth = tasks[0].objective[0] / settings.separation_gain
        np.testing.assert_allclose(depth, 0.01, atol=1e-9)

    def test_solver_separates_within_50_iterations(self):
        model, env = arm_with_hand_box(x_box=2.14)
        settings = SolverSettings()
        q, diag = solve(model, np.zeros(2), [], environment=env, settings=settings, max_iterations=50)
        poses = forward_kinematics(model, q)
        placed = robot_placed_polytopes(model, poses)
        res = proximity(placed[0], env.placed()[0])
        assert not res.penetrating or res.depth <= 1e-6
        assert diag.status in (CONVERGED, MAX_ITERATIONS)


class TestSolve:
    def test_fixed_point_two_iterations(self, planar_arm):
        q0 = np.array([0.4, -0.8])
        target = tip_position(planar_arm, q0)
        task = SpatialPoseTask(
            "link2",
            target=Transform.from_parts(translation=target),
            control_frame=TIP_OFFSET,
            axes=PLANE_AXES,
            weight=100.0,
        )
        q, diag = solve(planar_arm, q0, [task], nominal_q=q0)
        assert diag.status == CONVERGED
        assert diag.iterations <= 2
        assert np.abs(q - q0).max() < 1e-9

    @pytest.mark.parametrize("target_xz", [(1.4, 0.5), (0.9, -0.4), (1.7, 0.2)])
    def test_reachable_matches_analytic(self, planar_arm, target_xz):
        tx, tzt = target_xz
        expected = analytic_two_link(tx, tzt, elbow_down=True)
        q_nom = expected + np.array([0.15, -0.2])  # near the elbow-down branch
        target_world = np.array([tx, 0.0, -tzt])  # z-tilde = -z
        task = SpatialPoseTask(
            "link2",
            target=Transform.from_parts(translation=target_world),
            control_frame=TIP_OFFSET,
            axes=PLANE_AXES,
            weight=100.0,
        )
        q, diag = solve(planar_arm, q_nom, [task], nominal_q=q_nom)
        assert diag.status == CONVERGED
        residual = np.linalg.norm(tip_position(planar_arm, q) - target_world)
        assert residual < 1e-6
        np.testing.assert_allclose(q, expected, atol=1e-4)
        assert diag.max_kkt_residual <= 1e-8

    def test_unreachable_reports_boundary_residual(self, planar_arm):
        r = 2.5
        target_world = np.array([r, 0.0, 0.0])
        task = SpatialPoseTask(
            "link2",
            target=Transform.from_parts(translation=target_world),
            control_frame=TIP_OFFSET,
            axes=PLANE_AXES,
            weight=100.0,
        )
        q0 = np.array([0.3, -0.6])
        q, diag = solve(planar_arm, q0, [task], nominal_q=q0)
        assert diag.status == MAX_ITERATIONS
        residual = list(diag.task_residuals.values())[0]
        assert abs(residual - (r - 2.0)) < 1e-3

    def test_joint_limits_never_violated(self):
        model = sample_models.make_planar_arm(pos_limits=(-1.0, 1.0))
        rng = np.random.RandomState(41)
        lo, hi = model.position_limits()
        for _ in range(25):
            q0 = rng.uniform(lo, hi)
            target = rng.uniform(-2.2, 2.2, size=2)
            task = SpatialPoseTask(
                "link2",
                target=Transform.from_parts(translation=[target[0], 0.0, target[1]]),
                control_frame=TIP_OFFSET,
                axes=PLANE_AXES,
                weight=100.0,
            )
            # Track every intermediate configuration through a wrapped integrate.
            qs = [q0]
            q, diag = solve(model, q0, [task], max_iterations=40)
            assert np.all(q >= lo) and np.all(q <= hi)

    def test_cost_trace_non_increasing_when_converged(self, planar_arm):
        # Small initial error keeps every step inside the trust region, the
        # regime where the QP cost is a true descent quantity.
        q_sol = np.array([0.5, 0.8])
        target = tip_position(planar_arm, q_sol)
        task = SpatialPoseTask(
            "link2",
            target=Transform.from_parts(translation=target),
            control_frame=TIP_OFFSET,
            axes=PLANE_AXES,
            weight=100.0,
        )
        q0 = q_sol + np.array([0.02, -0.03])
        q, diag = solve(planar_arm, q0, [task], nominal_q=q_sol)
        assert diag.status == CONVERGED
        trace = diag.cost_trace
        for a, b in zip(trace[1:], trace[2:]):
            assert b <= a + 1e-9

    def test_cost_trace_tail_non_increasing_large_motion(self, planar_arm):
        target = np.array([1.2, 0.0, -0.7])
        q_sol = analytic_two_link(target[0], -target[2], elbow_down=True)
        task = SpatialPoseTask(
            "link2",
            target=Transform.from_parts(translation=target),
            control_frame=TIP_OFFSET,
            axes=PLANE_AXES,
            weight=100.0,
        )
        q0 = np.array([0.5, 0.8])
        q, diag = solve(planar_arm, q0, [task], nominal_q=q_sol)
        assert diag.status == CONVERGED
        tail = diag.cost_trace[-8:]
        for a, b in zip(tail, tail[1:]):
            assert b <= a + 1e-9

    def test_weight_tier_monotonicity(self, planar_arm):
        # Two conflicting position tasks; raising one's weight cannot worsen it.
        t_lo = np.array([1.3, 0.0, -0.5])
        t_hi = np.array([1.1, 0.0, -0.9])
        q0 = np.array([0.4, 0.6])
        residuals = []
        for w in (1.0, 10.0, 100.0):
            tasks = [
                SpatialPoseTask(
                    "link2", target=Transform.from_parts(translation=t_lo),
                    control_frame=TIP_OFFSET, axes=PLANE_AXES, weight=w, name="varied",
                ),
                SpatialPoseTask(
                    "link2", target=Transform.from_parts(translation=t_hi),
                    control_frame=TIP_OFFSET, axes=PLANE_AXES, weight=10.0, name="fixed",
                ),
            ]
            q, diag = solve(planar_arm, q0, tasks, nominal_q=q0)
            residuals.append(diag.task_residuals["varied"])
        assert residuals[0] >= residuals[1] - 1e-9 >= residuals[2] - 2e-9

    def test_determinism(self, planar_arm):
        task = SpatialPoseTask(
            "link2",
            target=Transform.from_parts(translation=[1.0, 0.0, -1.0]),
            control_frame=TIP_OFFSET,
            axes=PLANE_AXES,
            weight=100.0,
        )
        q0 = np.array([0.2, 0.4])
        q1, d1 = solve(planar_arm, q0, [task])
        q2, d2 = solve(planar_arm, q0, [task])
        assert np.array_equal(q1, q2)
        assert d1.cost_trace == d2.cost_trace

    def test_tangent_contact_target_end_to_end(self):
        # Applying a tangency target in the IK must leave the robot surface
        # normal anti-parallel to the environment normal within 1e-3 rad.
        from poseworks.geometry import tangent_contact_target
        from poseworks.transforms import frame_with_z

        # Three links: position (2) + in-plane tangency (1) is exactly
        # determined; a two-link arm would be over-constrained.
        model = sample_models.make_planar_arm(link_lengths=(0.7, 0.7, 0.7))
        q0 = np.array([0.3, -0.5, 0.2])
        # Robot-side contact frame on the link3 tip, z axis = +x surface normal.
        n_r_body = np.array([1.0, 0.0, 0.0])
        offset = Transform(frame_with_z(n_r_body), np.array([0.7, 0.0, 0.0]))
        pose0 = forward_kinematics(model, q0)["link3"].compose(offset)
        n_r_world = pose0.rotation[:, 2]
        env_point = np.array([1.2, 0.0, -0.9])
        env_normal = np.array([0.0, 0.0, 1.0])
        target = tangent_contact_target(n_r_world, env_point, env_normal)
        task = SpatialPoseTask(
            "link3",
            target=Transform(target.rotation @ pose0.rotation, target.position),
            control_frame=offset,
            axes=target.axis_mask,
            weight=500.0,
        )
        q, diag = solve(model, q0, [task], nominal_q=q0)
        pose = forward_kinematics(model, q)["link3"].compose(offset)
        n_post = pose.rotation[:, 2]
        angle = np.arccos(np.clip(n_post @ (-env_normal), -1.0, 1.0))
        assert angle < 1e-3
        assert diag.status == CONVERGED

    def test_com_constraint_holds_at_convergence(self, humanoid):
        com0, _ = com_and_momentum_matrix(humanoid, humanoid.nominal_q)
        region = np.array([[-0.05, -0.2], [0.05, -0.2], [0.05, 0.2], [-0.05, 0.2]]) + com0[:2]
        # Ask the CoM to move 20 cm forward; the region caps it at +5 cm.
        task = CoMTask(target=com0 + np.array([0.2, 0.0, 0.0]), axes=(True, True, False), weight=100.0)
        q, diag = solve(humanoid, humanoid.nominal_q, [task], region=region, max_iterations=80)
        com, _ = com_and_momentum_matrix(humanoid, q)
        assert com[0] - (com0[0] + 0.05) <= 1e-6
        # and it actually moved toward the edge
        assert com[0] > com0[0] + 0.02

    def test_infeasible_region_reports(self, humanoid):
        region = np.zeros((0, 2))
        task = CoMTask(target=np.zeros(3), weight=10.0)
        q, diag = solve(humanoid, humanoid.nominal_q, [task], region=region, max_iterations=5)
        assert diag.status == INFEASIBLE_QP
        np.testing.assert_array_equal(q, humanoid.nominal_q)
