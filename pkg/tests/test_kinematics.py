import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quadmimic.kinematics import (
    Pose,
    PoseRates,
    QuadrupedModel,
    Unreachable,
    fk_body,
    forward_kinematics,
    hull_distance_2d,
    leg_jacobian,
    legs_jacobian,
    parse_config_text,
    solve_leg_ik,
    support_polygon_distance,
    end_effector_rates,
)
from quadmimic.rotations import quat_from_euler, quat_from_rotvec, quat_mul, quat_normalize


def _random_pose(model, rng, root_scale=1.0):
    q = rng.uniform(model.joint_limits[:, 0] * 0.8, model.joint_limits[:, 1] * 0.8)
    quat = quat_normalize(rng.normal(size=4))
    return Pose(rng.normal(scale=root_scale, size=3), quat, q)


def test_zero_pose_feet_straight_down(model):
    pose = Pose(np.zeros(3), [1, 0, 0, 0], np.zeros(12))
    world, body = forward_kinematics(model, pose)
    expected = model.hip_positions + np.stack(
        [np.zeros(4), model.side_signs * model.abduction_offset, np.full(4, -(model.thigh_length + model.calf_length))],
        axis=1,
    )
    np.testing.assert_allclose(body, expected, atol=1e-12)
    np.testing.assert_allclose(world, expected, atol=1e-12)


def test_root_translation_shifts_world_feet_only(model, rng):
    pose = _random_pose(model, rng)
    shifted = Pose(pose.root_position + [1.0, 0.0, 0.0], pose.root_quat, pose.joints)
    w0, b0 = forward_kinematics(model, pose)
    w1, b1 = forward_kinematics(model, shifted)
    np.testing.assert_allclose(b0, b1)
    np.testing.assert_allclose(w1 - w0, np.tile([1.0, 0, 0], (4, 1)), atol=1e-12)


def test_body_frame_fk_invariant_under_yaw(model, rng):
    pose = _random_pose(model, rng)
    yawed = Pose(pose.root_position, quat_mul(quat_from_euler(0, 0, 1.1), pose.root_quat), pose.joints)
    np.testing.assert_allclose(forward_kinematics(model, pose)[1], forward_kinematics(model, yawed)[1])


def test_front_right_two_link_chain_hand_value(model):
    # sagittal chain: x = -l1 sin q1 - l2 sin(q1+q2), z = -l1 cos q1 - l2 cos(q1+q2)
    q = np.zeros(12)
    q[0:3] = [0.0, 0.9, -1.8]
    body = fk_body(model, q)[0]
    l1 = l2 = 0.2
    expected = model.hip_positions[0] + [
        -l1 * np.sin(0.9) - l2 * np.sin(-0.9),
        -model.abduction_offset,
        -l1 * np.cos(0.9) - l2 * np.cos(-0.9),
    ]
    np.testing.assert_allclose(body, expected, atol=1e-12)


def test_jacobian_matches_finite_differences(model, rng):
    worst = 0.0
    for _ in range(100):
        q = rng.uniform(model.joint_limits[:, 0], model.joint_limits[:, 1])
        jac = legs_jacobian(model, q)
        eps = 1e-6
        for leg in range(4):
            fd = np.zeros((3, 3))
            for k in range(3):
                qp, qm = q.copy(), q.copy()
                qp[3 * leg + k] += eps
                qm[3 * leg + k] -= eps
                fd[:, k] = (fk_body(model, qp)[leg] - fk_body(model, qm)[leg]) / (2 * eps)
            scale = max(np.abs(fd).max(), 1e-9)
            worst = max(worst, np.abs(jac[leg] - fd).max() / scale)
    assert worst < 1e-5


def test_jacobian_rank_two_at_full_extension(model):
    pose = Pose(np.zeros(3), [1, 0, 0, 0], np.zeros(12))
    jac = leg_jacobian(model, pose, 0)
    assert np.linalg.matrix_rank(jac, tol=1e-9) == 2


def test_abduction_column_out_of_sagittal_plane(model):
    pose = Pose(np.zeros(3), [1, 0, 0, 0], np.zeros(12))
    jac = leg_jacobian(model, pose, 1)
    assert jac[0, 0] == pytest.approx(0.0, abs=1e-12)
    assert np.linalg.norm(jac[1:, 0]) > 0.1


def test_leg_jacobian_bad_index(model):
    pose = Pose(np.zeros(3), [1, 0, 0, 0], np.zeros(12))
    with pytest.raises(IndexError):
        leg_jacobian(model, pose, 4)


def test_ik_round_trip(model, rng):
    for _ in range(25):
        base = _random_pose(model, rng, root_scale=0.2)
        leg = int(rng.integers(4))
        q_true = rng.uniform(model.joint_limits[3 * leg : 3 * leg + 3, 0] * 0.7, model.joint_limits[3 * leg : 3 * leg + 3, 1] * 0.7)
        joints = base.joints.copy()
        joints[3 * leg : 3 * leg + 3] = q_true
        target = forward_kinematics(model, Pose(base.root_position, base.root_quat, joints))[0][leg]
        solved = solve_leg_ik(model, base, leg, target, seed_joints=[0.0, 0.7, -1.4])
        joints[3 * leg : 3 * leg + 3] = solved
        reached = forward_kinematics(model, Pose(base.root_position, base.root_quat, joints))[0][leg]
        assert np.linalg.norm(reached - target) < 1e-4


def test_ik_unreachable(model):
    pose = Pose(np.array([0, 0, 0.3]), [1, 0, 0, 0], np.zeros(12))
    with pytest.raises(Unreachable):
        solve_leg_ik(model, pose, 0, pose.root_position + np.array([0.0, 0.0, -2.0]))


def test_ik_workspace_boundary_straightens_knee(model):
    # law-of-cosines oracle: a boundary target is reached with knee ~ 0
    pose = Pose(np.array([0, 0, 0.3]), quat_from_euler(0.1, -0.2, 0.3), np.zeros(12))
    q_boundary = np.array([0.1, 0.3, 0.0])
    joints = np.zeros(12)
    joints[0:3] = q_boundary
    target = forward_kinematics(model, Pose(pose.root_position, pose.root_quat, joints))[0][0]
    solved = solve_leg_ik(model, pose, 0, target, seed_joints=[0.0, 0.7, -1.4])
    assert abs(solved[2]) < 1e-3


def test_end_effector_rates_zero(model, rng):
    pose = _random_pose(model, rng)
    vel, acc = end_effector_rates(model, pose, PoseRates.zero(), PoseRates.zero())
    np.testing.assert_allclose(vel, 0.0, atol=1e-15)
    np.testing.assert_allclose(acc, 0.0, atol=1e-15)


def test_end_effector_rates_rigid_body_formula(model):
    pose = Pose(np.zeros(3), [1, 0, 0, 0], np.zeros(12))
    omega = np.array([0.3, -0.2, 0.5])
    v_lin = np.array([0.1, 0.0, -0.2])
    vel, _ = end_effector_rates(model, pose, PoseRates(omega, np.zeros(12), v_lin))
    feet = fk_body(model, pose.joints)
    np.testing.assert_allclose(vel, v_lin + np.cross(omega, feet), atol=1e-12)


def _integrate(pose, rates, acc, t):
    rp = pose.root_position + rates.root_linear_velocity * t + 0.5 * acc.root_linear_velocity * t * t
    rv = rates.root_angular_velocity * t + 0.5 * acc.root_angular_velocity * t * t
    return Pose(rp, quat_mul(pose.root_quat, quat_from_rotvec(rv)), pose.joints + rates.joint_velocities * t + 0.5 * acc.joint_velocities * t * t)


def test_end_effector_rates_match_central_differences(model, rng):
    worst_v = worst_a = 0.0
    for _ in range(30):
        pose = _random_pose(model, rng)
        rates = PoseRates(rng.normal(size=3), rng.normal(size=12), rng.normal(size=3))
        acc = PoseRates(rng.normal(size=3), rng.normal(size=12), rng.normal(size=3))
        vel, a = end_effector_rates(model, pose, rates, acc)
        eps = 1e-5
        fp, _ = forward_kinematics(model, _integrate(pose, rates, acc, eps))
        fm, _ = forward_kinematics(model, _integrate(pose, rates, acc, -eps))
        f0, _ = forward_kinematics(model, pose)
        vfd = (fp - fm) / (2 * eps)
        afd = (fp - 2 * f0 + fm) / eps**2
        worst_v = max(worst_v, np.abs(vel - vfd).max() / max(1.0, np.abs(vfd).max()))
        worst_a = max(worst_a, np.abs(a - afd).max() / max(1.0, np.abs(afd).max()))
    assert worst_v < 1e-4
    assert worst_a < 1e-4


def test_support_polygon_interior_and_counts(model):
    pose = Pose(np.array([0.0, 0.0, 0.3]), [1, 0, 0, 0], np.zeros(12))
    assert support_polygon_distance(model, pose, [1, 1, 1, 1]) == 0.0
    # fewer contacts than required
    assert support_polygon_distance(model, pose, [1, 0, 0, 1]) == 0.0


def test_support_polygon_distance_outside_triangle():
    d = hull_distance_2d([[0.0, 0.0], [0.4, 0.0], [0.2, 0.3]], [0.2, -0.05])
    assert d == pytest.approx(0.05, abs=1e-12)


def test_support_polygon_outside_via_pose(model):
    # legs swept backward: the three contact feet sit behind the trunk center
    joints = np.tile([0.0, 1.2, 0.0], 4)
    pose = Pose(np.array([0.0, 0.0, 0.3]), [1, 0, 0, 0], joints)
    d = support_polygon_distance(model, pose, [1, 1, 1, 0])
    feet, _ = forward_kinematics(model, pose)
    expected = hull_distance_2d(feet[[0, 1, 2], :2], pose.root_position[:2])
    assert d == pytest.approx(expected)
    assert d > 0.1


@settings(max_examples=40, deadline=None)
@given(st.floats(-0.08, 0.08))
def test_hull_distance_continuous_across_edge(offset):
    pts = [[0.0, 0.0], [0.4, 0.0], [0.2, 0.3]]
    d = hull_distance_2d(pts, [0.2, -offset])
    assert d == pytest.approx(max(offset, 0.0), abs=1e-12)


def test_fk_ik_round_trip_property(model, rng):
    from quadmimic.datagen import solve_feet_ik

    for _ in range(30):
        q = rng.uniform(model.joint_limits[:, 0] * 0.7, model.joint_limits[:, 1] * 0.7)
        pose = Pose(np.zeros(3), [1, 0, 0, 0], q)
        feet, _ = forward_kinematics(model, pose)
        solved = solve_feet_ik(model, Pose(np.zeros(3), [1, 0, 0, 0], np.tile([0.0, 0.7, -1.4], 4)), feet)
        refeet, _ = forward_kinematics(model, Pose(np.zeros(3), [1, 0, 0, 0], solved))
        assert np.linalg.norm(refeet - feet, axis=1).max() < 1e-4


def test_model_config_round_trip(model, tmp_path):
    cfg = tmp_path / "model.cfg"
    cfg.write_text(
        "thigh_length = 0.21\ncalf_length = 0.19\nabduction_offset = 0.07\n"
        "hip_fr = 0.18 -0.13 0\nknee_range = -2.6 0.2  # rad\n"
    )
    loaded = QuadrupedModel.from_config(cfg)
    assert loaded.thigh_length == 0.21
    assert loaded.calf_length == 0.19
    np.testing.assert_allclose(loaded.hip_positions[0], [0.18, -0.13, 0.0])
    np.testing.assert_allclose(loaded.joint_limits[2], [-2.6, 0.2])
    assert loaded.content_hash() != model.content_hash()


def test_parse_config_rejects_garbage():
    with pytest.raises(ValueError):
        parse_config_text("no equals sign here")


def test_model_invariants_enforced():
    with pytest.raises(ValueError):
        QuadrupedModel(
            hip_positions=np.zeros((4, 3)),
            abduction_offset=0.08,
            thigh_length=-0.1,
            calf_length=0.2,
            joint_limits=np.tile([[-1.0, 1.0]], (12, 1)),
            joint_velocity_limit=2.0,
            trunk_height_nominal=0.3,
            foot_radius=0.02,
        )
