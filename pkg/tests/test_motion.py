import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quadmimic.kinematics import Pose
from quadmimic.motion import (
    MotionClip,
    TooShort,
    finite_difference,
    inject_noise,
    load_clip,
    load_human_clip,
    quaternion_distance,
    rate_limit,
    save_clip,
    save_human_clip,
    HumanFrame,
)
from quadmimic.rotations import quat_from_euler, quat_normalize

FS = 30.0


def _clip(n, joints=None, quats=None, root=None):
    t = np.arange(n) / FS
    return MotionClip(
        t,
        np.zeros((n, 3)) if root is None else root,
        np.tile([1.0, 0, 0, 0], (n, 1)) if quats is None else quats,
        np.zeros((n, 12)) if joints is None else joints,
        FS,
    )


def test_too_short():
    with pytest.raises(TooShort):
        finite_difference(_clip(2))


def test_constant_clip_zero_rates():
    c = finite_difference(_clip(60))
    assert np.abs(c.joint_vel).max() == 0.0
    assert np.abs(c.joint_acc).max() == 0.0
    assert np.abs(c.root_ang_vel).max() == 0.0


def test_linear_ramp_velocity():
    n = 90
    t = np.arange(n) / FS
    c = finite_difference(_clip(n, joints=np.tile(t[:, None], (1, 12))))
    np.testing.assert_allclose(c.joint_vel[5:-5], 1.0, atol=1e-12)


def test_sine_velocity_matches_analytic():
    n = 300
    t = np.arange(n) / FS
    c = finite_difference(_clip(n, joints=np.tile(np.sin(t)[:, None], (1, 12))))
    interior = slice(4, n - 4)
    assert np.abs(c.joint_vel[interior, 0] - np.cos(t[interior])).max() < 0.01


def test_angular_velocity_about_z():
    n = 120
    t = np.arange(n) / FS
    quats = quat_from_euler(np.zeros(n), np.zeros(n), 0.7 * t)
    c = finite_difference(_clip(n, quats=quats))
    np.testing.assert_allclose(c.root_ang_vel[10], [0, 0, 0.7], atol=1e-9)


def test_integrated_rates_recover_smooth_signal():
    # O(dt^2) discretization error on a smooth synthetic signal
    n = 240
    t = np.arange(n) / FS
    joints = np.tile(np.sin(2.0 * t)[:, None], (1, 12))
    c = finite_difference(_clip(n, joints=joints))
    # acceleration differences span two 0.1 s steps, so skip 2k edge frames
    interior = slice(8, n - 8)
    assert np.abs(c.joint_acc[interior, 0] + 4.0 * np.sin(2.0 * t[interior])).max() < 0.06


def test_quaternion_distance_values():
    qa = np.array([1.0, 0, 0, 0])
    qb = quat_from_euler(0, 0, np.pi / 2)
    assert quaternion_distance(qa, qa) == 0.0
    assert quaternion_distance(qa, qb) == pytest.approx(np.pi / 2, abs=1e-12)
    assert quaternion_distance(qb, -qb) == pytest.approx(0.0, abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=12, max_size=12))
def test_quaternion_distance_triangle_inequality(vals):
    q = [quat_normalize(np.array(vals[i : i + 4]) + [2.0, 0, 0, 0]) for i in (0, 4, 8)]
    dab = quaternion_distance(q[0], q[1])
    dbc = quaternion_distance(q[1], q[2])
    dac = quaternion_distance(q[0], q[2])
    assert dac <= dab + dbc + 1e-9


def test_inject_noise_zero_magnitude_identity(rng):
    c = finite_difference(_clip(90))
    out = inject_noise(c, 0.0, rng)
    np.testing.assert_array_equal(out.joints, c.joints)


def test_inject_noise_std_and_determinism():
    c = finite_difference(_clip(1000))
    out = inject_noise(c, 0.05, np.random.default_rng(3))
    stds = out.joints.std(axis=0)
    assert np.all(stds > 0.02) and np.all(stds < 0.08)
    out2 = inject_noise(c, 0.05, np.random.default_rng(3))
    np.testing.assert_array_equal(out.joints, out2.joints)
    assert out.has_rates


def test_rate_limit_passthrough_and_clip():
    limit = np.deg2rad(120.0)
    prev = Pose(np.zeros(3), [1, 0, 0, 0], np.full(12, np.deg2rad(10)))
    within = Pose(np.zeros(3), [1, 0, 0, 0], np.full(12, np.deg2rad(12)))
    out = rate_limit(prev, within, 1 / 30, limit)
    np.testing.assert_array_equal(out.joints, within.joints)
    big = Pose(np.zeros(3), [1, 0, 0, 0], np.full(12, np.deg2rad(20)))
    out = rate_limit(prev, big, 1 / 30, limit)
    np.testing.assert_allclose(np.rad2deg(out.joints), 14.0, atol=1e-9)


def test_rate_limit_exhaustive_velocity_bound(rng):
    limit = np.deg2rad(120.0)
    dt = 1 / 30
    prev = Pose(np.zeros(3), [1, 0, 0, 0], np.zeros(12))
    worst = 0.0
    for _ in range(10000):
        proposed = Pose(np.zeros(3), [1, 0, 0, 0], rng.normal(0, 0.5, 12))
        out = rate_limit(prev, proposed, dt, limit)
        worst = max(worst, np.abs(out.joints - prev.joints).max() / dt)
        prev = out
    assert worst <= limit + 1e-12


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=12, max_size=12))
def test_rate_limit_idempotent(vals):
    limit = np.deg2rad(120.0)
    prev = Pose(np.zeros(3), [1, 0, 0, 0], np.zeros(12))
    proposed = Pose(np.zeros(3), [1, 0, 0, 0], np.array(vals))
    once = rate_limit(prev, proposed, 1 / 30, limit)
    twice = rate_limit(prev, once, 1 / 30, limit)
    np.testing.assert_array_equal(once.joints, twice.joints)


def test_rate_limit_rejects_bad_dt():
    p = Pose(np.zeros(3), [1, 0, 0, 0], np.zeros(12))
    with pytest.raises(ValueError):
        rate_limit(p, p, 0.0, 1.0)


def test_clip_io_round_trip(tmp_path):
    n = 90
    t = np.arange(n) / FS
    c = finite_difference(_clip(n, joints=np.tile(np.sin(t)[:, None], (1, 12))))
    c.contacts = np.random.default_rng(0).uniform(size=(n, 4))
    path = tmp_path / "clip.jsonl"
    save_clip(c, path, include_rates=True)
    loaded = load_clip(path)
    np.testing.assert_allclose(loaded.joints, c.joints)
    np.testing.assert_allclose(loaded.joint_vel, c.joint_vel)
    np.testing.assert_allclose(loaded.contacts, c.contacts)
    # without stored rates they are recomputed on load
    save_clip(c, path, include_rates=False)
    reloaded = load_clip(path)
    np.testing.assert_allclose(reloaded.joint_vel, c.joint_vel, atol=1e-12)


def test_clip_validation():
    with pytest.raises(ValueError):
        MotionClip(np.array([0.0, 0.0]), np.zeros((2, 3)), np.tile([1.0, 0, 0, 0], (2, 1)), np.zeros((2, 12)), FS)
    with pytest.raises(ValueError):
        MotionClip(np.array([0.0, 0.5]), np.zeros((2, 3)), np.tile([1.0, 0, 0, 0], (2, 1)), np.zeros((2, 12)), FS)


def test_human_clip_io(tmp_path):
    rng = np.random.default_rng(1)
    frames = [HumanFrame(rng.normal(size=32), rng.normal(size=32), rng.normal(size=32)) for _ in range(5)]
    path = tmp_path / "human.jsonl"
    save_human_clip(frames, path)
    loaded = load_human_clip(path)
    assert len(loaded) == 5
    np.testing.assert_allclose(loaded[3].triplet(), frames[3].triplet())
