import numpy as np
import pytest

from quadmimic.datagen import (
    EmptyTasks,
    GaitParams,
    PairedSample,
    RobotState,
    Task,
    TaskSpec,
    build_dataset,
    canonical_pose,
    clip_feet_world,
    contact_label,
    gen_gait_motion,
    gen_human_clip,
    gen_keypose_motion,
    gen_robot_clip,
    load_dataset,
    pair_clip,
    save_dataset,
)
from quadmimic.rotations import quat_to_euler

VEL_LIMIT = np.deg2rad(120.0)


def _max_joint_velocity(clip):
    return np.abs(np.diff(clip.joints, axis=0)).max() * clip.frame_rate


def test_difficulty_zero_constant_clip(model):
    clip = gen_keypose_motion(TaskSpec(Task.TILT_AT_STAND, 0.0), 3.0, np.random.default_rng(1), model)
    assert np.abs(np.diff(clip.joints, axis=0)).max() < 1e-12
    assert np.abs(np.diff(clip.root_pos, axis=0)).max() < 1e-12


def test_tilt_reaches_cap_band_over_seeds(model):
    # ensemble max |roll| approaches but never exceeds the 40 degree cap
    max_roll = 0.0
    for s in range(20):
        clip = gen_keypose_motion(TaskSpec(Task.TILT_AT_STAND, 1.0), 6.0, np.random.default_rng([9, s]), model)
        roll = quat_to_euler(clip.root_quat)[0]
        max_roll = max(max_roll, np.abs(roll).max())
    assert np.deg2rad(30.0) <= max_roll <= np.deg2rad(40.0) + 1e-9


def test_manipulation_pins_stance_feet(model):
    clip = gen_keypose_motion(TaskSpec(Task.MANIP_AT_STAND, 1.0), 5.0, np.random.default_rng(2), model)
    feet = clip_feet_world(clip, model)
    stance_disp = np.abs(np.diff(feet[:, 1:, :], axis=0)).max()
    assert stance_disp < 1e-3
    assert feet[:, 0, 2].max() > 0.02  # the reaching foot actually lifts


def test_keypose_rejects_gait_tasks(model):
    with pytest.raises(ValueError):
        gen_keypose_motion(TaskSpec(Task.WALK_FORWARD, 0.5), 2.0, np.random.default_rng(0), model)


def test_gait_displacement_matches_speed(model):
    clip = gen_gait_motion(GaitParams(forward_speed=0.5, period=0.7, foot_clearance=0.05), 10.0, model)
    displacement = np.linalg.norm(clip.root_pos[-1, :2] - clip.root_pos[0, :2])
    # last frame is at t = 10 - 1/30
    expected = 0.5 * (10.0 - 1.0 / 30.0)
    assert displacement == pytest.approx(expected, abs=0.05)


def test_gait_in_place_root_fixed(model):
    clip = gen_gait_motion(GaitParams(forward_speed=0.0, turn_rate=0.0, foot_clearance=0.05), 4.0, model)
    assert np.abs(clip.root_pos - clip.root_pos[0]).max() < 1e-12


def test_gait_swing_peak_height(model):
    params = GaitParams(forward_speed=0.0, foot_clearance=0.05)
    clip = gen_gait_motion(params, 4.0, model)
    feet = clip_feet_world(clip, model)
    assert feet[:, :, 2].max() == pytest.approx(params.foot_clearance, abs=0.002)


def test_gait_trot_contact_property(model, rng):
    for task in (Task.WALK_FORWARD, Task.TURN_LEFT, Task.TURN_RIGHT):
        clip = gen_robot_clip(TaskSpec(task, 1.0), 5.0, np.random.default_rng([4, hash(task) % 100]), model)
        assert (clip.contacts > 0.9).sum(axis=1).min() >= 2


def test_generated_clips_respect_limits(model):
    lo, hi = model.joint_limits[:, 0], model.joint_limits[:, 1]
    for i, task in enumerate(Task):
        clip = gen_robot_clip(TaskSpec(task, 1.0), 5.0, np.random.default_rng([5, i]), model)
        assert _max_joint_velocity(clip) <= VEL_LIMIT + 1e-9
        assert np.all(clip.joints >= lo - 1e-9) and np.all(clip.joints <= hi + 1e-9)


def test_contact_label_anchor_values():
    assert contact_label(0.0, 0.0) == 1.0
    assert contact_label(0.03, 0.8) == 0.0
    assert contact_label(0.01, 0.30) == pytest.approx(0.25, abs=1e-12)


def test_contact_label_monotone():
    hs = np.linspace(0, 0.03, 13)
    vs = np.linspace(0, 0.8, 13)
    for v in vs:
        vals = [contact_label(h, v) for h in hs]
        assert all(b <= a + 1e-12 for a, b in zip(vals, vals[1:]))
    for h in hs:
        vals = [contact_label(h, v) for v in vs]
        assert all(b <= a + 1e-12 for a, b in zip(vals, vals[1:]))


def test_human_clip_deterministic_per_style(model):
    clip = gen_robot_clip(TaskSpec(Task.WALK_FORWARD, 0.8), 4.0, np.random.default_rng(6), model)
    a = gen_human_clip(clip, 42, model=model)
    b = gen_human_clip(clip, 42, model=model)
    assert all(np.array_equal(x.features, y.features) for x, y in zip(a, b))
    c = gen_human_clip(clip, 43, model=model)
    assert not np.array_equal(a[0].features, c[0].features)


def test_constant_robot_clip_constant_features(model):
    clip = gen_keypose_motion(TaskSpec(Task.TILT_AT_STAND, 0.0), 3.0, np.random.default_rng(7), model)
    human = gen_human_clip(clip, 1, model=model)
    feats = np.array([h.features for h in human])
    assert feats.std(axis=0).max() < 0.03  # constant up to the injected noise


def test_human_frame_invariants(model):
    clip = gen_robot_clip(TaskSpec(Task.TILT_AT_STAND, 0.9), 4.0, np.random.default_rng(8), model)
    human = gen_human_clip(clip, 1, model=model)
    feats = np.array([h.features for h in human])
    np.testing.assert_allclose(np.linalg.norm(feats[:, 0:4], axis=1), 1.0, atol=1e-9)
    np.testing.assert_allclose(np.linalg.norm(feats[:, 4:8], axis=1), 1.0, atol=1e-9)
    assert np.all(np.abs(feats[:, 8:]) <= 1.5)


def test_human_map_linearly_decodable(model):
    # regression oracle: features must carry enough signal to recover joints
    clip = gen_robot_clip(TaskSpec(Task.WALK_FORWARD, 0.9), 8.0, np.random.default_rng(9), model)
    human = gen_human_clip(clip, 1, model=model)
    feats = np.array([h.features for h in human])
    x = np.hstack([feats, np.ones((len(feats), 1))])
    beta, *_ = np.linalg.lstsq(x, clip.joints, rcond=None)
    pred = x @ beta
    ss_res = ((clip.joints - pred) ** 2).sum()
    ss_tot = ((clip.joints - clip.joints.mean(axis=0)) ** 2).sum()
    assert 1.0 - ss_res / ss_tot > 0.9


def test_pair_clip_alignment(model):
    clip = gen_robot_clip(TaskSpec(Task.TILT_AT_STAND, 0.5), 3.0, np.random.default_rng(10), model)
    human = gen_human_clip(clip, 1, model=model)
    pairs = pair_clip(clip, human)
    assert isinstance(pairs[0], PairedSample)
    assert len(pairs) == len(clip)
    assert pairs[10].robot.time == pytest.approx(clip.times[10])


def test_build_dataset_counts_and_split(dataset):
    counts = {}
    for s in dataset.samples:
        counts[s.task] = counts.get(s.task, 0) + 1
    assert all(76 <= c <= 522 for c in counts.values())
    train_clips = {s.clip_id for s in dataset.samples if s.split == "train"}
    hold_clips = {s.clip_id for s in dataset.samples if s.split == "holdout"}
    assert train_clips.isdisjoint(hold_clips)
    assert hold_clips


def test_build_dataset_single_clip_shares_id(model):
    ds = build_dataset([TaskSpec(Task.TILT_AT_STAND, 0.5)], 1, seed=11, model=model)
    assert {s.clip_id for s in ds.samples} == {0}


def test_build_dataset_empty_tasks():
    with pytest.raises(EmptyTasks):
        build_dataset([], 2, seed=0)


def test_dataset_io_round_trip(tmp_path, model):
    ds = build_dataset([TaskSpec(Task.TILT_AT_STAND, 0.5)], 2, seed=12, model=model, pairs_per_task=90)
    path = tmp_path / "ds.jsonl"
    save_dataset(ds, path)
    loaded = load_dataset(path)
    assert len(loaded.samples) == len(ds.samples)
    np.testing.assert_allclose(loaded.samples[7].human.triplet(), ds.samples[7].human.triplet())
    np.testing.assert_allclose(loaded.samples[7].rates, ds.samples[7].rates)
    assert loaded.samples[7].state is RobotState.STAND
    assert loaded.header["model_hash"] == model.content_hash()


def test_walk_targets_are_heading_free(model):
    ds = build_dataset([TaskSpec(Task.TURN_LEFT, 1.0)], 1, seed=13, model=model, pairs_per_task=150)
    for s in ds.samples[-5:]:
        tq = s.target_quat()
        roll, pitch, yaw = quat_to_euler(tq)
        assert abs(yaw) < 1e-6


def test_canonical_poses_feet_on_ground(model):
    from quadmimic.kinematics import forward_kinematics

    for state in RobotState:
        pose = canonical_pose(model, state)
        feet, _ = forward_kinematics(model, pose)
        np.testing.assert_allclose(feet[:, 2], 0.0, atol=1e-4)
