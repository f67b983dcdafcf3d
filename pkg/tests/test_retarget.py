import numpy as np
import pytest

from quadmimic.datagen import (
    RobotState,
    Task,
    TaskSpec,
    gen_human_clip,
    gen_robot_clip,
    label_contacts,
)
from quadmimic.kinematics import forward_kinematics
from quadmimic.motion import inject_noise
from quadmimic.retarget import (
    EmptyIndex,
    ExpertSet,
    InsufficientData,
    LossWeights,
    RetargetRuntime,
    RobotTriplet,
    SameState,
    TrainConfig,
    compute_map_loss,
    decode_backward,
    decode_output,
    foot_skate_metric,
    load_bundle,
    save_bundle,
    select_expert,
    state_transition,
    train_retarget,
    _map_loss_grads,
)
from quadmimic.rotations import quat_from_euler

VEL_LIMIT = np.deg2rad(120.0)


def _triplet(quat=None, joints=None, rates=None, accel=None, batch=1):
    return RobotTriplet(
        np.tile([1.0, 0, 0, 0] if quat is None else quat, (batch, 1)),
        np.tile(np.zeros(12) if joints is None else joints, (batch, 1)),
        np.tile(np.zeros(15) if rates is None else rates, (batch, 1)),
        np.tile(np.zeros(15) if accel is None else accel, (batch, 1)),
    )


def test_loss_zero_for_identical_triplets(model):
    t = _triplet()
    loss, parts = compute_map_loss(t, t, model)
    assert loss == 0.0
    assert all(v == 0.0 for v in parts.values())


def test_loss_rotated_root_only(model):
    out = _triplet(quat=quat_from_euler(0, 0, np.pi / 2))
    loss, parts = compute_map_loss(out, _triplet(), model)
    assert loss == pytest.approx(0.3 * np.pi / 2, abs=1e-12)
    assert parts["ori"] == pytest.approx(np.pi / 2, abs=1e-12)
    assert parts["jnt"] == parts["dx"] == parts["ddx"] == 0.0


def test_loss_single_joint_error(model):
    joints = np.zeros(12)
    joints[4] = 0.5
    out = _triplet(joints=joints)
    loss, parts = compute_map_loss(out, _triplet(), model)
    assert parts["jnt"] == pytest.approx(0.25, abs=1e-12)
    # zero rates on both sides: no induced end-effector velocity error
    assert parts["dx"] == 0.0 and parts["ddx"] == 0.0
    assert loss == pytest.approx(0.25)


def test_loss_zero_iff_equal_up_to_quat_sign(model):
    t = _triplet(quat=quat_from_euler(0.2, 0.1, -0.3))
    flipped = RobotTriplet(-t.quat, t.joints, t.rates, t.accel)
    loss, _ = compute_map_loss(flipped, t, model)
    assert loss == pytest.approx(0.0, abs=1e-9)
    bumped = RobotTriplet(t.quat, t.joints + 1e-3, t.rates, t.accel)
    loss, _ = compute_map_loss(bumped, t, model)
    assert loss > 0.0


def test_loss_gradients_match_finite_differences_on_exact_heads(model, rng):
    y = rng.uniform(-0.5, 0.5, size=(3, 46))
    tgt = RobotTriplet(
        np.tile(quat_from_euler(0.1, 0.1, 0.05), (3, 1)),
        rng.normal(0, 0.3, (3, 12)),
        rng.normal(0, 0.5, (3, 15)),
        rng.normal(0, 2.0, (3, 15)),
    )
    weights = LossWeights()

    def f(yv):
        return compute_map_loss(decode_output(model, yv), tgt, model, weights)[0]

    out = decode_output(model, y)
    gy = decode_backward(model, y, out, _map_loss_grads(out, tgt, model, weights))
    eps = 1e-6
    # orientation head and acceleration head differentiate exactly; the
    # velocity head carries a deliberately stopped second-order path
    for i in range(3):
        for j in list(range(0, 4)) + list(range(31, 46)):
            yp, ym = y.copy(), y.copy()
            yp[i, j] += eps
            ym[i, j] -= eps
            fd = (f(yp) - f(ym)) / (2 * eps)
            assert abs(fd - gy[i, j]) < 1e-4 * max(1.0, abs(fd))


def test_train_retarget_insufficient_data(dataset, model):
    import copy

    tiny = copy.copy(dataset)
    tiny.samples = dataset.samples[:10]
    with pytest.raises(InsufficientData):
        train_retarget(tiny, RobotState.STAND, TrainConfig(max_steps=10), model)


def test_train_retarget_learns_and_is_deterministic(dataset, model):
    cfg = TrainConfig(max_steps=300, eval_every=100)
    net_a, hist_a = train_retarget(dataset, RobotState.STAND, cfg, model)
    net_b, hist_b = train_retarget(dataset, RobotState.STAND, cfg, model)
    assert hist_a[-1]["holdout_loss"] < hist_a[0]["holdout_loss"] * 1.05
    assert hist_a[0]["train_loss"] > hist_a[-1]["train_loss"]
    for (wa, ba), (wb, bb) in zip(net_a.params, net_b.params):
        np.testing.assert_array_equal(wa, wb)
        np.testing.assert_array_equal(ba, bb)


def test_decoded_outputs_respect_bounds(stand_retarget, dataset, model):
    net, _ = stand_retarget
    rows = dataset.by_state(RobotState.STAND, "holdout")
    x = np.array([s.human.triplet() for s in rows])
    out = net.infer(x)
    lo, hi = model.joint_limits[:, 0], model.joint_limits[:, 1]
    assert np.all(out.joints >= lo) and np.all(out.joints <= hi)
    np.testing.assert_allclose(np.linalg.norm(out.quat, axis=1), 1.0, atol=1e-9)
    assert np.all(out.quat[:, 0] > 0.0)


def test_contact_net_outputs_in_unit_interval(experts, dataset):
    rows = dataset.by_state(RobotState.WALK, "holdout")
    x = np.array([np.concatenate([s.human.features, s.human.dfeatures]) for s in rows])
    pred = experts.contact[RobotState.WALK].infer(x)
    assert np.all(pred > 0.0) and np.all(pred < 1.0)
    labels = np.array([s.contacts for s in rows])
    assert np.all(labels >= 0.0) and np.all(labels <= 1.0)


def test_select_expert_unanimous_and_holdout_agreement(experts, dataset):
    hold = [s for s in dataset.samples if s.split == "holdout"]
    train0 = dataset.samples[0]
    assert select_expert(experts, train0.human.triplet()) is train0.state
    agree = sum(select_expert(experts, s.human.triplet()) is s.state for s in hold)
    assert agree / len(hold) >= 0.95


def test_select_expert_empty_index(experts):
    empty = ExpertSet(experts.retarget, experts.contact, np.empty((0, 96)), np.empty(0, dtype=np.int64))
    with pytest.raises(EmptyIndex):
        select_expert(empty, np.zeros(96))


def test_state_transition_same_state(model):
    with pytest.raises(SameState):
        state_transition(model, RobotState.STAND, RobotState.STAND)


def test_state_transition_durations_and_limits(model):
    clip = state_transition(model, RobotState.STAND, RobotState.SIT)
    assert clip.times[-1] == pytest.approx(2.0, abs=0.05)
    assert 1.0 <= clip.times[-1] <= 3.0
    assert np.abs(np.diff(clip.joints, axis=0)).max() * 30 <= VEL_LIMIT + 1e-9
    via = state_transition(model, RobotState.SIT, RobotState.WALK)
    assert via.times[-1] == pytest.approx(3.0, abs=0.1)


def _stand_stream(experts, model, seed, noise=0.03, duration=5.0, **kwargs):
    clip = gen_robot_clip(TaskSpec(Task.MANIP_AT_STAND, 0.8), duration, np.random.default_rng([70, seed]), model)
    noisy = label_contacts(inject_noise(clip, noise, np.random.default_rng([71, seed])), model)
    human = gen_human_clip(noisy, 1, rng=np.random.default_rng([72, seed]), model=model)
    runtime = RetargetRuntime(experts, model, **kwargs)
    stream, report = runtime.stream(human)
    return clip, stream, report, runtime


def test_runtime_velocity_limit_holds(experts, model):
    _, _, report, _ = _stand_stream(experts, model, seed=0)
    assert report["velocity_violations"] == 0
    assert report["max_joint_velocity"] <= VEL_LIMIT + 1e-9


def test_runtime_pins_stance_feet(experts, model):
    clip, stream, _, _ = _stand_stream(experts, model, seed=1)
    skate_full = foot_skate_metric(stream, model, clip.contacts)
    _, raw, _, _ = _stand_stream(experts, model, seed=1, contact_correction=False)
    skate_raw = foot_skate_metric(raw, model, clip.contacts)
    assert skate_full < skate_raw * 0.2


class _ZeroContact:
    def infer(self, x):
        return np.zeros(4)


def test_runtime_low_contact_probability_skips_pinning(experts, dataset, model):
    # probabilities below the 0.5 threshold make the pinning stage an identity
    sample = dataset.by_state(RobotState.STAND, "holdout")[0]
    stubbed = ExpertSet(
        experts.retarget,
        {state: _ZeroContact() for state in experts.contact},
        experts.index_features,
        experts.index_states,
    )
    with_pin = RetargetRuntime(stubbed, model, temporal_clip=False)
    without = RetargetRuntime(stubbed, model, contact_correction=False, temporal_clip=False)
    fa, ia = with_pin.step(sample.human)
    fb, _ = without.step(sample.human)
    np.testing.assert_array_equal(fa.pose.joints, fb.pose.joints)
    assert not ia["pinned"].any()


def test_runtime_adversarial_jump_is_rate_limited(experts, model):
    runtime = RetargetRuntime(experts, model)
    prev = runtime._prev.pose.joints.copy()
    jump = prev + np.deg2rad(30.0)
    from quadmimic.kinematics import Pose
    from quadmimic.kinematics import PoseRates

    frame = runtime._emit(Pose(runtime._prev.pose.root_position, runtime._prev.pose.root_quat, jump),
                          PoseRates.zero(), PoseRates.zero(), np.zeros(4), {})
    assert np.abs(frame.pose.joints - prev).max() <= np.deg2rad(4.0) + 1e-12


def test_runtime_pinned_foot_stays_within_tolerance(experts, model):
    clip, stream, _, runtime = _stand_stream(experts, model, seed=2, noise=0.01)
    feet = [forward_kinematics(model, stream.frame(i).pose)[0] for i in range(len(stream))]
    feet = np.array(feet)
    # strongly predicted stance feet barely move frame to frame
    probs = stream.contacts
    stance = (probs[1:] > 0.9) & (probs[:-1] > 0.9)
    disp = np.linalg.norm(feet[1:, :, :2] - feet[:-1, :, :2], axis=2)
    assert np.percentile(disp[stance], 90) < 5e-3


def test_hysteresis_never_switches_twice_within_window(experts, model):
    # alternate stand/walk-looking inputs aggressively; the debounce must
    # keep switches at least `hysteresis` frames apart
    stand_clip = gen_robot_clip(TaskSpec(Task.TILT_AT_STAND, 0.6), 3.0, np.random.default_rng(80), model)
    walk_clip = gen_robot_clip(TaskSpec(Task.WALK_FORWARD, 0.9), 3.0, np.random.default_rng(81), model)
    h_stand = gen_human_clip(stand_clip, 1, model=model)
    h_walk = gen_human_clip(walk_clip, 1, model=model)
    runtime = RetargetRuntime(experts, model)
    mixed = []
    for k in range(6):
        src = h_stand if k % 2 == 0 else h_walk
        mixed.extend(src[:7])
    for h in mixed:
        runtime.step(h)
    switches = [f for f, _, _ in runtime.switch_log]
    assert all(b - a >= runtime.hysteresis for a, b in zip(switches, switches[1:]))


def test_walk_runtime_odometry_tracks_source(experts, model):
    clip = gen_robot_clip(TaskSpec(Task.WALK_FORWARD, 0.9), 8.0, np.random.default_rng(121), model)
    human = gen_human_clip(clip, 1, model=model)
    runtime = RetargetRuntime(experts, model, state=RobotState.WALK)
    stream, report = runtime.stream(human)
    assert report["velocity_violations"] == 0
    src = np.linalg.norm(clip.root_pos[-1, :2] - clip.root_pos[0, :2])
    got = np.linalg.norm(stream.root_pos[-1, :2] - stream.root_pos[0, :2])
    assert abs(got - src) < 0.4 * src  # travelled distance within 40%


def test_bundle_round_trip(experts, model, tmp_path):
    save_bundle(experts, tmp_path / "bundle")
    loaded = load_bundle(tmp_path / "bundle", model)
    x = np.random.default_rng(4).normal(size=96)
    a = experts.retarget[RobotState.STAND].infer(x)
    b = loaded.retarget[RobotState.STAND].infer(x)
    np.testing.assert_array_equal(a.joints, b.joints)
    np.testing.assert_array_equal(a.quat, b.quat)
    np.testing.assert_array_equal(experts.index_features, loaded.index_features)
    assert select_expert(experts, x) is select_expert(loaded, x)


def test_bundle_missing_networks(tmp_path, model):
    with pytest.raises(FileNotFoundError):
        load_bundle(tmp_path / "nope", model)
