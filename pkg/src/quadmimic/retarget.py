"""Supervised motion retargeting with consistency post-processing.

A per-state mapper network turns the human feature triplet into a robot
triplet (orientation, joints, rates, accelerations); an auxiliary contact
network predicts smooth per-foot contact probabilities. At runtime a kNN
selector picks the active expert, predicted contacts pin stance feet via
IK, and a joint-velocity clip keeps the stream temporally consistent.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from . import mlp
from .datagen import (
    Dataset,
    RobotState,
    STATE_ORDER,
    canonical_feet,
    canonical_pose,
    solve_feet_ik,
)
from .kinematics import (
    Pose,
    PoseRates,
    QuadrupedModel,
    Unreachable,
    fk_body,
    foot_rates_body,
    forward_kinematics,
    legs_jacobian,
    solve_leg_ik,
)
from .mlp import Act, AdamState, MlpSpec
from .motion import MotionClip, MotionFrame, finite_difference, quaternion_distance, rate_limit
from .rotations import (
    quat_from_axis_angle,
    quat_mul,
    quat_normalize,
    quat_rotate,
    quat_slerp,
)

HUMAN_INPUT_DIM = 96
CONTACT_INPUT_DIM = 64
OUTPUT_DIM = 46  # quat 4 + joints 12 + rates 15 + accelerations 15

RETARGET_HIDDEN = (256, 256, 256)
CONTACT_HIDDEN = (128, 128)

LOSS_W_ORI = 0.3
LOSS_W_JNT = 1.0
LOSS_W_DX = 0.001
LOSS_W_DDX = 0.001

CONTACT_PIN_THRESHOLD = 0.5
HYSTERESIS_FRAMES = 10
KNN_K = 5

TRANSITION_SECONDS = {
    frozenset((RobotState.STAND, RobotState.SIT)): 2.0,
    frozenset((RobotState.STAND, RobotState.WALK)): 1.0,
}


class InsufficientData(Exception):
    pass


class EmptyIndex(Exception):
    pass


class SameState(Exception):
    pass


@dataclass
class LossWeights:
    w_ori: float = LOSS_W_ORI
    w_jnt: float = LOSS_W_JNT
    w_dx: float = LOSS_W_DX
    w_ddx: float = LOSS_W_DDX


@dataclass
class RobotTriplet:
    """Network output / target bundle; arrays broadcast over a batch dim."""

    quat: np.ndarray  # (..., 4) heading-free root orientation
    joints: np.ndarray  # (..., 12)
    rates: np.ndarray  # (..., 15) root angular velocity + joint velocities
    accel: np.ndarray  # (..., 15)


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 64
    max_steps: int = 5000
    eval_every: int = 100
    patience: int = 10  # evaluations without holdout improvement
    input_jitter: float = 0.08  # std on whitened inputs, generalization aid
    seed: int = 0


def retarget_spec() -> MlpSpec:
    return MlpSpec(
        (HUMAN_INPUT_DIM, *RETARGET_HIDDEN, OUTPUT_DIM),
        (Act.LEAKY_RELU, Act.LEAKY_RELU, Act.LEAKY_RELU, Act.TANH),
    )


def contact_spec() -> MlpSpec:
    return MlpSpec((CONTACT_INPUT_DIM, *CONTACT_HIDDEN, 4), (Act.RELU, Act.RELU, Act.SIGMOID))


@dataclass
class Standardizer:
    """Per-dimension input whitening frozen at training time."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, x: np.ndarray) -> "Standardizer":
        return cls(x.mean(axis=0), np.maximum(x.std(axis=0), 1e-6))

    @classmethod
    def identity(cls, dim: int) -> "Standardizer":
        return cls(np.zeros(dim), np.ones(dim))

    def apply(self, x):
        return (np.asarray(x, dtype=float) - self.mean) / self.std


@dataclass
class RetargetModel:
    params: list
    spec: MlpSpec
    model: QuadrupedModel
    state: RobotState
    norm: Standardizer | None = None

    def decode(self, y: np.ndarray) -> RobotTriplet:
        return decode_output(self.model, y)

    def infer(self, x) -> RobotTriplet:
        if self.norm is not None:
            x = self.norm.apply(x)
        y, _ = mlp.forward(self.params, self.spec, x)
        return self.decode(y)


@dataclass
class ContactModel:
    params: list
    spec: MlpSpec
    state: RobotState
    norm: Standardizer | None = None

    def infer(self, x) -> np.ndarray:
        if self.norm is not None:
            x = self.norm.apply(x)
        y, _ = mlp.forward(self.params, self.spec, x)
        return y


def _head_scales(model: QuadrupedModel):
    lims = model.joint_limits
    mid = 0.5 * (lims[:, 0] + lims[:, 1])
    half = 0.5 * (lims[:, 1] - lims[:, 0])
    rate_scale = 2.0 * model.joint_velocity_limit
    accel_scale = 6.0 * model.joint_velocity_limit
    return mid, half, rate_scale, accel_scale


def decode_output(model: QuadrupedModel, y: np.ndarray) -> RobotTriplet:
    """Map tanh outputs to a valid robot triplet.

    The orientation head is anchored at identity before normalization, which
    keeps it on the w > 0 hemisphere and gradient-stable at initialization.
    Joint angles are shifted and scaled to the joint-limit box.
    """
    y = np.asarray(y, dtype=float)
    mid, half, rate_scale, accel_scale = _head_scales(model)
    anchor = np.zeros(y.shape[:-1] + (4,))
    anchor[..., 0] = 1.0
    quat = quat_normalize(anchor + y[..., 0:4])
    joints = mid + half * y[..., 4:16]
    rates = rate_scale * y[..., 16:31]
    accel = accel_scale * y[..., 31:46]
    return RobotTriplet(quat, joints, rates, accel)


def decode_backward(model: QuadrupedModel, y: np.ndarray, out: RobotTriplet, grads: RobotTriplet) -> np.ndarray:
    """Pull triplet gradients back to the tanh output layer."""
    y = np.asarray(y, dtype=float)
    mid, half, rate_scale, accel_scale = _head_scales(model)
    gy = np.empty_like(y)
    u = y[..., 0:4].copy()
    u[..., 0] += 1.0
    norm = np.linalg.norm(u, axis=-1, keepdims=True)
    q = out.quat
    gq = grads.quat
    gy[..., 0:4] = (gq - q * np.sum(q * gq, axis=-1, keepdims=True)) / norm
    gy[..., 4:16] = half * grads.joints
    gy[..., 16:31] = rate_scale * grads.rates
    gy[..., 31:46] = accel_scale * grads.accel
    return gy


def _batch_quat_distance(a, b):
    dot = np.sum(a * b, axis=-1)
    return np.arccos(np.clip(2.0 * dot * dot - 1.0, -1.0, 1.0))


def compute_map_loss(output: RobotTriplet, target: RobotTriplet, model: QuadrupedModel, weights: LossWeights | None = None):
    """Composite retargeting loss and its components.

    Orientation uses the quaternion angle (not squared); joints and the two
    end-effector terms are squared errors. End-effector velocities and
    accelerations are evaluated in the body frame from each triplet's own
    pose and rates.
    """
    w = weights or LossWeights()
    l_ori = float(np.mean(_batch_quat_distance(output.quat, target.quat)))
    l_jnt = float(np.mean(np.sum((output.joints - target.joints) ** 2, axis=-1)))
    v_out, a_out = foot_rates_body(
        model, output.joints, output.rates[..., :3], output.rates[..., 3:], output.accel[..., :3], output.accel[..., 3:]
    )
    v_tgt, a_tgt = foot_rates_body(
        model, target.joints, target.rates[..., :3], target.rates[..., 3:], target.accel[..., :3], target.accel[..., 3:]
    )
    l_dx = float(np.mean(np.sum((v_out - v_tgt) ** 2, axis=(-2, -1))))
    l_ddx = float(np.mean(np.sum((a_out - a_tgt) ** 2, axis=(-2, -1))))
    l_map = w.w_ori * l_ori + w.w_jnt * l_jnt + w.w_dx * l_dx + w.w_ddx * l_ddx
    return l_map, {"ori": l_ori, "jnt": l_jnt, "dx": l_dx, "ddx": l_ddx}


def _map_loss_grads(output: RobotTriplet, target: RobotTriplet, model: QuadrupedModel, weights: LossWeights):
    """Gradients of the mean composite loss w.r.t. the output triplet.

    The end-effector terms differentiate through the rate/acceleration
    arguments with the pose geometry held fixed; the joint head is already
    supervised directly, so the omitted second-order path is negligible at
    the 1e-3 weights used here.
    """
    b = output.joints.shape[0]
    g = RobotTriplet(
        np.zeros_like(output.quat),
        np.zeros_like(output.joints),
        np.zeros_like(output.rates),
        np.zeros_like(output.accel),
    )
    # orientation
    s = np.sum(output.quat * target.quat, axis=-1, keepdims=True)
    u = 2.0 * s * s - 1.0
    denom = np.sqrt(np.clip(1.0 - u * u, 1e-12, None))
    g.quat += weights.w_ori * (-4.0 * s / denom) * target.quat / b
    # joints
    g.joints += weights.w_jnt * 2.0 * (output.joints - target.joints) / b

    p = fk_body(model, output.joints)  # (b, 4, 3)
    jac = legs_jacobian(model, output.joints)  # (b, 4, 3, 3)
    v_out, a_out = foot_rates_body(
        model, output.joints, output.rates[..., :3], output.rates[..., 3:], output.accel[..., :3], output.accel[..., 3:]
    )
    v_tgt, a_tgt = foot_rates_body(
        model, target.joints, target.rates[..., :3], target.rates[..., 3:], target.accel[..., :3], target.accel[..., 3:]
    )
    gv = weights.w_dx * 2.0 * (v_out - v_tgt) / b  # (b, 4, 3)
    ga = weights.w_ddx * 2.0 * (a_out - a_tgt) / b
    g.rates[..., :3] += np.cross(p, gv).sum(axis=-2)
    g.rates[..., 3:] += np.einsum("blkj,blk->blj", jac, gv).reshape(b, 12)
    g.accel[..., :3] += np.cross(p, ga).sum(axis=-2)
    g.accel[..., 3:] += np.einsum("blkj,blk->blj", jac, ga).reshape(b, 12)
    return g


def _dataset_arrays(samples):
    x = np.array([s.human.triplet() for s in samples])
    tgt = RobotTriplet(
        np.array([s.target_quat() for s in samples]),
        np.array([s.joints for s in samples]),
        np.array([s.rates for s in samples]),
        np.array([s.accel for s in samples]),
    )
    return x, tgt


def _triplet_rows(t: RobotTriplet, idx) -> RobotTriplet:
    return RobotTriplet(t.quat[idx], t.joints[idx], t.rates[idx], t.accel[idx])


def train_retarget(
    dataset: Dataset,
    state: RobotState,
    config: TrainConfig | None = None,
    model: QuadrupedModel | None = None,
):
    """Train the per-state mapper with Adam and holdout early stopping.

    Returns (RetargetModel, history rows). History rows carry the training
    loss and holdout loss components per evaluation.
    """
    cfg = config or TrainConfig()
    model = model or QuadrupedModel.default()
    train = dataset.by_state(state, "train")
    holdout = dataset.by_state(state, "holdout")
    if len(train) < 76:
        raise InsufficientData(f"{len(train)} training samples for {state.value}; need >= 76")
    weights = LossWeights()
    x_train, t_train = _dataset_arrays(train)
    norm = Standardizer.fit(x_train)
    x_train = norm.apply(x_train)
    if holdout:
        x_hold, t_hold = _dataset_arrays(holdout)
        x_hold = norm.apply(x_hold)
    else:
        x_hold, t_hold = None, None

    rng = np.random.default_rng([cfg.seed, 101])
    spec = retarget_spec()
    params = mlp.init(spec, rng)
    adam = AdamState(learning_rate=cfg.learning_rate)
    best = (np.inf, mlp.copy_params(params))
    history = []
    stale = 0
    n = len(x_train)
    order = rng.permutation(n)
    cursor = 0
    for step in range(1, cfg.max_steps + 1):
        if cursor + cfg.batch_size > n:
            order = rng.permutation(n)
            cursor = 0
        idx = order[cursor : cursor + cfg.batch_size]
        cursor += cfg.batch_size
        xb = x_train[idx]
        if cfg.input_jitter > 0:
            xb = xb + rng.normal(0.0, cfg.input_jitter, size=xb.shape)
        y, cache = mlp.forward(params, spec, xb)
        out = decode_output(model, y)
        tgt = _triplet_rows(t_train, idx)
        loss, _ = compute_map_loss(out, tgt, model, weights)
        gtrip = _map_loss_grads(out, tgt, model, weights)
        gy = decode_backward(model, y, out, gtrip)
        grads, _ = mlp.backward(params, spec, cache, gy)
        params = mlp.adam_step(params, grads, adam)

        if step % cfg.eval_every == 0 or step == cfg.max_steps:
            if x_hold is not None:
                hy, _ = mlp.forward(params, spec, x_hold)
                h_loss, h_parts = compute_map_loss(decode_output(model, hy), t_hold, model, weights)
            else:
                h_loss, h_parts = loss, {}
            history.append({"step": step, "train_loss": loss, "holdout_loss": h_loss, **{f"holdout_{k}": v for k, v in h_parts.items()}})
            if h_loss < best[0] - 1e-9:
                best = (h_loss, mlp.copy_params(params))
                stale = 0
            else:
                stale += 1
                if stale >= cfg.patience:
                    break
    return RetargetModel(best[1], spec, model, state, norm), history


def train_contact(dataset: Dataset, state: RobotState, config: TrainConfig | None = None):
    """Train the contact-probability network on (features, dfeatures)."""
    cfg = config or TrainConfig()
    train = dataset.by_state(state, "train")
    holdout = dataset.by_state(state, "holdout")
    if len(train) < 76:
        raise InsufficientData(f"{len(train)} training samples for {state.value}; need >= 76")
    x_train = np.array([np.concatenate([s.human.features, s.human.dfeatures]) for s in train])
    c_train = np.array([s.contacts for s in train])
    norm = Standardizer.fit(x_train)
    x_train = norm.apply(x_train)
    if holdout:
        x_hold = norm.apply(np.array([np.concatenate([s.human.features, s.human.dfeatures]) for s in holdout]))
        c_hold = np.array([s.contacts for s in holdout])
    else:
        x_hold, c_hold = None, None

    rng = np.random.default_rng([cfg.seed, 202])
    spec = contact_spec()
    params = mlp.init(spec, rng)
    adam = AdamState(learning_rate=cfg.learning_rate)
    best = (np.inf, mlp.copy_params(params))
    history = []
    stale = 0
    n = len(x_train)
    order = rng.permutation(n)
    cursor = 0
    for step in range(1, cfg.max_steps + 1):
        if cursor + cfg.batch_size > n:
            order = rng.permutation(n)
            cursor = 0
        idx = order[cursor : cursor + cfg.batch_size]
        cursor += cfg.batch_size
        xb = x_train[idx]
        if cfg.input_jitter > 0:
            xb = xb + rng.normal(0.0, cfg.input_jitter, size=xb.shape)
        y, cache = mlp.forward(params, spec, xb)
        diff = y - c_train[idx]
        loss = float(np.mean(np.sum(diff * diff, axis=-1)))
        grads, _ = mlp.backward(params, spec, cache, 2.0 * diff / len(idx))
        params = mlp.adam_step(params, grads, adam)
        if step % cfg.eval_every == 0 or step == cfg.max_steps:
            if x_hold is not None:
                hy, _ = mlp.forward(params, spec, x_hold)
                h_loss = float(np.mean(np.sum((hy - c_hold) ** 2, axis=-1)))
                acc = float(np.mean((hy > 0.5) == (c_hold > 0.5)))
            else:
                h_loss, acc = loss, float("nan")
            history.append({"step": step, "train_loss": loss, "holdout_loss": h_loss, "holdout_acc": acc})
            if h_loss < best[0] - 1e-9:
                best = (h_loss, mlp.copy_params(params))
                stale = 0
            else:
                stale += 1
                if stale >= cfg.patience:
                    break
    return ContactModel(best[1], spec, state, norm), history


def contact_accuracy(net: ContactModel, dataset: Dataset, state: RobotState, split: str = "holdout") -> float:
    rows = dataset.by_state(state, split)
    if not rows:
        return float("nan")
    x = np.array([np.concatenate([s.human.features, s.human.dfeatures]) for s in rows])
    c = np.array([s.contacts for s in rows])
    pred = net.infer(x)
    return float(np.mean((pred > 0.5) == (c > 0.5)))


# ---------------------------------------------------------------------------
# expert set and selection


# kNN distances are whitened per dimension, then the static / first- /
# second-derivative blocks are reweighted so derivative noise cannot
# dominate the vote
_KNN_BLOCK_WEIGHTS = np.concatenate([np.full(32, 2.0), np.ones(32), np.full(32, 0.5)])


@dataclass
class ExpertSet:
    retarget: dict
    contact: dict
    index_features: np.ndarray  # (N, 96)
    index_states: np.ndarray  # (N,) indices into STATE_ORDER
    k: int = KNN_K

    def __post_init__(self):
        for state in STATE_ORDER:
            if state not in self.retarget or state not in self.contact:
                raise ValueError(f"expert set missing networks for {state.value}")
            if len(self.index_features) and not np.any(self.index_states == STATE_ORDER.index(state)):
                raise ValueError(f"expert set index has no rows for {state.value}")
        if len(self.index_features):
            self._norm = Standardizer.fit(self.index_features)
            self._index_whitened = self._norm.apply(self.index_features) * _KNN_BLOCK_WEIGHTS
        else:
            self._norm = None
            self._index_whitened = self.index_features


def build_index(dataset: Dataset):
    feats, states = [], []
    for s in dataset.samples:
        if s.split != "train":
            continue
        feats.append(s.human.triplet())
        states.append(STATE_ORDER.index(s.state))
    return np.array(feats), np.array(states, dtype=np.int64)


def select_expert(experts: ExpertSet, human_triplet, current: RobotState | None = None) -> RobotState:
    """Majority state among the k nearest training features.

    Ties go to the current state when it participates, then follow the
    stand < sit < walk order.
    """
    if experts.index_features.size == 0:
        raise EmptyIndex("expert index is empty")
    q = experts._norm.apply(np.asarray(human_triplet, dtype=float)) * _KNN_BLOCK_WEIGHTS
    d2 = np.sum((experts._index_whitened - q) ** 2, axis=1)
    k = min(experts.k, len(d2))
    nearest = np.argpartition(d2, k - 1)[:k]
    votes = np.bincount(experts.index_states[nearest], minlength=len(STATE_ORDER))
    top = votes.max()
    tied = [STATE_ORDER[i] for i in range(len(STATE_ORDER)) if votes[i] == top]
    if current is not None and current in tied:
        return current
    return tied[0]


# ---------------------------------------------------------------------------
# transitions and the runtime state machine


def state_transition(model: QuadrupedModel, from_state: RobotState, to_state: RobotState) -> MotionClip:
    """Keyframe clip between canonical state postures (via stand if needed)."""
    if from_state is to_state:
        raise SameState(f"already in {from_state.value}")
    pair = frozenset((from_state, to_state))
    if pair in TRANSITION_SECONDS:
        legs = [(from_state, to_state, TRANSITION_SECONDS[pair])]
    else:  # sit <-> walk passes through stand
        legs = [
            (from_state, RobotState.STAND, TRANSITION_SECONDS[frozenset((from_state, RobotState.STAND))]),
            (RobotState.STAND, to_state, TRANSITION_SECONDS[frozenset((RobotState.STAND, to_state))]),
        ]
    feet = canonical_feet(model)
    frame_rate = 30.0
    times, root_pos, root_quat, joints = [], [], [], []
    t0 = 0.0
    prev_joints = canonical_pose(model, from_state).joints
    for a_state, b_state, seconds in legs:
        a, b = canonical_pose(model, a_state), canonical_pose(model, b_state)
        n = int(round(seconds * frame_rate))
        for i in range(n):
            u = i / (n - 1) if n > 1 else 1.0
            w = u * u * (3 - 2 * u)
            pos = (1 - w) * a.root_position + w * b.root_position
            quat = quat_slerp(a.root_quat, b.root_quat, w)
            pose = Pose(pos, quat, prev_joints)
            prev_joints = solve_feet_ik(model, pose, feet, seed_joints=prev_joints)
            times.append(t0 + i / frame_rate)
            root_pos.append(pos)
            root_quat.append(quat)
            joints.append(prev_joints.copy())
        t0 = times[-1] + 1.0 / frame_rate
    clip = MotionClip(
        np.array(times),
        np.array(root_pos),
        np.array(root_quat),
        np.array(joints),
        frame_rate,
        meta={"transition": f"{from_state.value}->{to_state.value}"},
    )
    return finite_difference(clip)


def foot_skate_metric(clip: MotionClip, model: QuadrupedModel, labels: np.ndarray, threshold: float = 0.9) -> float:
    """Mean per-frame horizontal drift of feet labelled in firm contact."""
    feet_b = fk_body(model, clip.joints)
    feet = clip.root_pos[:, None, :] + quat_rotate(clip.root_quat[:, None, :], feet_b)
    labels = np.asarray(labels, dtype=float)
    stance = (labels[1:] > threshold) & (labels[:-1] > threshold)
    if not np.any(stance):
        return 0.0
    disp = np.linalg.norm(feet[1:, :, :2] - feet[:-1, :, :2], axis=2)
    return float(disp[stance].mean())


@dataclass
class RetargetRuntime:
    """Streaming retargeting loop with expert switching and corrections."""

    experts: ExpertSet
    model: QuadrupedModel
    dt: float = 1.0 / 30.0
    hysteresis: int = HYSTERESIS_FRAMES
    contact_correction: bool = True
    temporal_clip: bool = True
    clip_before_pin: bool = False
    state: RobotState = RobotState.STAND
    heading: float = 0.0

    def __post_init__(self):
        pose = canonical_pose(self.model, self.state)
        self._prev = MotionFrame(0.0, pose, PoseRates.zero(), PoseRates.zero(), np.ones(4))
        self._prev_feet, _ = forward_kinematics(self.model, pose)
        self._candidate: RobotState | None = None
        self._candidate_run = 0
        self._prev_raw: tuple | None = None
        self._transition: list | None = None
        self._transition_idx = 0
        self._pending_state: RobotState | None = None
        self.switch_log: list = []
        self._frame_no = 0

    def _limit_root(self, candidate: Pose) -> Pose:
        """Geodesic rate limit on the root orientation reference.

        Joint clipping alone cannot keep pinned feet still when the root
        reference jitters, so temporal consistency bounds the root turn
        rate with the same velocity limit before feet are pinned.
        """
        prev_q = self._prev.pose.root_quat
        angle = quaternion_distance(prev_q, candidate.root_quat)
        max_step = self.model.joint_velocity_limit * self.dt
        if angle <= max_step:
            return candidate
        q = quat_slerp(prev_q, candidate.root_quat, max_step / angle)
        return Pose(candidate.root_position, q, candidate.joints)

    def _emit(self, candidate: Pose, rates, accel, probs, info) -> MotionFrame:
        if self.temporal_clip:
            pose = rate_limit(self._prev.pose, candidate, self.dt, self.model.joint_velocity_limit)
        else:
            pose = candidate
        frame = MotionFrame(self._prev.time + self.dt, pose, rates, accel, probs)
        self._prev = frame
        self._prev_feet, _ = forward_kinematics(self.model, pose)
        self._frame_no += 1
        return frame

    def _pin_feet(self, candidate: Pose, probs, info) -> Pose:
        joints = candidate.joints.copy()
        pinned = np.zeros(4, dtype=bool)
        failed = np.zeros(4, dtype=bool)
        for leg in range(4):
            if probs[leg] <= CONTACT_PIN_THRESHOLD:
                continue
            try:
                joints[3 * leg : 3 * leg + 3] = solve_leg_ik(
                    self.model,
                    Pose(candidate.root_position, candidate.root_quat, joints),
                    leg,
                    self._prev_feet[leg],
                    seed_joints=joints[3 * leg : 3 * leg + 3],
                )
                pinned[leg] = True
            except Unreachable:
                failed[leg] = True
        info["pinned"] = pinned
        info["ik_failed"] = failed
        return Pose(candidate.root_position, candidate.root_quat, joints)

    def step(self, human) -> tuple:
        """Advance one frame; returns (MotionFrame, info dict)."""
        info = {"state": self.state, "transition": False, "switched": False}
        if self._transition is not None:
            clip = self._transition
            pose = Pose(
                clip.root_pos[self._transition_idx],
                clip.root_quat[self._transition_idx],
                clip.joints[self._transition_idx],
            )
            self._transition_idx += 1
            if self._transition_idx >= len(clip):
                self.state = self._pending_state
                self._transition = None
                self._pending_state = None
            info["transition"] = True
            return self._emit(pose, PoseRates.zero(), PoseRates.zero(), np.ones(4), info), info

        triplet = human.triplet()
        detected = select_expert(self.experts, triplet, current=self.state)
        if detected is self.state:
            self._candidate, self._candidate_run = None, 0
        else:
            if detected is self._candidate:
                self._candidate_run += 1
            else:
                self._candidate, self._candidate_run = detected, 1
            if self._candidate_run >= self.hysteresis:
                self._candidate, self._candidate_run = None, 0
                self._prev_raw = None
                self.switch_log.append((self._frame_no, self.state, detected))
                self._pending_state = detected
                self._transition = state_transition(self.model, self.state, detected)
                self._transition_idx = 0
                info["switched"] = True
                return self.step(human)

        net = self.experts.retarget[self.state]
        out = net.infer(triplet)
        probs = self.experts.contact[self.state].infer(np.concatenate([human.features, human.dfeatures]))

        root_pos = self._prev.pose.root_position.copy()
        if self.state is RobotState.WALK:
            # walking odometry: firm-stance feet sweep rigidly backward in
            # the body frame, so a 2D fit of their apparent motion between
            # consecutive network poses recovers heading rate and travel
            # (the rate head is too weakly supervised to integrate)
            feet_xy = fk_body(self.model, out.joints)[:, :2]
            if self._prev_raw is not None:
                prev_joints, prev_probs, prev_feet = self._prev_raw
                firm = (probs > 0.85) & (prev_probs > 0.85)
                if firm.sum() >= 2:
                    a, b = prev_feet[firm], feet_xy[firm]
                    ca, cb = a.mean(axis=0), b.mean(axis=0)
                    da, db = a - ca, b - cb
                    cross = float(np.sum(da[:, 0] * db[:, 1] - da[:, 1] * db[:, 0]))
                    dot = float(np.sum(da * db))
                    self.heading += -np.arctan2(cross, dot)
                    v_body = -(cb - ca) / self.dt
                    speed = np.linalg.norm(v_body)
                    if speed > 0.5:
                        v_body *= 0.5 / speed
                    v3 = np.array([v_body[0], v_body[1], 0.0])
                    root_pos[:2] += quat_rotate(self._prev.pose.root_quat, v3)[:2] * self.dt
            self._prev_raw = (out.joints.copy(), probs.copy(), feet_xy)
        else:
            self._prev_raw = None
        heading_quat = quat_from_axis_angle(np.array([0.0, 0.0, 1.0]), self.heading)
        candidate = Pose(root_pos, quat_mul(heading_quat, out.quat), out.joints)
        if self.temporal_clip:
            candidate = self._limit_root(candidate)

        rates = PoseRates(out.rates[:3], out.rates[3:])
        accel = PoseRates(out.accel[:3], out.accel[3:])
        if self.contact_correction and not self.clip_before_pin:
            candidate = self._pin_feet(candidate, probs, info)
            return self._emit(candidate, rates, accel, probs, info), info
        if self.contact_correction and self.clip_before_pin:
            clipped = rate_limit(self._prev.pose, candidate, self.dt, self.model.joint_velocity_limit)
            pinned = self._pin_feet(clipped, probs, info)
            return self._emit(pinned, rates, accel, probs, info), info
        return self._emit(candidate, rates, accel, probs, info), info

    def stream(self, human_frames) -> tuple:
        """Retarget a whole human clip; returns (MotionClip, report)."""
        frames, infos = [], []
        for h in human_frames:
            frame, info = self.step(h)
            frames.append(frame)
            infos.append(info)
        times = np.array([f.time for f in frames])
        clip = MotionClip(
            times - times[0],
            np.array([f.pose.root_position for f in frames]),
            np.array([f.pose.root_quat for f in frames]),
            np.array([f.pose.joints for f in frames]),
            round(1.0 / self.dt),
            contacts=np.array([f.contact_labels for f in frames]),
        )
        vel = np.abs(np.diff(clip.joints, axis=0)) / self.dt
        report = {
            "frames": len(frames),
            "max_joint_velocity": float(vel.max()) if len(frames) > 1 else 0.0,
            "velocity_violations": int(np.sum(vel > self.model.joint_velocity_limit + 1e-9)),
            "ik_failures": int(sum(np.any(i.get("ik_failed", False)) for i in infos)),
            "transitions": len(self.switch_log),
        }
        return clip, report


# ---------------------------------------------------------------------------
# bundle io

_INDEX_DTYPE = "<f8"


def _norm_payload(norm: Standardizer | None):
    if norm is None:
        return None
    return {"mean": norm.mean.tolist(), "std": norm.std.tolist()}


def _norm_from_payload(payload):
    if not payload:
        return None
    return Standardizer(np.array(payload["mean"]), np.array(payload["std"]))


def save_bundle(experts: ExpertSet, directory) -> None:
    os.makedirs(directory, exist_ok=True)
    for state in STATE_ORDER:
        net = experts.retarget[state]
        mlp.save_checkpoint(
            net.params,
            net.spec,
            os.path.join(directory, f"retarget_{state.value}.json"),
            extra={"state": state.value, "model_hash": net.model.content_hash(), "norm": _norm_payload(net.norm)},
        )
        cn = experts.contact[state]
        mlp.save_checkpoint(
            cn.params,
            cn.spec,
            os.path.join(directory, f"contact_{state.value}.json"),
            extra={"state": state.value, "norm": _norm_payload(cn.norm)},
        )
    feats = np.ascontiguousarray(experts.index_features, dtype=_INDEX_DTYPE)
    with open(os.path.join(directory, "index.bin"), "wb") as fh:
        fh.write(feats.tobytes())
    with open(os.path.join(directory, "index.json"), "w") as fh:
        json.dump(
            {
                "count": int(feats.shape[0]),
                "dim": int(feats.shape[1]),
                "dtype": _INDEX_DTYPE,
                "k": experts.k,
                "states": experts.index_states.tolist(),
                "state_order": [s.value for s in STATE_ORDER],
            },
            fh,
        )


def load_bundle(directory, model: QuadrupedModel | None = None) -> ExpertSet:
    model = model or QuadrupedModel.default()
    retarget, contact = {}, {}
    for state in STATE_ORDER:
        rpath = os.path.join(directory, f"retarget_{state.value}.json")
        cpath = os.path.join(directory, f"contact_{state.value}.json")
        if not (os.path.exists(rpath) and os.path.exists(cpath)):
            raise FileNotFoundError(f"bundle missing networks for {state.value} in {directory}")
        params, spec, _, extra = mlp.load_checkpoint(rpath)
        retarget[state] = RetargetModel(params, spec, model, state, _norm_from_payload(extra.get("norm")))
        params, spec, _, extra = mlp.load_checkpoint(cpath)
        contact[state] = ContactModel(params, spec, state, _norm_from_payload(extra.get("norm")))
    with open(os.path.join(directory, "index.json")) as fh:
        head = json.load(fh)
    feats = np.frombuffer(open(os.path.join(directory, "index.bin"), "rb").read(), dtype=head["dtype"])
    feats = feats.reshape(head["count"], head["dim"]).copy()
    return ExpertSet(retarget, contact, feats, np.array(head["states"], dtype=np.int64), k=head["k"])
