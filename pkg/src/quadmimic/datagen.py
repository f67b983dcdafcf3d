"""Synthetic paired human/robot data and robot reference motion generation.

Robot motions come from two generators: keypose interpolation (tilt and
reach tasks, random goals solved by IK) and a trot trajectory generator
(walking and turning). A fixed random smooth map built from sinusoidal
features of the robot state stands in for a human actor, so the mapper has
a learnable but nontrivial target without any capture hardware.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .kinematics import Pose, QuadrupedModel, Unreachable, fk_body, solve_leg_ik
from .motion import (
    HUMAN_FEATURE_DIM,
    HumanFrame,
    MotionClip,
    MotionFrame,
    finite_difference,
    series_derivative,
    smoothed_noise,
    _diff_step,
)
from .rotations import (
    quat_from_euler,
    quat_from_rotvec,
    quat_mul,
    quat_normalize,
    quat_rotate,
    quat_slerp,
    quat_to_rotvec,
    split_heading,
)

FRAME_RATE = 30.0

# Contact label anchors: fully in contact at (0 m, 0 m/s), fully clear at
# (0.02 m, 0.60 m/s); bilinear ramp in between.
CONTACT_H_MAX = 0.02
CONTACT_V_MAX = 0.60

STAND_HEIGHT = 0.26
WALK_HEIGHT = 0.28
SIT_HEIGHT = 0.20
SIT_PITCH = -0.45
SIT_X_SHIFT = -0.03

MOVING_FOOT = 0  # FR does the reaching in manipulation tasks


class NoGoalFound(Exception):
    """Could not sample a reachable keypose within the retry budget."""


class GaitInfeasible(Exception):
    """Gait parameters drive a foot outside the leg workspace."""


class EmptyTasks(Exception):
    pass


class Task(str, Enum):
    TILT_AT_STAND = "tilt_at_stand"
    MANIP_AT_STAND = "manip_at_stand"
    TILT_AT_SIT = "tilt_at_sit"
    MANIP_AT_SIT = "manip_at_sit"
    WALK_FORWARD = "walk_forward"
    TURN_LEFT = "turn_left"
    TURN_RIGHT = "turn_right"


class RobotState(str, Enum):
    STAND = "stand"
    SIT = "sit"
    WALK = "walk"


STATE_ORDER = (RobotState.STAND, RobotState.SIT, RobotState.WALK)

TASK_STATE = {
    Task.TILT_AT_STAND: RobotState.STAND,
    Task.MANIP_AT_STAND: RobotState.STAND,
    Task.TILT_AT_SIT: RobotState.SIT,
    Task.MANIP_AT_SIT: RobotState.SIT,
    Task.WALK_FORWARD: RobotState.WALK,
    Task.TURN_LEFT: RobotState.WALK,
    Task.TURN_RIGHT: RobotState.WALK,
}

KEYPOSE_TASKS = {Task.TILT_AT_STAND, Task.MANIP_AT_STAND, Task.TILT_AT_SIT, Task.MANIP_AT_SIT}

# roll/pitch/yaw tilt caps (rad) per state at difficulty 1
TILT_CAPS = {
    RobotState.STAND: np.deg2rad([40.0, 40.0, 40.0]),
    RobotState.SIT: np.deg2rad([15.0, 30.0, 7.0]),
}


@dataclass(frozen=True)
class TaskSpec:
    task: Task
    difficulty: float

    def __post_init__(self):
        if not 0.0 <= self.difficulty <= 1.0:
            raise ValueError("difficulty must be in [0, 1]")


@dataclass
class GaitParams:
    body_height: float = WALK_HEIGHT
    foot_clearance: float = 0.05
    swing_angle: float = 0.0  # fore-aft swing bulge, rad
    period: float = 0.7
    forward_speed: float = 0.0
    turn_rate: float = 0.0
    phase_offsets: tuple = (0.0, 0.5, 0.5, 0.0)  # trot: FR/RL vs FL/RR

    def __post_init__(self):
        if self.period <= 0:
            raise ValueError("period must be positive")
        if self.foot_clearance < 0:
            raise ValueError("foot_clearance must be >= 0")
        if abs(self.forward_speed) > 1.0:
            raise ValueError("|forward_speed| must be <= 1.0 m/s")


@dataclass
class PairedSample:
    human: HumanFrame
    robot: MotionFrame


def canonical_pose(model: QuadrupedModel, state: RobotState) -> Pose:
    """Reference posture for a robot state; feet at the canonical stance."""
    feet = canonical_feet(model)
    if state is RobotState.SIT:
        root = np.array([SIT_X_SHIFT, 0.0, SIT_HEIGHT])
        quat = quat_from_euler(0.0, SIT_PITCH, 0.0)
    elif state is RobotState.WALK:
        root = np.array([0.0, 0.0, WALK_HEIGHT])
        quat = np.array([1.0, 0.0, 0.0, 0.0])
    else:
        root = np.array([0.0, 0.0, STAND_HEIGHT])
        quat = np.array([1.0, 0.0, 0.0, 0.0])
    pose = Pose(root, quat, nominal_joints(model))
    pose.joints = solve_feet_ik(model, pose, feet)
    return pose


def canonical_feet(model: QuadrupedModel) -> np.ndarray:
    """Ground positions below the hips, offset laterally by the abduction link."""
    feet = model.hip_positions.copy()
    feet[:, 1] += model.side_signs * model.abduction_offset
    feet[:, 2] = 0.0
    return feet


def nominal_joints(model: QuadrupedModel) -> np.ndarray:
    """Symmetric crouch with feet directly under the hips at standing height."""
    reach = min(STAND_HEIGHT, model.thigh_length + model.calf_length - 1e-3)
    knee = -2.0 * np.arccos(reach / (model.thigh_length + model.calf_length))
    return np.tile([0.0, -knee / 2.0, knee], 4)


_IK_FALLBACK_SEEDS = (
    np.array([0.0, 0.72, -1.45]),  # nominal crouch
    np.array([0.0, 1.15, -2.30]),  # folded
    np.array([0.0, 0.30, -0.60]),  # extended
)


def solve_feet_ik(model, base_pose: Pose, feet_world, seed_joints=None, legs=range(4)) -> np.ndarray:
    """Per-leg IK with fallback seeds for cold starts near fold limits."""
    joints = (base_pose.joints if seed_joints is None else np.asarray(seed_joints, dtype=float)).copy()
    for leg in legs:
        seeds = [joints[3 * leg : 3 * leg + 3]] + list(_IK_FALLBACK_SEEDS)
        for si, seed in enumerate(seeds):
            try:
                joints[3 * leg : 3 * leg + 3] = solve_leg_ik(
                    model, base_pose, leg, feet_world[leg], seed_joints=seed
                )
                break
            except Unreachable:
                if si == len(seeds) - 1:
                    raise
    return joints


def _smoothstep(u):
    return u * u * (3.0 - 2.0 * u)


@dataclass
class _Keypose:
    root_pos: np.ndarray
    root_quat: np.ndarray
    moving_foot_target: np.ndarray | None
    joints: np.ndarray


def _sample_keypose(task: TaskSpec, base: Pose, feet: np.ndarray, model, rng, prev: _Keypose, interval: float):
    state = TASK_STATE[task.task]
    # smoothstep peaks at 1.5*delta/interval; 1.9 leaves margin for IK path
    # curvature so generated clips stay inside the velocity limit
    vel_budget = model.joint_velocity_limit * interval / 1.9
    for _ in range(100):
        if task.task in (Task.TILT_AT_STAND, Task.TILT_AT_SIT):
            caps = TILT_CAPS[state] * task.difficulty
            rpy = rng.uniform(-caps, caps)
            # single-axis excursions stay reachable out to the cap, and
            # returns to neutral let the next keypose swing wide without
            # tripping the velocity budget
            mode = rng.random()
            if mode < 0.20:
                rpy = np.zeros(3)
            elif mode < 0.65:
                axis = rng.integers(0, 3)
                strong = caps[axis] * rng.uniform(0.55, 1.0) * rng.choice([-1.0, 1.0])
                rpy = np.where(np.arange(3) == axis, strong, 0.0)
            quat = quat_mul(base.root_quat, quat_from_euler(*rpy))
            root = base.root_position.copy()
            target = None
        else:
            lift = task.difficulty * np.array(
                [rng.uniform(-0.08, 0.14), rng.uniform(-0.05, 0.09), rng.uniform(0.02, 0.20)]
            )
            target = feet[MOVING_FOOT] + lift
            # lean toward the remaining support triangle before reaching
            root = base.root_position + task.difficulty * np.array([-0.02, 0.025, 0.0])
            quat = base.root_quat.copy()
        cand = Pose(root, quat, prev.joints)
        targets = feet.copy()
        if target is not None:
            targets[MOVING_FOOT] = target
        try:
            joints = solve_feet_ik(model, cand, targets)
            mid_pos = 0.5 * (prev.root_pos + root)
            mid_quat = quat_slerp(prev.root_quat, quat, 0.5)
            mid_targets = feet.copy()
            if target is not None and prev.moving_foot_target is not None:
                mid_targets[MOVING_FOOT] = 0.5 * (prev.moving_foot_target + target)
            elif target is not None:
                mid_targets[MOVING_FOOT] = 0.5 * (feet[MOVING_FOOT] + target)
            solve_feet_ik(model, Pose(mid_pos, mid_quat, prev.joints), mid_targets)
        except Unreachable:
            continue
        if np.max(np.abs(joints - prev.joints)) > vel_budget:
            continue
        return _Keypose(root, quat, targets[MOVING_FOOT] if target is not None else None, joints)
    raise NoGoalFound(f"no reachable keypose for {task.task.value} after 100 attempts")


def gen_keypose_motion(task: TaskSpec, duration: float, rng: np.random.Generator, model: QuadrupedModel | None = None) -> MotionClip:
    """Random goal keyposes eased over 1-3 s intervals; stance feet IK-pinned."""
    if task.task not in KEYPOSE_TASKS:
        raise ValueError(f"{task.task.value} is not a keypose task")
    model = model or QuadrupedModel.default()
    state = TASK_STATE[task.task]
    base = canonical_pose(model, state)
    feet = canonical_feet(model)
    manip = task.task in (Task.MANIP_AT_STAND, Task.MANIP_AT_SIT)

    start = _Keypose(
        base.root_position.copy(),
        base.root_quat.copy(),
        feet[MOVING_FOOT].copy() if manip else None,
        base.joints.copy(),
    )
    keyposes = [start]
    key_times = [0.0]
    while key_times[-1] < duration:
        interval = rng.uniform(1.0, 3.0)
        keyposes.append(_sample_keypose(task, base, feet, model, rng, keyposes[-1], interval))
        key_times.append(key_times[-1] + interval)

    n = int(round(duration * FRAME_RATE))
    times = np.arange(n) / FRAME_RATE
    root_pos = np.empty((n, 3))
    root_quat = np.empty((n, 4))
    joints = np.empty((n, 12))
    seg = 0
    prev_joints = start.joints.copy()
    for i, t in enumerate(times):
        while t > key_times[seg + 1]:
            seg += 1
        a, b = keyposes[seg], keyposes[seg + 1]
        u = _smoothstep((t - key_times[seg]) / (key_times[seg + 1] - key_times[seg]))
        root_pos[i] = (1 - u) * a.root_pos + u * b.root_pos
        root_quat[i] = quat_slerp(a.root_quat, b.root_quat, u)
        targets = feet.copy()
        if manip:
            targets[MOVING_FOOT] = (1 - u) * a.moving_foot_target + u * b.moving_foot_target
        pose = Pose(root_pos[i], root_quat[i], prev_joints)
        prev_joints = solve_feet_ik(model, pose, targets, seed_joints=prev_joints)
        joints[i] = prev_joints

    clip = MotionClip(times, root_pos, root_quat, joints, FRAME_RATE, meta={"task": task.task.value, "difficulty": task.difficulty})
    clip = finite_difference(clip)
    return label_contacts(clip, model)


def _arc_position(v: float, w: float, t):
    """Planar position after time t at speed v and turn rate w, from origin heading +x."""
    t = np.asarray(t, dtype=float)
    if abs(w) < 1e-9:
        return np.stack([v * t, np.zeros_like(t)], axis=-1)
    return np.stack([(v / w) * np.sin(w * t), (v / w) * (1.0 - np.cos(w * t))], axis=-1)


def gen_gait_motion(params: GaitParams, duration: float, model: QuadrupedModel | None = None) -> MotionClip:
    """Trot gait: stance feet hold world anchors, swing feet follow a half-cycloid."""
    model = model or QuadrupedModel.default()
    v, w, period = params.forward_speed, params.turn_rate, params.period
    n = int(round(duration * FRAME_RATE))
    times = np.arange(n) / FRAME_RATE
    feet_nominal = canonical_feet(model)
    stride_half = v * period / 4.0
    bulge = params.body_height * np.tan(params.swing_angle)

    def root_xy(t):
        return _arc_position(v, w, t)

    def yaw(t):
        return w * t

    def anchor(leg: int, idx: int) -> np.ndarray:
        t_td = (idx - params.phase_offsets[leg]) * period
        c, s = np.cos(yaw(t_td)), np.sin(yaw(t_td))
        off = feet_nominal[leg, :2] + np.array([stride_half, 0.0])
        return root_xy(t_td) + np.array([c * off[0] - s * off[1], s * off[0] + c * off[1]])

    root_pos = np.zeros((n, 3))
    root_pos[:, :2] = root_xy(times)
    root_pos[:, 2] = params.body_height
    yaws = yaw(times)
    root_quat = quat_from_euler(np.zeros(n), np.zeros(n), yaws)

    joints = np.empty((n, 12))
    prev_joints = nominal_joints(model)
    try:
        for i, t in enumerate(times):
            pose = Pose(root_pos[i], root_quat[i], prev_joints)
            targets = np.empty((4, 3))
            for leg in range(4):
                phase = (t / period + params.phase_offsets[leg]) % 1.0
                idx = int(np.floor(t / period + params.phase_offsets[leg]))
                if phase < 0.5:
                    xy = anchor(leg, idx)
                    z = 0.0
                else:
                    s = (phase - 0.5) / 0.5
                    a0, a1 = anchor(leg, idx), anchor(leg, idx + 1)
                    u = _smoothstep(s)
                    xy = (1 - u) * a0 + u * a1
                    c, sn = np.cos(yaws[i]), np.sin(yaws[i])
                    xy = xy + bulge * np.sin(np.pi * s) ** 2 * np.array([c, sn])
                    z = params.foot_clearance * 0.5 * (1.0 - np.cos(2.0 * np.pi * s))
                targets[leg] = np.array([xy[0], xy[1], z])
            prev_joints = solve_feet_ik(model, pose, targets, seed_joints=prev_joints)
            joints[i] = prev_joints
    except Unreachable as exc:
        raise GaitInfeasible(str(exc)) from exc

    clip = MotionClip(times, root_pos, root_quat, joints, FRAME_RATE, meta={"gait": True})
    clip = finite_difference(clip)
    return label_contacts(clip, model)


def task_gait_params(task: TaskSpec, rng: np.random.Generator) -> GaitParams:
    d = task.difficulty
    if task.task is Task.WALK_FORWARD:
        speed = 0.18 * d * rng.uniform(0.75, 1.0)
        turn = 0.0
    elif task.task is Task.TURN_LEFT:
        speed = 0.10 * d
        turn = np.deg2rad(15.0) * d * rng.uniform(0.6, 1.0)
    elif task.task is Task.TURN_RIGHT:
        speed = 0.10 * d
        turn = -np.deg2rad(15.0) * d * rng.uniform(0.6, 1.0)
    else:
        raise ValueError(f"{task.task.value} is not a gait task")
    return GaitParams(
        body_height=WALK_HEIGHT + rng.uniform(-0.015, 0.01),
        foot_clearance=0.025 + 0.01 * rng.uniform(0.0, 1.0),
        swing_angle=0.03 * rng.uniform(0.0, 1.0),
        period=1.0,
        forward_speed=speed,
        turn_rate=turn,
    )


def gen_robot_clip(task: TaskSpec, duration: float, rng: np.random.Generator, model: QuadrupedModel | None = None) -> MotionClip:
    if task.task in KEYPOSE_TASKS:
        return gen_keypose_motion(task, duration, rng, model)
    return gen_gait_motion(task_gait_params(task, rng), duration, model)


def clip_feet_world(clip: MotionClip, model: QuadrupedModel) -> np.ndarray:
    """World foot positions for every frame, (n, 4, 3)."""
    feet_b = fk_body(model, clip.joints)
    return clip.root_pos[:, None, :] + quat_rotate(clip.root_quat[:, None, :], feet_b)


def label_contacts(clip: MotionClip, model: QuadrupedModel) -> MotionClip:
    """Bilinear contact labels from foot height and speed.

    Foot speed comes from single-frame differences of the foot path so a
    statically held foot labels as firm contact right up to the gait
    boundaries.
    """
    if not clip.has_rates:
        raise ValueError("clip needs rates; run finite_difference first")
    out = clip.copy()
    feet = clip_feet_world(clip, model)
    n = len(clip)
    idx = np.arange(n)
    j_hi, j_lo = np.minimum(idx + 1, n - 1), np.maximum(idx - 1, 0)
    vel = (feet[j_hi] - feet[j_lo]) / (clip.times[j_hi] - clip.times[j_lo])[:, None, None]
    h = np.maximum(feet[:, :, 2], 0.0)
    v = np.linalg.norm(vel, axis=2)
    out.contacts = np.clip(1.0 - h / CONTACT_H_MAX, 0.0, 1.0) * np.clip(
        1.0 - v / CONTACT_V_MAX, 0.0, 1.0
    )
    return out


def contact_label(h: float, v: float) -> float:
    return float(
        np.clip(1.0 - h / CONTACT_H_MAX, 0.0, 1.0) * np.clip(1.0 - v / CONTACT_V_MAX, 0.0, 1.0)
    )


# ---------------------------------------------------------------------------
# synthetic human surrogate


_MAP_FREQ_SCALE = 0.7
_MAP_OUT_GAIN = 1.1
_N_SINUSOIDS = 8
_STATE_DIM = 16


def _human_map_params(style_seed: int):
    srng = np.random.default_rng([7919, int(style_seed)])
    w = srng.normal(0.0, _MAP_FREQ_SCALE, size=(_N_SINUSOIDS, _STATE_DIM))
    phase = srng.uniform(0.0, 2.0 * np.pi, size=_N_SINUSOIDS)
    mix = srng.normal(0.0, 1.0, size=(30, _N_SINUSOIDS)) * (_MAP_OUT_GAIN / np.sqrt(_N_SINUSOIDS))
    return w, phase, mix


def _robot_state_vector(clip: MotionClip, model: QuadrupedModel) -> np.ndarray:
    _, tilt = split_heading(clip.root_quat)
    rotvec = quat_to_rotvec(tilt)
    height = (clip.root_pos[:, 2:3] - STAND_HEIGHT) * 5.0
    joints = clip.joints - nominal_joints(model)
    return np.concatenate([rotvec * 2.0, height, joints], axis=1)


def gen_human_clip(robot: MotionClip, style_seed: int, rng: np.random.Generator | None = None, model: QuadrupedModel | None = None) -> list[HumanFrame]:
    """Map a robot clip through the fixed per-style smooth surrogate.

    Passing rng=None derives the noise stream from style_seed, so the same
    clip and style always produce the same human clip.
    """
    if not robot.has_rates:
        raise ValueError("robot clip needs rates")
    model = model or QuadrupedModel.default()
    if rng is None:
        rng = np.random.default_rng([104729, int(style_seed)])
    w, phase, mix = _human_map_params(style_seed)
    s = _robot_state_vector(robot, model)
    raw = np.sin(s @ w.T + phase) @ mix.T  # (n, 30)

    n = len(robot)
    features = np.empty((n, HUMAN_FEATURE_DIM))
    features[:, 0:4] = quat_from_rotvec(0.5 * raw[:, 0:3])
    features[:, 4:8] = quat_from_rotvec(0.5 * raw[:, 3:6])
    features[:, 8:32] = 1.5 * np.tanh(0.8 * raw[:, 6:30])

    features = features + smoothed_noise(features.shape, 0.01, rng)
    features[:, 0:4] = quat_normalize(features[:, 0:4])
    features[:, 4:8] = quat_normalize(features[:, 4:8])
    features[:, 8:32] = np.clip(features[:, 8:32], -1.5, 1.5)

    k = _diff_step(robot.frame_rate, n)
    df = series_derivative(features, robot.times, k)
    ddf = series_derivative(df, robot.times, k)
    return [HumanFrame(features[i], df[i], ddf[i]) for i in range(n)]


def pair_clip(robot: MotionClip, human: list[HumanFrame]) -> list[PairedSample]:
    if len(human) != len(robot):
        raise ValueError("human and robot clips must have equal length")
    return [PairedSample(human[i], robot.frame(i)) for i in range(len(robot))]


# ---------------------------------------------------------------------------
# dataset assembly

DATASET_SCHEMA_VERSION = 1
MIN_PAIRS_PER_TASK = 76
MAX_PAIRS_PER_TASK = 522


@dataclass
class DatasetSample:
    t: float
    human: HumanFrame
    root_pos: np.ndarray
    root_quat: np.ndarray  # full orientation
    joints: np.ndarray
    rates: np.ndarray  # [root angular velocity (3), joint velocities (12)]
    accel: np.ndarray  # [root angular acceleration (3), joint accelerations (12)]
    contacts: np.ndarray
    clip_id: int
    task: Task
    state: RobotState
    split: str  # "train" | "holdout"

    def target_quat(self) -> np.ndarray:
        """Orientation target for the mapper: heading-free during walking."""
        if self.state is RobotState.WALK:
            return split_heading(self.root_quat)[1]
        return self.root_quat


@dataclass
class Dataset:
    header: dict
    samples: list

    def by_state(self, state: RobotState, split: str | None = None) -> list:
        return [
            s
            for s in self.samples
            if s.state is state and (split is None or s.split == split)
        ]


def _clip_samples(clip: MotionClip, human, clip_id: int, task: Task, split: str, limit: int) -> list:
    state = TASK_STATE[task]
    out = []
    for i in range(min(limit, len(clip))):
        out.append(
            DatasetSample(
                t=float(clip.times[i]),
                human=human[i],
                root_pos=clip.root_pos[i].copy(),
                root_quat=clip.root_quat[i].copy(),
                joints=clip.joints[i].copy(),
                rates=np.concatenate([clip.root_ang_vel[i], clip.joint_vel[i]]),
                accel=np.concatenate([clip.root_ang_acc[i], clip.joint_acc[i]]),
                contacts=clip.contacts[i].copy(),
                clip_id=clip_id,
                task=task,
                state=state,
                split=split,
            )
        )
    return out


def build_dataset(
    tasks: list,
    clips_per_task: int,
    seed: int,
    style_seed: int = 0,
    model: QuadrupedModel | None = None,
    pairs_per_task: int | None = None,
) -> Dataset:
    """Generate paired samples; per-task counts land in [76, 522].

    pairs_per_task=None draws each task's count uniformly from that range;
    an explicit value is clamped into it. The holdout split is by clip,
    never by frame: the last ~10% of each task's clips (at least one when
    there are two or more) are held out.
    """
    if not tasks:
        raise EmptyTasks("task list is empty")
    if clips_per_task < 1:
        raise ValueError("clips_per_task must be >= 1")
    model = model or QuadrupedModel.default()
    samples = []
    clip_meta = []
    clip_id = 0
    for ti, task in enumerate(tasks):
        task_rng = np.random.default_rng([int(seed), 1000 + ti])
        if pairs_per_task is None:
            target = int(task_rng.integers(MIN_PAIRS_PER_TASK, MAX_PAIRS_PER_TASK + 1))
        else:
            target = int(np.clip(pairs_per_task, MIN_PAIRS_PER_TASK, MAX_PAIRS_PER_TASK))
        per_clip = [target // clips_per_task] * clips_per_task
        for i in range(target % clips_per_task):
            per_clip[i] += 1
        n_holdout = max(1, round(0.1 * clips_per_task)) if clips_per_task >= 2 else 0
        for ci in range(clips_per_task):
            duration = max(2.0, per_clip[ci] / FRAME_RATE)
            clip_rng = np.random.default_rng([int(seed), ti, ci])
            clip = gen_robot_clip(task, duration, clip_rng, model)
            human = gen_human_clip(clip, style_seed, rng=np.random.default_rng([int(seed), ti, ci, 77]), model=model)
            split = "holdout" if ci >= clips_per_task - n_holdout else "train"
            samples.extend(_clip_samples(clip, human, clip_id, task.task, split, per_clip[ci]))
            clip_meta.append(
                {
                    "clip": clip_id,
                    "task": task.task.value,
                    "difficulty": task.difficulty,
                    "seed": [int(seed), ti, ci],
                    "frames": per_clip[ci],
                    "split": split,
                }
            )
            clip_id += 1
    header = {
        "schema": DATASET_SCHEMA_VERSION,
        "model_hash": model.content_hash(),
        "style_seed": int(style_seed),
        "seed": int(seed),
        "clips": clip_meta,
    }
    return Dataset(header, samples)


def save_dataset(dataset: Dataset, path) -> None:
    with open(path, "w") as fh:
        fh.write(json.dumps(dataset.header, sort_keys=True) + "\n")
        for s in dataset.samples:
            fh.write(
                json.dumps(
                    {
                        "t": s.t,
                        "f": s.human.features.tolist(),
                        "df": s.human.dfeatures.tolist(),
                        "ddf": s.human.ddfeatures.tolist(),
                        "root_pos": s.root_pos.tolist(),
                        "quat": s.root_quat.tolist(),
                        "joints": s.joints.tolist(),
                        "rates": s.rates.tolist(),
                        "accel": s.accel.tolist(),
                        "contacts": s.contacts.tolist(),
                        "clip": s.clip_id,
                        "task": s.task.value,
                        "state": s.state.value,
                        "split": s.split,
                    }
                )
                + "\n"
            )


def load_dataset(path) -> Dataset:
    with open(path) as fh:
        header = json.loads(fh.readline())
        samples = []
        for line in fh:
            if not line.strip():
                continue
            r = json.loads(line)
            samples.append(
                DatasetSample(
                    t=r["t"],
                    human=HumanFrame(np.array(r["f"]), np.array(r["df"]), np.array(r["ddf"])),
                    root_pos=np.array(r["root_pos"]),
                    root_quat=np.array(r["quat"]),
                    joints=np.array(r["joints"]),
                    rates=np.array(r["rates"]),
                    accel=np.array(r["accel"]),
                    contacts=np.array(r["contacts"]),
                    clip_id=r["clip"],
                    task=Task(r["task"]),
                    state=RobotState(r["state"]),
                    split=r["split"],
                )
            )
    return Dataset(header, samples)
