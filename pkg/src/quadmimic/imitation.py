"""Motion-imitation PoMDP: observations, rewards, termination, domain
randomization, curriculum scheduling and the batched training environment.

The observation stacks short histories of sensors, actions and reference
poses; no future reference frames ever enter it. The reward multiplies
five tracking factors and adds a separate acceleration penalty term, every
factor shaped exp(-s * error^2) so rewards live in (0, 1].
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .datagen import RobotState, Task, TaskSpec, gen_robot_clip
from .kinematics import QuadrupedModel, fk_body, hull_distance_2d
from .motion import MotionClip, MotionFrame, inject_noise
from .plant import PlantState, VectorPlant
from .rotations import quat_conj, quat_mul, quat_to_euler, split_heading

SENSOR_DIM = 16  # 12 joint encoders + roll, pitch and their rates
ACTION_DIM = 12
REF_DIM = 16  # root quat + 12 joints
HISTORY_SENSOR = 4
HISTORY_ACTION = 3
HISTORY_REF = 4
OBS_DIM = HISTORY_SENSOR * SENSOR_DIM + HISTORY_ACTION * ACTION_DIM + HISTORY_REF * REF_DIM  # 164

CONTROL_RATE = 30.0
ACTION_SCALE = 0.4  # rad of PD-target residual per unit action

TRUNK_MIN_HEIGHT = 0.12
ATTITUDE_LIMIT = 0.8
MIDLINE_MARGIN = 0.02

TERMINATION_TRUNK = "trunk_contact"
TERMINATION_PENETRATION = "self_penetration"


@dataclass
class RewardWeights:
    w_main: float = 0.9
    w_acc: float = 0.1
    s_p: float = 1.0
    s_e: float = 20.0
    s_rp: float = 20.0
    s_ro: float = 5.0
    s_sp: float = 10.0
    s_acc: float = 3.0


def _batch_quat_angle(a, b):
    dot = np.sum(a * b, axis=-1)
    return np.arccos(np.clip(2.0 * dot * dot - 1.0, -1.0, 1.0))


def reward_components(
    model: QuadrupedModel,
    ref_joints,
    ref_feet_body,
    ref_root_pos,
    ref_quat,
    plant_joints,
    plant_feet_body,
    plant_root_pos,
    plant_quat,
    plant_joint_accel,
    support_distance,
    measure_support,
    weights: RewardWeights | None = None,
):
    """Vectorized reward factors; every argument carries a batch dim."""
    w = weights or RewardWeights()
    r_p = np.exp(-w.s_p * np.sum((ref_joints - plant_joints) ** 2, axis=-1))
    r_e = np.exp(-w.s_e * np.sum((ref_feet_body - plant_feet_body) ** 2, axis=(-2, -1)))
    r_rp = np.exp(-w.s_rp * np.sum((ref_root_pos - plant_root_pos) ** 2, axis=-1))
    r_ro = np.exp(-w.s_ro * _batch_quat_angle(ref_quat, plant_quat) ** 2)
    d_sp = np.where(measure_support, support_distance, 0.0)
    r_sp = np.exp(-w.s_sp * d_sp**2)
    r_acc = np.exp(-w.s_acc * np.sum(plant_joint_accel**2, axis=-1))
    r = w.w_main * (r_p * r_e * r_rp * r_ro * r_sp) + w.w_acc * r_acc
    return r, {"r_p": r_p, "r_e": r_e, "r_rp": r_rp, "r_ro": r_ro, "r_sp": r_sp, "r_acc": r_acc}


def compute_reward(
    ref: MotionFrame,
    plant: PlantState,
    model: QuadrupedModel,
    required_contacts: int = 3,
    weights: RewardWeights | None = None,
):
    """Scalar reward for one reference frame against one plant state."""
    ref_feet = fk_body(model, ref.pose.joints)
    plant_feet = fk_body(model, plant.joints)
    measure = int(plant.contact_mask.sum()) >= required_contacts
    d_sp = hull_distance_2d(plant.contact_points[plant.contact_mask], plant.root_position[:2]) if measure else 0.0
    r, parts = reward_components(
        model,
        ref.pose.joints[None],
        ref_feet[None],
        ref.pose.root_position[None],
        ref.pose.root_quat[None],
        plant.joints[None],
        plant_feet[None],
        plant.root_position[None],
        plant.root_quat[None],
        plant.joint_accelerations[None],
        np.array([d_sp]),
        np.array([measure]),
        weights,
    )
    return float(r[0]), {k: float(v[0]) for k, v in parts.items()}


def check_termination_batch(plant: VectorPlant):
    """Early-termination reasons per env ('' when healthy)."""
    height = plant.height_above_plane()
    roll, pitch, _ = quat_to_euler(plant.root_quat)
    trunk = (height < TRUNK_MIN_HEIGHT) | (np.abs(roll) > ATTITUDE_LIMIT) | (np.abs(pitch) > ATTITUDE_LIMIT)
    feet_b = fk_body(plant.model, plant.theta)
    right_cross = feet_b[:, (0, 2), 1] > MIDLINE_MARGIN
    left_cross = feet_b[:, (1, 3), 1] < -MIDLINE_MARGIN
    penetration = right_cross.any(axis=1) | left_cross.any(axis=1)
    reasons = np.where(trunk, TERMINATION_TRUNK, np.where(penetration, TERMINATION_PENETRATION, ""))
    return reasons


def check_termination(plant: PlantState, model: QuadrupedModel):
    """Reason string for one plant state, or None."""
    roll, pitch, _ = quat_to_euler(plant.root_quat)
    if plant.root_position[2] < TRUNK_MIN_HEIGHT or abs(roll) > ATTITUDE_LIMIT or abs(pitch) > ATTITUDE_LIMIT:
        return TERMINATION_TRUNK
    feet_b = fk_body(model, plant.joints)
    if np.any(feet_b[(0, 2), 1] > MIDLINE_MARGIN) or np.any(feet_b[(1, 3), 1] < -MIDLINE_MARGIN):
        return TERMINATION_PENETRATION
    return None


# ---------------------------------------------------------------------------
# domain randomization

DR_RANGES = {
    "mass_scale": (0.75, 1.25, 1.0),
    "friction": (0.5, 1.5, 1.0),
    "p_gain_scale": (0.7, 1.3, 1.0),
    "d_gain_scale": (0.7, 1.3, 1.0),
    "delay": (0.0, 0.016, 0.0),
    "slope": (0.0, 0.14, 0.0),
}


@dataclass
class DomainParams:
    mass_scale: float = 1.0
    friction: float = 1.0
    p_gain_scale: float = 1.0
    d_gain_scale: float = 1.0
    delay: float = 0.0
    slope: float = 0.0
    slope_direction: float = 0.0

    @classmethod
    def nominal(cls) -> "DomainParams":
        return cls()

    def as_dict(self) -> dict:
        return {k: float(getattr(self, k)) for k in ("mass_scale", "friction", "p_gain_scale", "d_gain_scale", "delay", "slope", "slope_direction")}


def sample_domain(scale: float, rng: np.random.Generator) -> DomainParams:
    """Sample parameters on ranges that widen from nominal with the scale."""
    if not 0.0 <= scale <= 1.0:
        raise ValueError("scale must be in [0, 1]")
    out = {}
    for name, (lo, hi, nominal) in DR_RANGES.items():
        a = nominal + (lo - nominal) * scale
        b = nominal + (hi - nominal) * scale
        out[name] = float(rng.uniform(a, b))
    out["slope_direction"] = float(rng.uniform(0.0, 2.0 * np.pi)) if scale > 0.0 else 0.0
    return DomainParams(**out)


# ---------------------------------------------------------------------------
# action filtering


class ButterworthFilter:
    """Second-order low-pass (bilinear transform, DC gain exactly 1).

    Filters a batch of channel vectors stepwise; per-env state can be reset
    to pass the first sample through unchanged.
    """

    def __init__(self, n_envs: int, n_channels: int, cutoff_hz: float = 5.0, sample_hz: float = 30.0):
        k = np.tan(np.pi * cutoff_hz / sample_hz)
        d = 1.0 + np.sqrt(2.0) * k + k * k
        self.b0 = k * k / d
        self.b1 = 2.0 * self.b0
        self.b2 = self.b0
        self.a1 = 2.0 * (k * k - 1.0) / d
        self.a2 = (1.0 - np.sqrt(2.0) * k + k * k) / d
        self.s1 = np.zeros((n_envs, n_channels))
        self.s2 = np.zeros((n_envs, n_channels))

    def reset(self, idx, x0=0.0):
        self.s1[idx] = x0 * (1.0 - self.b0)
        self.s2[idx] = x0 * (self.b2 - self.a2)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        y = self.b0 * x + self.s1
        self.s1 = self.b1 * x - self.a1 * y + self.s2
        self.s2 = self.b2 * x - self.a2 * y
        return y


# ---------------------------------------------------------------------------
# observations


def build_observation(sensor_buf, action_buf, reference_buf) -> np.ndarray:
    """Flatten [z_{t-3:t}, a_{t-3:t-1}, ref_{t-3:t}], zero-padded on the old side."""

    def stack(buf, count, dim):
        buf = [np.asarray(b, dtype=float) for b in buf][-count:]
        pad = [np.zeros(dim)] * (count - len(buf))
        return np.concatenate(pad + buf)

    return np.concatenate(
        [
            stack(sensor_buf, HISTORY_SENSOR, SENSOR_DIM),
            stack(action_buf, HISTORY_ACTION, ACTION_DIM),
            stack(reference_buf, HISTORY_REF, REF_DIM),
        ]
    )


class _Buffers:
    """Rolling histories for a batch of envs (oldest slot first)."""

    def __init__(self, n):
        self.sensor = np.zeros((n, HISTORY_SENSOR, SENSOR_DIM))
        self.action = np.zeros((n, HISTORY_ACTION, ACTION_DIM))
        self.ref = np.zeros((n, HISTORY_REF, REF_DIM))

    def reset(self, i):
        self.sensor[i] = 0.0
        self.action[i] = 0.0
        self.ref[i] = 0.0

    def push_sensor(self, z, idx=slice(None)):
        self.sensor[idx] = np.roll(self.sensor[idx], -1, axis=-2)
        self.sensor[idx, -1] = z

    def push_action(self, a, idx=slice(None)):
        self.action[idx] = np.roll(self.action[idx], -1, axis=-2)
        self.action[idx, -1] = a

    def push_ref(self, r, idx=slice(None)):
        self.ref[idx] = np.roll(self.ref[idx], -1, axis=-2)
        self.ref[idx, -1] = r

    def observations(self):
        n = self.sensor.shape[0]
        return np.concatenate(
            [self.sensor.reshape(n, -1), self.action.reshape(n, -1), self.ref.reshape(n, -1)], axis=1
        )


# ---------------------------------------------------------------------------
# curriculum


@dataclass(frozen=True)
class CurriculumStage:
    tasks: tuple  # Task members
    difficulty_cap: float
    dr_scale: float


@dataclass
class CurriculumSchedule:
    """Stage ladder advanced on sustained reward; never regresses."""

    stages: list
    threshold: float = 0.6
    patience: int = 20
    stage_index: int = 0
    _streak: int = 0

    def __post_init__(self):
        scales = [s.dr_scale for s in self.stages]
        if any(b < a for a, b in zip(scales, scales[1:])):
            raise ValueError("DR scales must be non-decreasing")
        for a, b in zip(self.stages, self.stages[1:]):
            if not set(a.tasks).issubset(b.tasks):
                raise ValueError("task sets may only expand")
            # difficulty is secondary: it must not drop within one task set
            if set(a.tasks) == set(b.tasks) and b.difficulty_cap < a.difficulty_cap:
                raise ValueError("difficulty cap must not drop within a task set")

    @property
    def stage(self) -> CurriculumStage:
        return self.stages[self.stage_index]

    def update(self, mean_reward: float) -> int:
        if self.stage_index >= len(self.stages) - 1:
            return self.stage_index
        if mean_reward > self.threshold:
            self._streak += 1
        else:
            self._streak = 0
        if self._streak >= self.patience:
            self.stage_index += 1
            self._streak = 0
        return self.stage_index


def default_curriculum(state: RobotState) -> CurriculumSchedule:
    """Task-primary, difficulty-secondary stage ladder for one expert."""
    if state is RobotState.STAND:
        t, m = Task.TILT_AT_STAND, Task.MANIP_AT_STAND
    elif state is RobotState.SIT:
        t, m = Task.TILT_AT_SIT, Task.MANIP_AT_SIT
    else:
        stages = [
            CurriculumStage((Task.WALK_FORWARD,), 0.25, 0.0),
            CurriculumStage((Task.WALK_FORWARD,), 0.5, 0.25),
            CurriculumStage((Task.WALK_FORWARD,), 1.0, 0.5),
            CurriculumStage((Task.WALK_FORWARD, Task.TURN_LEFT, Task.TURN_RIGHT), 0.5, 0.75),
            CurriculumStage((Task.WALK_FORWARD, Task.TURN_LEFT, Task.TURN_RIGHT), 1.0, 1.0),
        ]
        return CurriculumSchedule(stages)
    stages = [
        CurriculumStage((t,), 0.25, 0.0),
        CurriculumStage((t,), 0.5, 0.25),
        CurriculumStage((t,), 1.0, 0.5),
        CurriculumStage((t, m), 0.5, 0.75),
        CurriculumStage((t, m), 1.0, 1.0),
    ]
    return CurriculumSchedule(stages)


def final_stage_schedule(state: RobotState, dr_scale: float = 1.0) -> CurriculumSchedule:
    """Degenerate schedule that starts at the hardest stage (no curriculum)."""
    last = default_curriculum(state).stages[-1]
    return CurriculumSchedule([CurriculumStage(last.tasks, last.difficulty_cap, dr_scale)])


# ---------------------------------------------------------------------------
# environment


@dataclass
class EpisodeResult:
    success_time_ratio: float
    termination_reason: str | None
    mean_reward: float
    trace: list = field(default_factory=list)
    domain: DomainParams | None = None

    def write_trace_csv(self, path) -> None:
        if not self.trace:
            return
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(self.trace[0].keys()))
            writer.writeheader()
            writer.writerows(self.trace)


class _Reference:
    """Per-env reference clip with cached body-frame feet and obs rows."""

    def __init__(self, clip: MotionClip, model: QuadrupedModel, contacts=None):
        self.clip = clip
        self.joints = clip.joints
        self.root_pos = clip.root_pos
        self.quat = clip.root_quat
        self.contacts = clip.contacts if contacts is None else np.asarray(contacts, dtype=float)
        self.feet_body = fk_body(model, clip.joints)
        heading0, _ = split_heading(clip.root_quat[0])
        rel_quat = quat_mul(quat_conj(heading0)[None, :], clip.root_quat)
        self.obs_rows = np.concatenate([rel_quat, clip.joints], axis=1)

    def __len__(self):
        return len(self.joints)


class ImitationVecEnv:
    """Batched imitation environment over the surrogate plant.

    Episodes sample a task from the current curriculum stage, perturb a
    pooled reference clip with smoothed joint noise, and randomize dynamics
    at the stage's DR scale. A single rng stream drives every stochastic
    choice, so a fixed seed reproduces runs bit for bit.
    """

    def __init__(
        self,
        model: QuadrupedModel,
        n_envs: int,
        state: RobotState = RobotState.STAND,
        seed: int = 0,
        schedule: CurriculumSchedule | None = None,
        noise_std: float = 0.03,
        max_duration: float = 10.0,
        action_scale: float = ACTION_SCALE,
        pool_size: int = 12,
        fixed_domain: DomainParams | None = None,
    ):
        self.model = model
        self.n = n_envs
        self.state = state
        self.schedule = schedule or default_curriculum(state)
        self.noise_std = noise_std
        self.max_steps = int(round(max_duration * CONTROL_RATE))
        self.action_scale = action_scale
        self.pool_size = pool_size
        self.fixed_domain = fixed_domain
        self.seed = seed
        self.rng = np.random.default_rng([seed, 31337])
        self.plant = VectorPlant(model, n_envs)
        self.filter = ButterworthFilter(n_envs, ACTION_DIM)
        self.buffers = _Buffers(n_envs)
        self.step_idx = np.zeros(n_envs, dtype=np.int64)
        self.ep_reward = np.zeros(n_envs)
        self.ep_steps = np.zeros(n_envs, dtype=np.int64)
        self.domains: list = [None] * n_envs
        self._pool: dict = {}
        self.total_steps = 0
        # batched reference arrays; every pooled clip shares one length
        self._ref_len = int(round((max_duration + 0.5) * CONTROL_RATE))
        self.ref_n = np.full(n_envs, self._ref_len, dtype=np.int64)
        t = self._ref_len
        self.ref_joints = np.zeros((n_envs, t, 12))
        self.ref_root = np.zeros((n_envs, t, 3))
        self.ref_quat = np.zeros((n_envs, t, 4))
        self.ref_feet = np.zeros((n_envs, t, 4, 3))
        self.ref_contacts = np.zeros((n_envs, t, 4))
        self.ref_obs = np.zeros((n_envs, t, REF_DIM))

    # -- reference pool ------------------------------------------------------

    def _pool_clips(self, stage_index: int):
        if stage_index not in self._pool:
            stage = self.schedule.stages[stage_index]
            clips = []
            for j in range(self.pool_size):
                rng = np.random.default_rng([self.seed, 71, stage_index, j])
                task = stage.tasks[j % len(stage.tasks)]
                difficulty = stage.difficulty_cap * rng.uniform(0.5, 1.0)
                clip = gen_robot_clip(
                    TaskSpec(task, difficulty), self.max_steps / CONTROL_RATE + 0.5, rng, self.model
                )
                clips.append(clip)
            self._pool[stage_index] = clips
        return self._pool[stage_index]

    # -- lifecycle -------------------------------------------------------------

    def reset_env(self, i: int) -> None:
        """Fresh episode: pooled clip + joint noise, stage-scaled dynamics.

        Contact labels stay those of the clean clip, so reference noise
        perturbs the tracked joints without flickering the stance pattern.
        The plant settles under gravity for a few frames before the episode
        starts counting.
        """
        clips = self._pool_clips(self.schedule.stage_index)
        clip = clips[int(self.rng.integers(len(clips)))]
        noisy = inject_noise(clip, self.noise_std, self.rng) if self.noise_std > 0 else clip.copy()
        ref = _Reference(noisy, self.model, contacts=clip.contacts)
        n_frames = min(len(ref), self._ref_len)
        self.ref_n[i] = n_frames
        self.ref_joints[i, :n_frames] = ref.joints[:n_frames]
        self.ref_root[i, :n_frames] = ref.root_pos[:n_frames]
        self.ref_quat[i, :n_frames] = ref.quat[:n_frames]
        self.ref_feet[i, :n_frames] = ref.feet_body[:n_frames]
        self.ref_contacts[i, :n_frames] = ref.contacts[:n_frames]
        self.ref_obs[i, :n_frames] = ref.obs_rows[:n_frames]
        if n_frames < self._ref_len:
            for arr in (self.ref_joints, self.ref_root, self.ref_quat, self.ref_feet, self.ref_contacts, self.ref_obs):
                arr[i, n_frames:] = arr[i, n_frames - 1]

        domain = self.fixed_domain or sample_domain(self.schedule.stage.dr_scale, self.rng)
        self.domains[i] = domain
        self.plant.set_domain(
            i, domain.mass_scale, domain.friction, domain.p_gain_scale, domain.d_gain_scale, domain.delay, domain.slope, domain.slope_direction
        )
        self.plant.reset_env(i, ref.joints[0], ref.root_pos[0], ref.quat[0], ref.contacts[0])
        self.plant.settle(i, ref.joints[0], ref.contacts[0])
        self.filter.reset(i, 0.0)
        self.buffers.reset(i)
        self.step_idx[i] = 0
        self.ep_reward[i] = 0.0
        self.ep_steps[i] = 0
        z0 = np.concatenate([self.plant.theta[i], self.plant.prev_rp[i], np.zeros(2)])
        z0 = z0 + self.rng.normal(0.0, 0.01, size=SENSOR_DIM)
        self.buffers.push_sensor(z0, np.array([i]))
        self.buffers.push_ref(ref.obs_rows[0], np.array([i]))

    def reset(self) -> np.ndarray:
        for i in range(self.n):
            self.reset_env(i)
        return self.buffers.observations()

    def _gather_ref(self, offset: int = 0):
        idx = np.clip(self.step_idx + offset, 0, self._ref_len - 1)
        rows = np.arange(self.n)
        return {
            "joints": self.ref_joints[rows, idx],
            "root_pos": self.ref_root[rows, idx],
            "quat": self.ref_quat[rows, idx],
            "feet": self.ref_feet[rows, idx],
            "contacts": self.ref_contacts[rows, idx],
            "obs": self.ref_obs[rows, idx],
        }

    def step(self, actions):
        """Advance the batch one control period.

        Returns (obs, rewards, dones, info) where info carries per-episode
        stats for the envs that finished this step.
        """
        actions = np.asarray(actions, dtype=float)
        filtered = np.clip(self.filter(actions), -1.0, 1.0)
        base = self._gather_ref(0)
        targets = base["joints"] + self.action_scale * filtered
        nxt = self._gather_ref(1)
        sensors = self.plant.step(targets, nxt["contacts"], self.rng)

        plant_feet = fk_body(self.model, self.plant.theta)
        # the support term applies only when the reference demands >= 3 contacts
        measure = (nxt["contacts"] > 0.5).sum(axis=1) >= 3
        rewards, parts = reward_components(
            self.model,
            nxt["joints"],
            nxt["feet"],
            nxt["root_pos"],
            nxt["quat"],
            self.plant.theta,
            plant_feet,
            self.plant.root_pos,
            self.plant.root_quat,
            self.plant.ddtheta,
            self.plant.last_hull_distance,
            measure,
        )
        reasons = check_termination_batch(self.plant)
        self.step_idx += 1
        self.ep_steps += 1
        self.ep_reward += rewards
        self.total_steps += self.n

        out_of_ref = self.step_idx >= self.ref_n - 1
        timeout = self.ep_steps >= self.max_steps
        terminated = reasons != ""
        dones = terminated | out_of_ref | timeout

        self.buffers.push_action(actions)
        self.buffers.push_sensor(sensors)
        self.buffers.push_ref(nxt["obs"])

        info = {"episodes": []}
        for i in np.flatnonzero(dones):
            info["episodes"].append(
                {
                    "env": int(i),
                    "steps": int(self.ep_steps[i]),
                    "mean_reward": float(self.ep_reward[i] / max(self.ep_steps[i], 1)),
                    "success_time_ratio": float(self.ep_steps[i] / self.max_steps),
                    "termination": reasons[i] or None,
                    "domain": self.domains[i],
                }
            )
            self.reset_env(i)
        info["reward_components"] = {k: float(v.mean()) for k, v in parts.items()}
        return self.buffers.observations(), rewards, dones, info


def run_episode(
    policy_fn,
    reference: MotionClip,
    domain: DomainParams,
    model: QuadrupedModel,
    seed: int = 0,
    max_duration: float = 10.0,
    action_scale: float = ACTION_SCALE,
    collect_trace: bool = True,
) -> EpisodeResult:
    """Roll one policy against one reference under fixed dynamics.

    policy_fn maps a 164-dim observation to a 12-dim action. The episode
    runs until early termination, the reference ends, or max_duration.
    """
    if reference.contacts is None:
        raise ValueError("reference needs contact labels")
    rng = np.random.default_rng(list(np.atleast_1d(seed).astype(np.int64)) + [515])
    plant = VectorPlant(model, 1)
    plant.set_domain(0, domain.mass_scale, domain.friction, domain.p_gain_scale, domain.d_gain_scale, domain.delay, domain.slope, domain.slope_direction)
    ref = _Reference(reference, model)
    plant.reset_env(0, ref.joints[0], ref.root_pos[0], ref.quat[0], ref.contacts[0])
    filt = ButterworthFilter(1, ACTION_DIM)
    buf = _Buffers(1)
    z0 = np.concatenate([plant.theta[0], plant.prev_rp[0], np.zeros(2)]) + rng.normal(0.0, 0.01, SENSOR_DIM)
    buf.push_sensor(z0, np.array([0]))
    buf.push_ref(ref.obs_rows[0], np.array([0]))

    max_steps = min(int(round(max_duration * CONTROL_RATE)), len(ref) - 1)
    rewards = []
    trace = []
    reason = None
    for k in range(max_steps):
        obs = buf.observations()[0]
        action = np.asarray(policy_fn(obs), dtype=float)
        filtered = np.clip(filt(action[None, :]), -1.0, 1.0)
        targets = ref.joints[k] + action_scale * filtered
        sensors = plant.step(targets, ref.contacts[k + 1][None], rng)
        measure = (ref.contacts[k + 1] > 0.5).sum() >= 3
        r, parts = reward_components(
            model,
            ref.joints[k + 1][None],
            ref.feet_body[k + 1][None],
            ref.root_pos[k + 1][None],
            ref.quat[k + 1][None],
            plant.theta,
            fk_body(model, plant.theta),
            plant.root_pos,
            plant.root_quat,
            plant.ddtheta,
            plant.last_hull_distance,
            np.array([measure]),
        )
        rewards.append(float(r[0]))
        if collect_trace:
            trace.append({"t": round((k + 1) / CONTROL_RATE, 6), "reward": float(r[0]), **{k2: float(v[0]) for k2, v in parts.items()}})
        buf.push_action(action[None, :])
        buf.push_sensor(sensors)
        buf.push_ref(ref.obs_rows[k + 1][None])
        res = check_termination_batch(plant)[0]
        if res:
            reason = res
            break
    steps_done = len(rewards)
    ratio = steps_done / int(round(max_duration * CONTROL_RATE))
    if reason is None and steps_done >= max_steps:
        ratio = 1.0 if max_steps >= int(round(max_duration * CONTROL_RATE)) else ratio
    return EpisodeResult(float(ratio), reason, float(np.mean(rewards)) if rewards else 0.0, trace, domain)
