"""Analysis harnesses: reachable-workspace comparison and the
success-time-ratio ablation over retargeting pipeline variants."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datagen import (
    STAND_HEIGHT,
    RobotState,
    Task,
    TaskSpec,
    gen_human_clip,
    gen_robot_clip,
)
from .imitation import run_episode, sample_domain
from .kinematics import QuadrupedModel, fk_body
from .motion import inject_noise
from .retarget import ExpertSet, RetargetRuntime
from .rotations import quat_from_euler, quat_rotate

MOVING_LEG = 0  # front-right


def _leg_joint_grid(model: QuadrupedModel, leg: int, samples: int) -> np.ndarray:
    lims = model.joint_limits[3 * leg : 3 * leg + 3]
    axes = [np.linspace(lo, hi, samples) for lo, hi in lims]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    joints = np.zeros((len(grid), 12))
    joints[:, 3 * leg : 3 * leg + 3] = grid
    return joints


def _voxel_keys(points: np.ndarray, resolution: float) -> np.ndarray:
    idx = np.floor(points / resolution).astype(np.int64) + 512
    return (idx[:, 0] * 1024 + idx[:, 1]) * 1024 + idx[:, 2]


def _voxel_centers(keys: np.ndarray, resolution: float) -> np.ndarray:
    iz = keys % 1024
    iy = (keys // 1024) % 1024
    ix = keys // (1024 * 1024)
    idx = np.stack([ix, iy, iz], axis=1) - 512
    return (idx + 0.5) * resolution


def workspace_comparison(
    model: QuadrupedModel,
    tilt_range: float,
    joint_samples: int = 55,
    tilt_samples: int = 7,
    resolution: float = 0.01,
    leg: int = MOVING_LEG,
):
    """Reachable set of one foot with the base fixed vs tilting.

    The fixed set comes from a dense joint grid; the tilting set is the
    union of that set swept over a roll/pitch/yaw grid (rotating the fixed
    voxel centers keeps both sets at the same sampling density). Returns
    voxel counts, the volume ratio, and both point clouds. tilt_range 0
    reduces the sweep to the identity, so the ratio is exactly 1.
    """
    root = np.array([0.0, 0.0, STAND_HEIGHT])
    joints = _leg_joint_grid(model, leg, joint_samples)
    feet = fk_body(model, joints)[:, leg, :]

    fixed_keys = np.unique(_voxel_keys(root + feet, resolution))
    centers_body = _voxel_centers(fixed_keys, resolution) - root

    if tilt_range <= 0.0:
        angles = np.array([0.0])
    else:
        angles = np.linspace(-tilt_range, tilt_range, tilt_samples)
    keys = [fixed_keys]
    tilt_cloud = []
    for roll in angles:
        for pitch in angles:
            quats = quat_from_euler(np.full_like(angles, roll), np.full_like(angles, pitch), angles)
            pts = root + quat_rotate(quats[:, None, :], centers_body[None, :, :]).reshape(-1, 3)
            keys.append(np.unique(_voxel_keys(pts, resolution)))
            tilt_cloud.append(pts[:: max(1, len(pts) // 2000)])
    tilt_keys = np.unique(np.concatenate(keys))
    ratio = len(tilt_keys) / len(fixed_keys)
    fixed_cloud = _voxel_centers(fixed_keys, resolution)
    return {
        "fixed_voxels": int(len(fixed_keys)),
        "tilt_voxels": int(len(tilt_keys)),
        "volume_ratio": float(ratio),
        "voxel_volume": resolution**3,
        "fixed_cloud": fixed_cloud[:: max(1, len(fixed_cloud) // 8000)],
        "tilt_cloud": np.concatenate(tilt_cloud) if tilt_cloud else fixed_cloud,
    }


# ---------------------------------------------------------------------------
# success-time-ratio ablation

ABLATION_VARIANTS = ("full", "no-contact", "no-temporal")

_STATE_TASKS = {
    RobotState.STAND: (Task.TILT_AT_STAND, Task.MANIP_AT_STAND),
    RobotState.SIT: (Task.TILT_AT_SIT, Task.MANIP_AT_SIT),
    RobotState.WALK: (Task.WALK_FORWARD, Task.TURN_LEFT),
}


def _variant_runtime(experts: ExpertSet, model: QuadrupedModel, state: RobotState, variant: str) -> RetargetRuntime:
    if variant not in ABLATION_VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    return RetargetRuntime(
        experts,
        model,
        contact_correction=variant != "no-contact",
        temporal_clip=variant != "no-temporal",
        state=state,
        hysteresis=10**9,  # variants are evaluated within one expert
    )


def zero_policy(obs):
    return np.zeros(12)


def glitch_human_clip(frames, rate: float, magnitude: float, rng: np.random.Generator, frame_rate: float = 30.0):
    """Capture-style artifacts: short unsmoothed feature spikes.

    Each glitch perturbs one frame's features; derivatives are recomputed
    afterwards, the way an online differencer would see the spike.
    """
    from .motion import HumanFrame, series_derivative, _diff_step

    feats = np.array([f.features for f in frames])
    n = len(feats)
    hit = rng.random(n) < rate
    spikes = rng.normal(0.0, magnitude, size=feats.shape)
    feats = feats + spikes * hit[:, None]
    times = np.arange(n) / frame_rate
    k = _diff_step(frame_rate, n)
    df = series_derivative(feats, times, k)
    ddf = series_derivative(df, times, k)
    return [HumanFrame(feats[i], df[i], ddf[i]) for i in range(n)]


@dataclass
class AblationRow:
    variant: str
    state: str
    episodes: int
    mean_ratio: float
    mean_reward: float
    terminations: int


def success_ratio_ablation(
    experts: ExpertSet,
    model: QuadrupedModel,
    state: RobotState = RobotState.STAND,
    variants=ABLATION_VARIANTS,
    n_episodes: int = 128,
    duration: float = 10.0,
    noise_std: float = 0.03,
    glitch_rate: float = 0.04,
    glitch_magnitude: float = 0.5,
    dr_scale: float = 0.5,
    style_seed: int = 1,
    seed: int = 0,
    policy_fn=None,
):
    """Success-time ratios of pipeline variants on noisy retargeted streams.

    Every variant sees the same noisy, glitched human inputs and the same
    sampled dynamics; only the post-processing differs. The tracking policy
    defaults to the plain reference tracker.
    """
    policy_fn = policy_fn or zero_policy
    tasks = _STATE_TASKS[state]
    totals = {v: {"ratios": [], "rewards": [], "terms": 0} for v in variants}
    episode_rows = []
    for ep in range(n_episodes):
        # one noisy human stream and one dynamics draw, shared by every variant
        rng = np.random.default_rng([seed, 400 + ep])
        task = TaskSpec(tasks[ep % len(tasks)], 0.5 + 0.4 * rng.uniform())
        clip = gen_robot_clip(task, duration + 0.5, rng, model)
        noisy = inject_noise(clip, noise_std, np.random.default_rng([seed, 500 + ep]))
        human = gen_human_clip(noisy, style_seed, rng=np.random.default_rng([seed, 600 + ep]), model=model)
        if glitch_rate > 0:
            human = glitch_human_clip(human, glitch_rate, glitch_magnitude, np.random.default_rng([seed, 900 + ep]))
        domain = sample_domain(dr_scale, np.random.default_rng([seed, 700 + ep]))
        for variant in variants:
            runtime = _variant_runtime(experts, model, state, variant)
            stream, _ = runtime.stream(human)
            result = run_episode(policy_fn, stream, domain, model, seed=[seed, 800 + ep], max_duration=duration, collect_trace=False)
            totals[variant]["ratios"].append(result.success_time_ratio)
            totals[variant]["rewards"].append(result.mean_reward)
            totals[variant]["terms"] += result.termination_reason is not None
            episode_rows.append(
                {
                    "variant": variant,
                    "state": state.value,
                    "episode": ep,
                    "ratio": result.success_time_ratio,
                    "reward": result.mean_reward,
                    "termination": result.termination_reason or "",
                }
            )
    rows = [
        AblationRow(v, state.value, n_episodes, float(np.mean(t["ratios"])), float(np.mean(t["rewards"])), t["terms"])
        for v, t in totals.items()
    ]
    return rows, episode_rows
