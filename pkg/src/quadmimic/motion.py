"""Motion clip containers, derivative estimation and shared post-processing.

Clips are stored struct-of-arrays (times, root poses, joints, optional
rates) with a MotionFrame view for single-frame consumers. Derivatives use
a 0.1 s difference step regardless of the clip frame rate, so a 30 Hz clip
differences across 3 frames.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .kinematics import Pose, PoseRates
from .rotations import quat_conj, quat_mul, quat_normalize, quat_to_rotvec

DIFF_STEP_SECONDS = 0.1


class TooShort(Exception):
    """Clip has too few frames to differentiate."""


@dataclass
class MotionFrame:
    time: float
    pose: Pose
    rates: Optional[PoseRates] = None
    accel: Optional[PoseRates] = None
    contact_labels: Optional[np.ndarray] = None  # (4,) in [0, 1]


@dataclass
class HumanFrame:
    """Synthetic human feature triplet.

    features: root quat (4) + chest-relative quat (4) + 8 keypoints x 3
    normalized by limb length to [-1.5, 1.5]. dfeatures/ddfeatures are the
    raw first/second time derivatives of that 32-vector.
    """

    features: np.ndarray
    dfeatures: np.ndarray
    ddfeatures: np.ndarray

    def triplet(self) -> np.ndarray:
        return np.concatenate([self.features, self.dfeatures, self.ddfeatures])


HUMAN_FEATURE_DIM = 32


@dataclass
class MotionClip:
    times: np.ndarray  # (n,)
    root_pos: np.ndarray  # (n, 3)
    root_quat: np.ndarray  # (n, 4)
    joints: np.ndarray  # (n, 12)
    frame_rate: float
    root_lin_vel: Optional[np.ndarray] = None
    root_ang_vel: Optional[np.ndarray] = None  # body frame
    joint_vel: Optional[np.ndarray] = None
    root_lin_acc: Optional[np.ndarray] = None
    root_ang_acc: Optional[np.ndarray] = None
    joint_acc: Optional[np.ndarray] = None
    contacts: Optional[np.ndarray] = None  # (n, 4)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.root_pos = np.asarray(self.root_pos, dtype=float)
        self.root_quat = quat_normalize(np.asarray(self.root_quat, dtype=float))
        self.joints = np.asarray(self.joints, dtype=float)
        if len(self.times) > 1:
            dt = np.diff(self.times)
            if np.any(dt <= 0):
                raise ValueError("frame times must be strictly increasing")
            if np.any(np.abs(dt - 1.0 / self.frame_rate) > 1e-9):
                raise ValueError("frame spacing must match frame_rate")

    def __len__(self) -> int:
        return len(self.times)

    @property
    def has_rates(self) -> bool:
        return self.joint_vel is not None and self.joint_acc is not None

    def frame(self, i: int) -> MotionFrame:
        pose = Pose(self.root_pos[i], self.root_quat[i], self.joints[i])
        rates = accel = None
        if self.joint_vel is not None:
            rates = PoseRates(self.root_ang_vel[i], self.joint_vel[i], self.root_lin_vel[i])
        if self.joint_acc is not None:
            accel = PoseRates(self.root_ang_acc[i], self.joint_acc[i], self.root_lin_acc[i])
        contacts = None if self.contacts is None else self.contacts[i]
        return MotionFrame(float(self.times[i]), pose, rates, accel, contacts)

    def copy(self) -> "MotionClip":
        opt = {
            k: (getattr(self, k).copy() if getattr(self, k) is not None else None)
            for k in (
                "root_lin_vel",
                "root_ang_vel",
                "joint_vel",
                "root_lin_acc",
                "root_ang_acc",
                "joint_acc",
                "contacts",
            )
        }
        return MotionClip(
            self.times.copy(),
            self.root_pos.copy(),
            self.root_quat.copy(),
            self.joints.copy(),
            self.frame_rate,
            meta=dict(self.meta),
            **opt,
        )


def quaternion_distance(a, b) -> float:
    """Rotation angle between unit quaternions, arccos(2<a,b>^2 - 1)."""
    dot = float(np.dot(np.asarray(a, dtype=float), np.asarray(b, dtype=float)))
    return float(np.arccos(np.clip(2.0 * dot * dot - 1.0, -1.0, 1.0)))


def _diff_step(frame_rate: float, n: int) -> int:
    k = max(1, int(round(DIFF_STEP_SECONDS * frame_rate)))
    return min(k, n - 1)


def _diff_spans(n: int, k: int):
    idx = np.arange(n)
    return np.minimum(idx + k, n - 1), np.maximum(idx - k, 0)


def series_derivative(values: np.ndarray, times: np.ndarray, k: int) -> np.ndarray:
    """k-step differences: central in the interior, one-sided at the ends."""
    values = np.asarray(values, dtype=float)
    j_hi, j_lo = _diff_spans(len(values), k)
    span = (times[j_hi] - times[j_lo]).reshape((-1,) + (1,) * (values.ndim - 1))
    return (values[j_hi] - values[j_lo]) / span


def _quat_series_omega(quats: np.ndarray, times: np.ndarray, k: int) -> np.ndarray:
    """Body-frame angular velocity from a quaternion series."""
    j_hi, j_lo = _diff_spans(len(quats), k)
    rel = quat_mul(quat_conj(quats[j_lo]), quats[j_hi])
    return quat_to_rotvec(rel) / (times[j_hi] - times[j_lo])[:, None]


def finite_difference(clip: MotionClip) -> MotionClip:
    """Fill rates and accelerations by finite differences.

    Raises TooShort for clips with fewer than 3 frames.
    """
    n = len(clip)
    if n < 3:
        raise TooShort(f"need at least 3 frames, got {n}")
    k = _diff_step(clip.frame_rate, n)
    out = clip.copy()
    out.joint_vel = series_derivative(clip.joints, clip.times, k)
    out.root_lin_vel = series_derivative(clip.root_pos, clip.times, k)
    out.root_ang_vel = _quat_series_omega(clip.root_quat, clip.times, k)
    out.joint_acc = series_derivative(out.joint_vel, clip.times, k)
    out.root_lin_acc = series_derivative(out.root_lin_vel, clip.times, k)
    out.root_ang_acc = series_derivative(out.root_ang_vel, clip.times, k)
    return out


def gaussian_kernel(width: int = 5, sigma: float = 1.0) -> np.ndarray:
    half = width // 2
    x = np.arange(-half, half + 1, dtype=float)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def smooth_columns(values: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Convolve each column with the kernel (edges renormalized)."""
    values = np.asarray(values, dtype=float)
    n = len(values)
    ones = np.convolve(np.ones(n), kernel, mode="same")
    out = np.empty_like(values)
    for c in range(values.shape[1]):
        out[:, c] = np.convolve(values[:, c], kernel, mode="same") / ones
    return out


def smoothed_noise(shape, std: float, rng: np.random.Generator, width: int = 5) -> np.ndarray:
    """Gaussian noise low-passed over `width` frames, rescaled to std."""
    raw = rng.normal(0.0, 1.0, size=shape)
    if std == 0.0:
        return np.zeros(shape)
    kernel = gaussian_kernel(width)
    sm = smooth_columns(raw, kernel)
    return sm * (std / np.sqrt(np.sum(kernel**2)))


def inject_noise(clip: MotionClip, magnitude: float, rng: np.random.Generator) -> MotionClip:
    """Perturb joint angles with smoothed noise of the given std; rederive rates."""
    if magnitude < 0:
        raise ValueError("noise magnitude must be >= 0")
    out = clip.copy()
    if magnitude == 0.0:
        return out
    out.joints = out.joints + smoothed_noise(out.joints.shape, magnitude, rng)
    return finite_difference(out)


def rate_limit(prev: Pose, proposed: Pose, dt: float, limit: float) -> Pose:
    """Clip proposed joints to within +-limit*dt of prev; root passes through."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    step = limit * dt
    joints = np.clip(proposed.joints, prev.joints - step, prev.joints + step)
    return Pose(proposed.root_position, proposed.root_quat, joints)


def save_clip(clip: MotionClip, path, include_rates: bool = False) -> None:
    """Write a clip as JSON-lines, one frame per line."""
    with open(path, "w") as fh:
        fh.write(json.dumps({"frame_rate": clip.frame_rate, "n": len(clip)}) + "\n")
        for i in range(len(clip)):
            row = {
                "t": float(clip.times[i]),
                "root_pos": clip.root_pos[i].tolist(),
                "root_quat": clip.root_quat[i].tolist(),
                "joints": clip.joints[i].tolist(),
            }
            if clip.contacts is not None:
                row["contacts"] = clip.contacts[i].tolist()
            if include_rates and clip.has_rates:
                row["root_lin_vel"] = clip.root_lin_vel[i].tolist()
                row["root_ang_vel"] = clip.root_ang_vel[i].tolist()
                row["joint_vel"] = clip.joint_vel[i].tolist()
                row["root_lin_acc"] = clip.root_lin_acc[i].tolist()
                row["root_ang_acc"] = clip.root_ang_acc[i].tolist()
                row["joint_acc"] = clip.joint_acc[i].tolist()
            fh.write(json.dumps(row) + "\n")


def save_human_clip(frames, path, frame_rate: float = 30.0) -> None:
    """Write human feature frames as JSON-lines."""
    with open(path, "w") as fh:
        fh.write(json.dumps({"frame_rate": frame_rate, "n": len(frames), "dim": HUMAN_FEATURE_DIM}) + "\n")
        for i, f in enumerate(frames):
            fh.write(
                json.dumps(
                    {
                        "t": i / frame_rate,
                        "f": f.features.tolist(),
                        "df": f.dfeatures.tolist(),
                        "ddf": f.ddfeatures.tolist(),
                    }
                )
                + "\n"
            )


def load_human_clip(path):
    with open(path) as fh:
        fh.readline()
        frames = []
        for line in fh:
            if not line.strip():
                continue
            r = json.loads(line)
            frames.append(HumanFrame(np.array(r["f"]), np.array(r["df"]), np.array(r["ddf"])))
    if not frames:
        raise ValueError(f"empty human clip file: {path}")
    return frames


def load_clip(path) -> MotionClip:
    """Read a JSON-lines clip; rates are recomputed when absent."""
    with open(path) as fh:
        header = json.loads(fh.readline())
        rows = [json.loads(line) for line in fh if line.strip()]
    if not rows:
        raise ValueError(f"empty clip file: {path}")
    clip = MotionClip(
        times=np.array([r["t"] for r in rows]),
        root_pos=np.array([r["root_pos"] for r in rows]),
        root_quat=np.array([r["root_quat"] for r in rows]),
        joints=np.array([r["joints"] for r in rows]),
        frame_rate=float(header["frame_rate"]),
        contacts=np.array([r["contacts"] for r in rows]) if "contacts" in rows[0] else None,
    )
    if "joint_vel" in rows[0]:
        clip.root_lin_vel = np.array([r["root_lin_vel"] for r in rows])
        clip.root_ang_vel = np.array([r["root_ang_vel"] for r in rows])
        clip.joint_vel = np.array([r["joint_vel"] for r in rows])
        clip.root_lin_acc = np.array([r["root_lin_acc"] for r in rows])
        clip.root_ang_acc = np.array([r["root_ang_acc"] for r in rows])
        clip.joint_acc = np.array([r["joint_acc"] for r in rows])
    elif len(clip) >= 3:
        clip = finite_difference(clip)
    return clip
