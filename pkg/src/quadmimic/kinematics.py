"""Rigid-body kinematics for an A1-like quadruped.

Leg order is [FR, FL, RR, RL]; each leg has [abduction, hip, knee] joints.
The zero pose points every leg straight down, so with all joints at zero a
foot sits at hip + (0, side*abduction_offset, -(thigh+calf)) in the body
frame. Abduction rotates about body x, hip and knee about body y.

All operations are pure; vectorized cores accept stacked joint arrays with
arbitrary leading dimensions.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .rotations import quat_normalize, quat_rotate, quat_rotate_inv

LEG_NAMES = ("FR", "FL", "RR", "RL")


class Unreachable(Exception):
    """IK target is outside the leg workspace."""


@dataclass(frozen=True)
class QuadrupedModel:
    hip_positions: np.ndarray  # (4, 3) body frame, m
    abduction_offset: float  # lateral hip-to-leg-plane offset, m
    thigh_length: float
    calf_length: float
    joint_limits: np.ndarray  # (12, 2) rad
    joint_velocity_limit: float  # rad/s
    trunk_height_nominal: float
    foot_radius: float

    def __post_init__(self):
        object.__setattr__(self, "hip_positions", np.asarray(self.hip_positions, dtype=float))
        object.__setattr__(self, "joint_limits", np.asarray(self.joint_limits, dtype=float))
        if self.thigh_length <= 0 or self.calf_length <= 0:
            raise ValueError("link lengths must be positive")
        if np.any(self.joint_limits[:, 0] >= self.joint_limits[:, 1]):
            raise ValueError("joint limits must satisfy lo < hi")
        if self.joint_velocity_limit <= 0:
            raise ValueError("joint_velocity_limit must be positive")

    @property
    def side_signs(self) -> np.ndarray:
        """+1 for left legs, -1 for right legs (from hip y sign)."""
        return np.sign(self.hip_positions[:, 1])

    @property
    def max_reach(self) -> float:
        return float(np.hypot(self.abduction_offset, self.thigh_length + self.calf_length))

    @classmethod
    def default(cls) -> "QuadrupedModel":
        limits = np.array([[-0.80, 0.80], [-2.20, 2.20], [-2.70, 0.30]] * 4)
        return cls(
            hip_positions=np.array(
                [
                    [0.183, -0.132, 0.0],
                    [0.183, 0.132, 0.0],
                    [-0.183, -0.132, 0.0],
                    [-0.183, 0.132, 0.0],
                ]
            ),
            abduction_offset=0.08,
            thigh_length=0.2,
            calf_length=0.2,
            joint_limits=limits,
            joint_velocity_limit=np.deg2rad(120.0),
            trunk_height_nominal=0.30,
            foot_radius=0.02,
        )

    @classmethod
    def from_config(cls, path) -> "QuadrupedModel":
        """Load model constants from a key/value text file.

        Recognised keys: hip_fr, hip_fl, hip_rr, hip_rl (3 floats each),
        abduction_offset, thigh_length, calf_length, abduction_range,
        hip_range, knee_range (lo hi), joint_velocity_limit,
        trunk_height_nominal, foot_radius. Missing keys fall back to the
        defaults.
        """
        values = parse_config_text(open(path).read())
        base = cls.default()
        hips = np.array(
            [
                values.get("hip_fr", base.hip_positions[0]),
                values.get("hip_fl", base.hip_positions[1]),
                values.get("hip_rr", base.hip_positions[2]),
                values.get("hip_rl", base.hip_positions[3]),
            ],
            dtype=float,
        )
        abd = values.get("abduction_range", base.joint_limits[0])
        hip = values.get("hip_range", base.joint_limits[1])
        knee = values.get("knee_range", base.joint_limits[2])
        limits = np.array([abd, hip, knee] * 4, dtype=float)
        return cls(
            hip_positions=hips,
            abduction_offset=float(values.get("abduction_offset", base.abduction_offset)),
            thigh_length=float(values.get("thigh_length", base.thigh_length)),
            calf_length=float(values.get("calf_length", base.calf_length)),
            joint_limits=limits,
            joint_velocity_limit=float(values.get("joint_velocity_limit", base.joint_velocity_limit)),
            trunk_height_nominal=float(values.get("trunk_height_nominal", base.trunk_height_nominal)),
            foot_radius=float(values.get("foot_radius", base.foot_radius)),
        )

    def content_hash(self) -> str:
        payload = json.dumps(
            {
                "hips": self.hip_positions.tolist(),
                "abd": self.abduction_offset,
                "thigh": self.thigh_length,
                "calf": self.calf_length,
                "limits": self.joint_limits.tolist(),
                "jvl": self.joint_velocity_limit,
                "trunk": self.trunk_height_nominal,
                "foot_radius": self.foot_radius,
            },
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


def parse_config_text(text: str) -> dict:
    """Parse 'key = v [v ...]' lines; '#' starts a comment."""
    out = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"bad config line: {raw!r}")
        key, _, rhs = line.partition("=")
        parts = rhs.replace(",", " ").split()
        vals = []
        for p in parts:
            try:
                vals.append(float(p))
            except ValueError:
                vals.append(p)
        out[key.strip()] = vals[0] if len(vals) == 1 else vals
    return out


@dataclass
class Pose:
    root_position: np.ndarray  # (3,) world, m
    root_quat: np.ndarray  # (4,) [w,x,y,z] unit
    joints: np.ndarray  # (12,) rad

    def __post_init__(self):
        self.root_position = np.asarray(self.root_position, dtype=float)
        self.root_quat = quat_normalize(self.root_quat)
        self.joints = np.asarray(self.joints, dtype=float)

    def copy(self) -> "Pose":
        return Pose(self.root_position.copy(), self.root_quat.copy(), self.joints.copy())


@dataclass
class PoseRates:
    """First (or second) time derivatives of a pose.

    root_angular_velocity is body-frame; root_linear_velocity is world-frame
    and defaults to zero for poses with a fixed root.
    """

    root_angular_velocity: np.ndarray  # (3,) rad/s
    joint_velocities: np.ndarray  # (12,) rad/s
    root_linear_velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.root_angular_velocity = np.asarray(self.root_angular_velocity, dtype=float)
        self.joint_velocities = np.asarray(self.joint_velocities, dtype=float)
        self.root_linear_velocity = np.asarray(self.root_linear_velocity, dtype=float)

    @classmethod
    def zero(cls) -> "PoseRates":
        return cls(np.zeros(3), np.zeros(12))


def fk_body(model: QuadrupedModel, joints) -> np.ndarray:
    """Foot positions in the body frame for joints shaped (..., 12)."""
    q = np.asarray(joints, dtype=float).reshape(np.shape(joints)[:-1] + (4, 3))
    q0, q1, q2 = q[..., 0], q[..., 1], q[..., 2]
    l1, l2 = model.thigh_length, model.calf_length
    d = model.abduction_offset * model.side_signs  # (4,)
    tx = -l1 * np.sin(q1) - l2 * np.sin(q1 + q2)
    tz = -l1 * np.cos(q1) - l2 * np.cos(q1 + q2)
    c0, s0 = np.cos(q0), np.sin(q0)
    feet = np.stack([tx, c0 * d - s0 * tz, s0 * d + c0 * tz], axis=-1)
    return model.hip_positions + feet


def forward_kinematics(model: QuadrupedModel, pose: Pose):
    """Return (feet_world, feet_body), each (4, 3)."""
    feet_body = fk_body(model, pose.joints)
    feet_world = pose.root_position + quat_rotate(pose.root_quat, feet_body)
    return feet_world, feet_body


def legs_jacobian(model: QuadrupedModel, joints) -> np.ndarray:
    """Body-frame foot Jacobians d(foot)/d(leg joints), shaped (..., 4, 3, 3)."""
    q = np.asarray(joints, dtype=float).reshape(np.shape(joints)[:-1] + (4, 3))
    q0, q1, q2 = q[..., 0], q[..., 1], q[..., 2]
    l1, l2 = model.thigh_length, model.calf_length
    d = model.abduction_offset * model.side_signs
    s1, c1 = np.sin(q1), np.cos(q1)
    s12, c12 = np.sin(q1 + q2), np.cos(q1 + q2)
    c0, s0 = np.cos(q0), np.sin(q0)

    tx = -l1 * s1 - l2 * s12
    tz = -l1 * c1 - l2 * c12
    vy = c0 * d - s0 * tz
    vz = s0 * d + c0 * tz

    # d/dq0 = x_hat x v (rotation about body x at the hip)
    col0 = np.stack([np.zeros_like(vy), -vz, vy], axis=-1)
    # planar columns rotated out of the sagittal plane by abduction
    dx1 = -l1 * c1 - l2 * c12
    dz1 = l1 * s1 + l2 * s12
    col1 = np.stack([dx1, -s0 * dz1, c0 * dz1], axis=-1)
    dx2 = -l2 * c12
    dz2 = l2 * s12
    col2 = np.stack([dx2, -s0 * dz2, c0 * dz2], axis=-1)
    return np.stack([col0, col1, col2], axis=-1)


def leg_jacobian(model: QuadrupedModel, pose: Pose, leg: int) -> np.ndarray:
    if not 0 <= leg < 4:
        raise IndexError("leg index must be in 0..3")
    return legs_jacobian(model, pose.joints)[leg]


def _legs_jacobian_dot(model, joints, joint_velocities):
    """Time derivative of the body-frame leg Jacobians, (..., 4, 3, 3)."""
    q = np.asarray(joints, dtype=float).reshape(np.shape(joints)[:-1] + (4, 3))
    qd = np.asarray(joint_velocities, dtype=float).reshape(q.shape)
    q0, q1, q2 = q[..., 0], q[..., 1], q[..., 2]
    d0, d1, d2 = qd[..., 0], qd[..., 1], qd[..., 2]
    l1, l2 = model.thigh_length, model.calf_length
    d = model.abduction_offset * model.side_signs
    s1, c1 = np.sin(q1), np.cos(q1)
    s12, c12 = np.sin(q1 + q2), np.cos(q1 + q2)
    c0, s0 = np.cos(q0), np.sin(q0)
    d12 = d1 + d2

    tx = -l1 * s1 - l2 * s12
    tz = -l1 * c1 - l2 * c12
    txd = (-l1 * c1) * d1 + (-l2 * c12) * d12
    tzd = (l1 * s1) * d1 + (l2 * s12) * d12
    vyd = (-s0 * d - c0 * tz) * d0 - s0 * tzd
    vzd = (c0 * d - s0 * tz) * d0 + c0 * tzd
    col0 = np.stack([np.zeros_like(vyd), -vzd, vyd], axis=-1)

    dx1 = -l1 * c1 - l2 * c12
    dz1 = l1 * s1 + l2 * s12
    dx1d = (l1 * s1) * d1 + (l2 * s12) * d12
    dz1d = (l1 * c1) * d1 + (l2 * c12) * d12
    col1 = np.stack(
        [dx1d, -c0 * d0 * dz1 - s0 * dz1d, -s0 * d0 * dz1 + c0 * dz1d], axis=-1
    )

    dx2 = -l2 * c12
    dz2 = l2 * s12
    dx2d = (l2 * s12) * d12
    dz2d = (l2 * c12) * d12
    col2 = np.stack(
        [dx2d, -c0 * d0 * dz2 - s0 * dz2d, -s0 * d0 * dz2 + c0 * dz2d], axis=-1
    )
    return np.stack([col0, col1, col2], axis=-1)


def foot_rates_body(model, joints, omega, joint_velocities, alpha=None, joint_accelerations=None):
    """Body-frame foot velocities (and accelerations) about the root origin.

    omega/alpha are body-frame root angular velocity/acceleration. Returns
    (vel (...,4,3), acc (...,4,3) or None).
    """
    joints = np.asarray(joints, dtype=float)
    omega = np.asarray(omega, dtype=float)
    qd = np.asarray(joint_velocities, dtype=float).reshape(joints.shape[:-1] + (4, 3))
    p = fk_body(model, joints)
    jac = legs_jacobian(model, joints)
    jqd = np.einsum("...ijk,...ik->...ij", jac, qd)
    vel = np.cross(omega[..., None, :], p) + jqd
    if alpha is None:
        return vel, None
    alpha = np.asarray(alpha, dtype=float)
    qdd = np.asarray(joint_accelerations, dtype=float).reshape(qd.shape)
    jdot = _legs_jacobian_dot(model, joints, joint_velocities)
    acc = (
        np.cross(alpha[..., None, :], p)
        + np.cross(omega[..., None, :], np.cross(omega[..., None, :], p))
        + 2.0 * np.cross(omega[..., None, :], jqd)
        + np.einsum("...ijk,...ik->...ij", jac, qdd)
        + np.einsum("...ijk,...ik->...ij", jdot, qd)
    )
    return vel, acc


def end_effector_rates(model: QuadrupedModel, pose: Pose, rates: PoseRates, accel: PoseRates | None = None):
    """World-frame foot velocities/accelerations, each (4, 3).

    Velocity: v_root + R (omega x p + J qdot). Acceleration adds the
    centripetal, Euler and Coriolis terms plus J qddot + Jdot qdot.
    """
    alpha = None if accel is None else accel.root_angular_velocity
    qdd = None if accel is None else accel.joint_velocities
    vel_b, acc_b = foot_rates_body(
        model, pose.joints, rates.root_angular_velocity, rates.joint_velocities, alpha, qdd
    )
    vel_w = rates.root_linear_velocity + quat_rotate(pose.root_quat, vel_b)
    if acc_b is None:
        return vel_w, None
    acc_w = accel.root_linear_velocity + quat_rotate(pose.root_quat, acc_b)
    return vel_w, acc_w


def _fk_leg(model, leg, q_leg):
    q = np.zeros(12)
    q[3 * leg : 3 * leg + 3] = q_leg
    return fk_body(model, q)[leg]


def solve_leg_ik(
    model: QuadrupedModel,
    base_pose: Pose,
    leg: int,
    target_foot_world,
    seed_joints=None,
    max_iters: int = 50,
    tol: float = 1e-4,
    damping: float = 1e-3,
):
    """Damped-least-squares IK for one leg; returns 3 joint angles.

    Damping adapts down with the residual so the solver keeps the base
    damping away from the solution but behaves like Newton close to it.
    Raises Unreachable when the target cannot be met within max_iters.
    """
    target_b = quat_rotate_inv(base_pose.root_quat, np.asarray(target_foot_world, dtype=float) - base_pose.root_position)
    if not np.all(np.isfinite(target_b)):
        raise ValueError("IK target must be finite")
    lims = model.joint_limits[3 * leg : 3 * leg + 3]
    if seed_joints is None:
        q = base_pose.joints[3 * leg : 3 * leg + 3].copy()
    else:
        q = np.asarray(seed_joints, dtype=float).copy()
    q = np.clip(q, lims[:, 0], lims[:, 1])

    best_q, best_err = q.copy(), np.inf
    for _ in range(max_iters):
        err = target_b - _fk_leg(model, leg, q)
        err_norm = float(np.linalg.norm(err))
        if err_norm < best_err:
            best_err, best_q = err_norm, q.copy()
        if err_norm < 1e-10:
            break
        jac = legs_jacobian(model, _expand_leg(q, leg))[leg]
        lam = max(min(damping, err_norm), 1e-6)
        jjt = jac @ jac.T + lam * lam * np.eye(3)
        step = jac.T @ np.linalg.solve(jjt, err)
        norm = np.linalg.norm(step)
        if norm > 0.6:
            step *= 0.6 / norm
        q = np.clip(q + step, lims[:, 0], lims[:, 1])
    if best_err > tol:
        raise Unreachable(f"leg {leg}: residual {best_err:.2e} m after {max_iters} iterations")
    return best_q


def _expand_leg(q_leg, leg):
    q = np.zeros(12)
    q[3 * leg : 3 * leg + 3] = q_leg
    return q


def hull_distance_2d(points, p) -> float:
    """Distance from p to the convex hull of points (0 inside or on it)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    p = np.asarray(p, dtype=float)
    if len(pts) == 1:
        return float(np.linalg.norm(p - pts[0]))
    hull = _convex_hull(pts)
    if len(hull) == 1:
        return float(np.linalg.norm(p - hull[0]))
    if len(hull) == 2:
        return _segment_distance(p, hull[0], hull[1])
    inside = True
    for i in range(len(hull)):
        a, b = hull[i], hull[(i + 1) % len(hull)]
        e, r = b - a, p - a
        if e[0] * r[1] - e[1] * r[0] < 0.0:
            inside = False
            break
    if inside:
        return 0.0
    return min(
        _segment_distance(p, hull[i], hull[(i + 1) % len(hull)]) for i in range(len(hull))
    )


def _convex_hull(pts):
    """Monotone chain; returns CCW hull vertices (collinear inputs give 2)."""
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    pts = pts[order]
    keep = [0] + [i for i in range(1, len(pts)) if np.any(pts[i] != pts[i - 1])]
    pts = pts[keep]
    if len(pts) <= 2:
        return pts

    def build(seq):
        out = []
        for q in seq:
            while len(out) >= 2:
                u, v = out[-1] - out[-2], q - out[-2]
                if u[0] * v[1] - u[1] * v[0] > 1e-18:
                    break
                out.pop()
            out.append(q)
        return out

    lower = build(pts)
    upper = build(pts[::-1])
    hull = lower[:-1] + upper[:-1]
    if len(hull) < 2:
        return pts[:2] if len(pts) >= 2 else pts
    return np.array(hull)


def _segment_distance(p, a, b) -> float:
    ab = b - a
    denom = float(ab @ ab)
    if denom < 1e-18:
        return float(np.linalg.norm(p - a))
    t = np.clip((p - a) @ ab / denom, 0.0, 1.0)
    return float(np.linalg.norm(p - (a + t * ab)))


def support_polygon_distance(
    model: QuadrupedModel,
    pose: Pose,
    contact_flags,
    required_contacts: int = 3,
) -> float:
    """Distance from the trunk-center ground projection to the support hull.

    Zero when fewer than required_contacts feet are in contact, or when the
    projection lies inside (or on) the hull of the contact feet.
    """
    flags = np.asarray(contact_flags, dtype=bool)
    if int(flags.sum()) < required_contacts:
        return 0.0
    feet_world, _ = forward_kinematics(model, pose)
    return hull_distance_2d(feet_world[flags][:, :2], pose.root_position[:2])
