"""Deterministic surrogate plant for motion-imitation training.

Joint dynamics are per-joint PD with torque and speed clamps plus a
gravity load term (the ground reaction at each stance foot pulled through
the leg Jacobian), integrated with substepped semi-implicit Euler. The
base is solved quasi-statically: stance feet (from the reference's contact
labels) stick to world anchors on a sloped plane, a 2D fit recovers yaw
and translation, the stance-feet plane fixes roll and pitch, and wobble
noise grows with the distance of the trunk projection outside the support
hull. Commanded tangential foot speed beyond the friction budget slides
the anchors.

Everything is vectorized over environments; one instance steps a whole
batch with a single rng stream, so runs are reproducible given the seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kinematics import QuadrupedModel, fk_body, hull_distance_2d, legs_jacobian
from .rotations import (
    quat_from_axis_angle,
    quat_from_rotvec,
    quat_mul,
    quat_normalize,
    quat_rotate,
    quat_rotate_inv,
    quat_to_euler,
    rotation_between,
    split_heading,
)

KP = 40.0
KD = 1.0
JOINT_INERTIA = 0.006  # kg m^2, reflected at the joint
TORQUE_LIMIT = 33.5  # N m
SPEED_LIMIT = 21.0  # rad/s
ROBOT_WEIGHT = 120.0  # N, nominal supported weight
WOBBLE_GAIN = 0.8  # rad of attitude noise per metre outside the hull
SLIP_SPEED = 0.5  # m/s, friction=1 tangential budget for stance feet
SENSOR_NOISE = 0.01
SUBSTEPS = 8


@dataclass
class PlantState:
    """Single-environment snapshot of the surrogate plant."""

    joints: np.ndarray
    joint_velocities: np.ndarray
    joint_accelerations: np.ndarray
    root_position: np.ndarray
    root_quat: np.ndarray
    contact_mask: np.ndarray  # (4,) bool, stance feet
    contact_points: np.ndarray  # (4, 2) world xy anchors
    time: float
    fallen: bool


class VectorPlant:
    """Batch of surrogate plants stepped in lockstep."""

    def __init__(self, model: QuadrupedModel, n_envs: int, dt: float = 1.0 / 30.0, substeps: int = SUBSTEPS):
        self.model = model
        self.n = n_envs
        self.dt = dt
        self.substeps = substeps
        n = n_envs
        self.theta = np.zeros((n, 12))
        self.dtheta = np.zeros((n, 12))
        self.ddtheta = np.zeros((n, 12))
        self.root_pos = np.zeros((n, 3))
        self.root_quat = np.tile([1.0, 0.0, 0.0, 0.0], (n, 1))
        self.prev_rp = np.zeros((n, 2))
        self.rp_rate = np.zeros((n, 2))
        self.anchors = np.zeros((n, 4, 2))
        self.stance = np.zeros((n, 4), dtype=bool)
        self.prev_target = np.zeros((n, 12))
        self.time = np.zeros(n)
        # domain arrays
        self.mass_scale = np.ones(n)
        self.friction = np.ones(n)
        self.p_gain = np.ones(n)
        self.d_gain = np.ones(n)
        self.delay = np.zeros(n)
        self.slope_grad = np.zeros((n, 2))  # plane height = grad . xy

    # -- domain helpers ----------------------------------------------------

    def set_domain(self, idx, mass_scale, friction, p_gain, d_gain, delay, slope, slope_dir):
        self.mass_scale[idx] = mass_scale
        self.friction[idx] = friction
        self.p_gain[idx] = p_gain
        self.d_gain[idx] = d_gain
        self.delay[idx] = delay
        self.slope_grad[idx, 0] = np.tan(slope) * np.cos(slope_dir)
        self.slope_grad[idx, 1] = np.tan(slope) * np.sin(slope_dir)

    def plane_height(self, idx, xy):
        return xy @ self.slope_grad[idx]

    def _plane_normal(self, idx):
        g = self.slope_grad[idx]
        n = np.concatenate([-g, np.ones(g.shape[:-1] + (1,))], axis=-1)
        return n / np.linalg.norm(n, axis=-1, keepdims=True)

    # -- lifecycle ----------------------------------------------------------

    def reset_env(self, i: int, joints, root_pos, root_quat, contacts) -> None:
        """Place env i at a reference frame with stance feet anchored."""
        self.theta[i] = joints
        self.dtheta[i] = 0.0
        self.ddtheta[i] = 0.0
        self.root_pos[i] = root_pos
        self.root_quat[i] = quat_normalize(root_quat)
        self.prev_target[i] = joints
        self.stance[i] = np.asarray(contacts, dtype=float) > 0.5
        feet_w = root_pos + quat_rotate(self.root_quat[i], fk_body(self.model, self.theta[i]))
        self.anchors[i] = feet_w[:, :2]
        roll, pitch, _ = quat_to_euler(self.root_quat[i])
        self.prev_rp[i] = (roll, pitch)
        self.rp_rate[i] = 0.0
        self.time[i] = 0.0
        # settle the base once so height matches the sloped plane
        rows = np.array([i])
        self._solve_base(rows, None, fk_body(self.model, self.theta[rows]))
        roll, pitch, _ = quat_to_euler(self.root_quat[i])
        self.prev_rp[i] = (roll, pitch)

    def settle(self, i: int, hold_target, contacts, frames: int = 10) -> None:
        """Run a few noiseless control periods so env i starts gravity-settled."""
        rows = np.array([i])
        target = np.asarray(hold_target, dtype=float)
        self.stance[i] = np.asarray(contacts, dtype=float) > 0.5
        kp = KP * self.p_gain[i]
        kd = KD * self.d_gain[i]
        inertia = JOINT_INERTIA * self.mass_scale[i]
        h = self.dt / self.substeps
        n_stance = max(int(self.stance[i].sum()), 1)
        for _ in range(frames):
            feet_b = fk_body(self.model, self.theta[i])
            jac = legs_jacobian(self.model, self.theta[i])
            f_world = np.array([0.0, 0.0, ROBOT_WEIGHT * self.mass_scale[i] / n_stance])
            f_body = quat_rotate_inv(self.root_quat[i], f_world)
            tau_g = (np.einsum("lkj,k->lj", jac, f_body) * self.stance[i][:, None]).reshape(12)
            for _ in range(self.substeps):
                tau = np.clip(kp * (target - self.theta[i]) - kd * self.dtheta[i] + tau_g, -TORQUE_LIMIT, TORQUE_LIMIT)
                self.dtheta[i] = np.clip(self.dtheta[i] + (tau / inertia) * h, -SPEED_LIMIT, SPEED_LIMIT)
                self.theta[i] = self.theta[i] + self.dtheta[i] * h
            self._solve_base(rows, None, fk_body(self.model, self.theta[rows]))
        self.dtheta[i] = 0.0
        self.ddtheta[i] = 0.0
        roll, pitch, _ = quat_to_euler(self.root_quat[i])
        self.prev_rp[i] = (roll, pitch)
        self.rp_rate[i] = 0.0
        self.prev_target[i] = target

    # -- dynamics -----------------------------------------------------------

    def _gravity_torque(self):
        """Stance-foot ground reactions pulled through the leg Jacobians."""
        feet_b = fk_body(self.model, self.theta)
        jac = legs_jacobian(self.model, self.theta)
        n_stance = np.maximum(self.stance.sum(axis=1), 1)
        share = ROBOT_WEIGHT * self.mass_scale / n_stance  # (n,)
        f_world = np.zeros((self.n, 3))
        f_world[:, 2] = share
        f_body = quat_rotate_inv(self.root_quat, f_world)  # (n, 3)
        tau = np.einsum("nlkj,nk->nlj", jac, f_body)  # (n, 4, 3)
        tau *= self.stance[:, :, None]
        return tau.reshape(self.n, 12), feet_b, jac

    def step(self, targets, ref_contacts, rng: np.random.Generator | None):
        """Advance one control period; returns the 16-dim sensor batch."""
        targets = np.asarray(targets, dtype=float)
        frac = np.clip(self.delay / self.dt, 0.0, 1.0)[:, None]
        u = (1.0 - frac) * targets + frac * self.prev_target
        self.prev_target = targets.copy()

        tau_g, _, _ = self._gravity_torque()
        kp = KP * self.p_gain[:, None]
        kd = KD * self.d_gain[:, None]
        inertia = JOINT_INERTIA * self.mass_scale[:, None]
        h = self.dt / self.substeps
        theta0_rate = self.dtheta.copy()
        for _ in range(self.substeps):
            tau = np.clip(kp * (u - self.theta) - kd * self.dtheta + tau_g, -TORQUE_LIMIT, TORQUE_LIMIT)
            self.dtheta = np.clip(self.dtheta + (tau / inertia) * h, -SPEED_LIMIT, SPEED_LIMIT)
            self.theta = self.theta + self.dtheta * h
        self.ddtheta = (self.dtheta - theta0_rate) / self.dt

        feet_b = fk_body(self.model, self.theta)
        jac = legs_jacobian(self.model, self.theta)
        new_stance = np.asarray(ref_contacts, dtype=float) > 0.5
        touchdown = new_stance & ~self.stance
        if np.any(touchdown):
            feet_w = self.root_pos[:, None, :] + quat_rotate(self.root_quat[:, None, :], feet_b)
            self.anchors[touchdown] = feet_w[touchdown][:, :2]
        self.stance = new_stance

        # slip: commanded tangential foot speed above the friction budget
        foot_vel_b = np.einsum("nljk,nlk->nlj", jac, self.dtheta.reshape(self.n, 4, 3))
        foot_vel_w = quat_rotate(self.root_quat[:, None, :], foot_vel_b)[:, :, :2]
        speed = np.linalg.norm(foot_vel_w, axis=2)
        budget = (self.friction * SLIP_SPEED)[:, None]
        excess = np.maximum(speed - budget, 0.0) * self.stance
        sliding = excess > 0.0
        if np.any(sliding):
            direction = foot_vel_w / np.maximum(speed[:, :, None], 1e-9)
            self.anchors = self.anchors + direction * (excess * self.dt)[:, :, None]

        wobble = rng.normal(0.0, 1.0, size=(self.n, 2)) if rng is not None else None
        self.last_hull_distance = self._solve_base(np.arange(self.n), wobble, feet_b)

        roll, pitch, _ = quat_to_euler(self.root_quat)
        rp = np.stack([roll, pitch], axis=1)
        self.rp_rate = (rp - self.prev_rp) / self.dt
        self.prev_rp = rp
        self.time = self.time + self.dt

        sensors = np.concatenate([self.theta, rp, self.rp_rate], axis=1)
        if rng is not None:
            sensors = sensors + rng.normal(0.0, SENSOR_NOISE, size=sensors.shape)
        return sensors

    def _solve_base(self, rows, wobble, feet_b):
        """Quasi-static base fit: anchors pin xy/yaw, stance plane pins tilt.

        Operates on the given row subset; feet_b and wobble (unit-normal
        attitude noise, or None) are indexed the same way. Only the
        support-hull distance runs in a per-env loop.
        """
        rows = np.asarray(rows)
        m = len(rows)
        w = self.stance[rows].astype(float)
        n_st = w.sum(axis=1)
        act = n_st > 0
        wsum = np.maximum(n_st, 1.0)[:, None]

        quat = self.root_quat[rows]
        p_xy = quat_rotate(quat[:, None, :], feet_b)[:, :, :2]
        rel = self.anchors[rows] - self.root_pos[rows][:, None, :2]
        cp = (p_xy * w[:, :, None]).sum(axis=1) / wsum
        ca = (rel * w[:, :, None]).sum(axis=1) / wsum
        dp = (p_xy - cp[:, None, :]) * w[:, :, None]
        da = (rel - ca[:, None, :]) * w[:, :, None]
        cross = (dp[:, :, 0] * da[:, :, 1] - dp[:, :, 1] * da[:, :, 0]).sum(axis=1)
        dot = (dp * da).sum(axis=(1, 2))
        dpsi = np.where(np.abs(cross) + np.abs(dot) > 1e-12, np.arctan2(cross, dot), 0.0)
        c, s = np.cos(dpsi), np.sin(dpsi)
        shift = ca - np.stack([c * cp[:, 0] - s * cp[:, 1], s * cp[:, 0] + c * cp[:, 1]], axis=1)
        new_xy = self.root_pos[rows, :2] + np.where(act[:, None], shift, 0.0)
        self.root_pos[rows, :2] = new_xy

        heading, tilt = split_heading(quat)
        yaw_quat = quat_mul(quat_from_axis_angle(np.array([0.0, 0.0, 1.0]), dpsi), heading)
        cfeet = (feet_b * w[:, :, None]).sum(axis=1) / wsum
        centered = (feet_b - cfeet[:, None, :]) * w[:, :, None]
        _, _, vt = np.linalg.svd(centered, full_matrices=False)
        normal = vt[:, -1, :]
        normal = np.where(normal[:, 2:3] < 0.0, -normal, normal)
        norm = np.linalg.norm(normal, axis=1, keepdims=True)
        normal = np.where(norm > 1e-12, normal / np.maximum(norm, 1e-300), np.array([0.0, 0.0, 1.0]))
        v = quat_rotate(yaw_quat, normal)
        align = rotation_between(v, self._plane_normal(rows))
        q_plane = quat_mul(align, yaw_quat)
        q_hold = quat_mul(yaw_quat, tilt)
        new_q = np.where((n_st >= 3)[:, None], q_plane, q_hold)

        d_out = np.zeros(m)
        for j in range(m):
            i = rows[j]
            if act[j]:
                d_out[j] = hull_distance_2d(self.anchors[i][self.stance[i]], self.root_pos[i, :2])
        if wobble is not None:
            wob = wobble * (WOBBLE_GAIN * d_out)[:, None]
            wob_q = quat_from_rotvec(np.concatenate([wob, np.zeros((m, 1))], axis=1))
            new_q = quat_mul(new_q, wob_q)
        new_q = quat_normalize(new_q)
        self.root_quat[rows] = np.where(act[:, None], new_q, self.root_quat[rows])

        # the trunk rests on the most extended stance leg: no foot may end
        # below the plane, the rest dangle
        rz = quat_rotate(self.root_quat[rows][:, None, :], feet_b)[:, :, 2]
        plane_z = np.einsum("nlk,nk->nl", self.anchors[rows], self.slope_grad[rows])
        candidates = np.where(w > 0.0, plane_z - rz, -np.inf)
        zroot = candidates.max(axis=1)
        self.root_pos[rows, 2] = np.where(act, zroot, self.root_pos[rows, 2])
        return d_out

    # -- views ----------------------------------------------------------------

    def height_above_plane(self):
        return self.root_pos[:, 2] - np.einsum("nk,nk->n", self.root_pos[:, :2], self.slope_grad)

    def state(self, i: int) -> PlantState:
        roll, pitch, _ = quat_to_euler(self.root_quat[i])
        fallen = bool(self.height_above_plane()[i] < 0.12 or abs(roll) > 0.8 or abs(pitch) > 0.8)
        return PlantState(
            self.theta[i].copy(),
            self.dtheta[i].copy(),
            self.ddtheta[i].copy(),
            self.root_pos[i].copy(),
            self.root_quat[i].copy(),
            self.stance[i].copy(),
            self.anchors[i].copy(),
            float(self.time[i]),
            fallen,
        )
