"""Quaternion and rotation helpers.

Quaternions are stored as [w, x, y, z] float64 arrays. All functions
broadcast over leading dimensions, so the same code serves single poses
and batched trajectories. Angular velocities are body-frame unless a
caller says otherwise.
"""

from __future__ import annotations

import numpy as np

IDENTITY_QUAT = np.array([1.0, 0.0, 0.0, 0.0])


def quat_normalize(q):
    q = np.asarray(q, dtype=float)
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def quat_conj(q):
    q = np.asarray(q, dtype=float)
    out = q.copy()
    out[..., 1:] = -out[..., 1:]
    return out


def quat_mul(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    aw, ax, ay, az = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    bw, bx, by, bz = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    return np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )


def quat_rotate(q, v):
    """Rotate vectors v by quaternions q (world_from_body convention)."""
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    u = q[..., 1:]
    w = q[..., :1]
    t = 2.0 * np.cross(u, v)
    return v + w * t + np.cross(u, t)


def quat_rotate_inv(q, v):
    return quat_rotate(quat_conj(q), v)


def quat_to_matrix(q):
    w, x, y, z = (np.asarray(q, dtype=float)[..., i] for i in range(4))
    m = np.empty(np.shape(w) + (3, 3))
    m[..., 0, 0] = 1 - 2 * (y * y + z * z)
    m[..., 0, 1] = 2 * (x * y - w * z)
    m[..., 0, 2] = 2 * (x * z + w * y)
    m[..., 1, 0] = 2 * (x * y + w * z)
    m[..., 1, 1] = 1 - 2 * (x * x + z * z)
    m[..., 1, 2] = 2 * (y * z - w * x)
    m[..., 2, 0] = 2 * (x * z - w * y)
    m[..., 2, 1] = 2 * (y * z + w * x)
    m[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return m


def quat_from_rotvec(r):
    r = np.asarray(r, dtype=float)
    angle = np.linalg.norm(r, axis=-1, keepdims=True)
    # sin(a/2)/a via sinc keeps the zero-angle limit exact.
    half_sinc = 0.5 * np.sinc(angle / (2.0 * np.pi))
    w = np.cos(angle / 2.0)
    return np.concatenate([w, half_sinc * r], axis=-1)


def quat_to_rotvec(q):
    q = np.asarray(q, dtype=float)
    q = np.where(q[..., :1] < 0.0, -q, q)  # canonical hemisphere
    vn = np.linalg.norm(q[..., 1:], axis=-1, keepdims=True)
    angle = 2.0 * np.arctan2(vn[..., 0], q[..., 0])[..., None]
    scale = np.where(vn > 1e-12, angle / np.maximum(vn, 1e-300), 2.0)
    return scale * q[..., 1:]


def quat_from_axis_angle(axis, angle):
    axis = np.asarray(axis, dtype=float)
    angle = np.asarray(angle, dtype=float)[..., None]
    return np.concatenate(
        [np.cos(angle / 2.0), np.sin(angle / 2.0) * axis], axis=-1
    )


def quat_from_euler(roll, pitch, yaw):
    """Intrinsic z-y-x (yaw, then pitch, then roll)."""
    qz = quat_from_axis_angle(np.array([0.0, 0.0, 1.0]), yaw)
    qy = quat_from_axis_angle(np.array([0.0, 1.0, 0.0]), pitch)
    qx = quat_from_axis_angle(np.array([1.0, 0.0, 0.0]), roll)
    return quat_mul(quat_mul(qz, qy), qx)


def quat_to_euler(q):
    """Return (roll, pitch, yaw) for the z-y-x convention."""
    w, x, y, z = (np.asarray(q, dtype=float)[..., i] for i in range(4))
    roll = np.arctan2(2 * (w * x + y * z), 1 - 2 * (x * x + y * y))
    pitch = np.arcsin(np.clip(2 * (w * y - z * x), -1.0, 1.0))
    yaw = np.arctan2(2 * (w * z + x * y), 1 - 2 * (y * y + z * z))
    return roll, pitch, yaw


def yaw_of(q):
    return quat_to_euler(q)[2]


def split_heading(q):
    """Split q into (heading, tilt) with q = heading * tilt, heading pure yaw."""
    yaw = yaw_of(q)
    heading = quat_from_axis_angle(np.array([0.0, 0.0, 1.0]), yaw)
    tilt = quat_mul(quat_conj(heading), q)
    return heading, quat_normalize(tilt)


def quat_slerp(a, b, u):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    dot = np.sum(a * b, axis=-1, keepdims=True)
    b = np.where(dot < 0.0, -b, b)
    dot = np.abs(dot)
    # Near-parallel quaternions fall back to lerp to avoid 0/0.
    theta = np.arccos(np.clip(dot, -1.0, 1.0))
    sin_theta = np.sin(theta)
    u = np.asarray(u, dtype=float)[..., None] if np.ndim(u) else u
    wa = np.where(sin_theta > 1e-9, np.sin((1 - u) * theta) / np.where(sin_theta > 1e-9, sin_theta, 1.0), 1 - u)
    wb = np.where(sin_theta > 1e-9, np.sin(u * theta) / np.where(sin_theta > 1e-9, sin_theta, 1.0), u)
    return quat_normalize(wa * a + wb * b)


def rotation_between(a, b):
    """Minimal rotation quaternion taking unit vector a to unit vector b."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    c = np.cross(a, b)
    d = np.sum(a * b, axis=-1, keepdims=True)
    w = 1.0 + d
    q = np.concatenate([w, c], axis=-1)
    n = np.linalg.norm(q, axis=-1, keepdims=True)
    # Antiparallel input: pick any perpendicular axis (x unless a is near x).
    flip = (n < 1e-9)[..., 0]
    if np.any(flip):
        q = q.copy()
        ref = np.where(np.abs(a[..., :1]) < 0.9, np.array([1.0, 0, 0]), np.array([0.0, 1, 0]))
        axis = np.cross(a, ref)
        axis = axis / np.linalg.norm(axis, axis=-1, keepdims=True)
        alt = np.concatenate([np.zeros_like(axis[..., :1]), axis], axis=-1)
        q[flip] = alt[flip] if alt.ndim > 1 else alt
        n = np.linalg.norm(q, axis=-1, keepdims=True)
    return q / n
