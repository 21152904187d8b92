"""Euler angle (Z-Y-X) rotation helpers.

``theta`` is always ordered (roll, pitch, yaw). ``T_n_b`` rotates NED vectors
into the body frame; ``T_b_n`` is its transpose. Every function accepts a
single angle triple or a stack of shape (N, 3).
"""

import numpy as np


def _elementary(angle, axis, derivative=False):
    """Transposed elementary rotation about ``axis`` (NED->body sense), or its derivative."""
    angle = np.asarray(angle, dtype=float)
    c = np.cos(angle)
    s = np.sin(angle)
    out = np.zeros(angle.shape + (3, 3))
    if axis == 0:
        if derivative:
            out[..., 1, 1], out[..., 1, 2] = -s, c
            out[..., 2, 1], out[..., 2, 2] = -c, -s
        else:
            out[..., 0, 0] = 1.0
            out[..., 1, 1], out[..., 1, 2] = c, s
            out[..., 2, 1], out[..., 2, 2] = -s, c
    elif axis == 1:
        if derivative:
            out[..., 0, 0], out[..., 0, 2] = -s, -c
            out[..., 2, 0], out[..., 2, 2] = c, -s
        else:
            out[..., 1, 1] = 1.0
            out[..., 0, 0], out[..., 0, 2] = c, -s
            out[..., 2, 0], out[..., 2, 2] = s, c
    else:
        if derivative:
            out[..., 0, 0], out[..., 0, 1] = -s, c
            out[..., 1, 0], out[..., 1, 1] = -c, -s
        else:
            out[..., 2, 2] = 1.0
            out[..., 0, 0], out[..., 0, 1] = c, s
            out[..., 1, 0], out[..., 1, 1] = -s, c
    return out


def ned_to_body(theta):
    """T_n^b for Euler angles (roll, pitch, yaw)."""
    theta = np.asarray(theta, dtype=float)
    rx = _elementary(theta[..., 0], 0)
    ry = _elementary(theta[..., 1], 1)
    rz = _elementary(theta[..., 2], 2)
    return rx @ ry @ rz


def body_to_ned(theta):
    return np.swapaxes(ned_to_body(theta), -1, -2)


def ned_to_body_partials(theta):
    """
    Partial derivatives of T_n^b with respect to roll, pitch and yaw.

    Returns:
        tuple of three arrays shaped like ned_to_body(theta)
    """
    theta = np.asarray(theta, dtype=float)
    rx = _elementary(theta[..., 0], 0)
    ry = _elementary(theta[..., 1], 1)
    rz = _elementary(theta[..., 2], 2)
    drx = _elementary(theta[..., 0], 0, derivative=True)
    dry = _elementary(theta[..., 1], 1, derivative=True)
    drz = _elementary(theta[..., 2], 2, derivative=True)
    return drx @ ry @ rz, rx @ dry @ rz, rx @ ry @ drz


def dcm_to_euler(T_b_n):
    """Euler angles (roll, pitch, yaw) of a body-to-NED rotation matrix."""
    T = np.asarray(T_b_n, dtype=float)
    roll = np.arctan2(T[..., 2, 1], T[..., 2, 2])
    pitch = -np.arcsin(np.clip(T[..., 2, 0], -1.0, 1.0))
    yaw = np.arctan2(T[..., 1, 0], T[..., 0, 0])
    return np.stack([roll, pitch, wrap_angle(yaw)], axis=-1)


def wrap_angle(angle):
    """Wrap to [-pi, pi)."""
    return (np.asarray(angle) + np.pi) % (2.0 * np.pi) - np.pi


def quat_to_euler_jacobian(q_vec):
    """
    Jacobian of Euler angles with respect to the vector part of a unit
    quaternion whose scalar part is held at one (small-error quaternion).

    At q_vec = 0 this is exactly 2 I.
    """
    q1, q2, q3 = (float(x) for x in q_vec)

    def atan2_grad(num, den, dnum, dden):
        return (den * np.asarray(dnum) - num * np.asarray(dden)) / (num ** 2 + den ** 2)

    roll = atan2_grad(2.0 * (q1 + q2 * q3), 1.0 - 2.0 * (q1 ** 2 + q2 ** 2),
                      [2.0, 2.0 * q3, 2.0 * q2], [-4.0 * q1, -4.0 * q2, 0.0])
    arg = 2.0 * (q2 - q1 * q3)
    pitch = np.array([-2.0 * q3, 2.0, -2.0 * q1]) / np.sqrt(1.0 - arg ** 2)
    yaw = atan2_grad(2.0 * (q3 + q1 * q2), 1.0 - 2.0 * (q2 ** 2 + q3 ** 2),
                     [2.0 * q2, 2.0 * q1, 2.0], [0.0, -4.0 * q2, -4.0 * q3])
    return np.vstack([roll, pitch, yaw])


def quat_vec_to_euler(q_vec):
    """Euler angles of the quaternion [1, q1, q2, q3] (scalar part fixed at one)."""
    q1, q2, q3 = (float(x) for x in q_vec)
    roll = np.arctan2(2.0 * (q1 + q2 * q3), 1.0 - 2.0 * (q1 ** 2 + q2 ** 2))
    pitch = np.arcsin(2.0 * (q2 - q1 * q3))
    yaw = np.arctan2(2.0 * (q3 + q1 * q2), 1.0 - 2.0 * (q2 ** 2 + q3 ** 2))
    return np.array([roll, pitch, yaw])


# Hamilton quaternions [w, x, y, z] describing the body-to-NED rotation.

def euler_to_quat(theta):
    roll, pitch, yaw = (0.5 * float(a) for a in theta)
    cr, sr = np.cos(roll), np.sin(roll)
    cp, sp = np.cos(pitch), np.sin(pitch)
    cy, sy = np.cos(yaw), np.sin(yaw)
    return np.array([
        cr * cp * cy + sr * sp * sy,
        sr * cp * cy - cr * sp * sy,
        cr * sp * cy + sr * cp * sy,
        cr * cp * sy - sr * sp * cy,
    ])


def quat_to_dcm(q):
    """Body-to-NED rotation matrix of a unit quaternion."""
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def quat_rate(q, omega):
    """dq/dt = 0.5 q * [0, omega]."""
    w, x, y, z = q
    p, r, s = omega
    return 0.5 * np.array([
        -x * p - y * r - z * s,
        w * p + y * s - z * r,
        w * r - x * s + z * p,
        w * s + x * r - y * p,
    ])


def quat_normalize(q):
    return q / np.linalg.norm(q)
