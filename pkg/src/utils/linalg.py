"""Small matrix helpers used by the covariance models"""

import numpy as np

from src.errors import ValidationError


def skew(v):
    """
    Cross-product matrix of a 3-vector, so that skew(a) @ b == cross(a, b).

    Args:
        v: array of shape (3,) or (N, 3)

    Returns:
        array of shape (3, 3) or (N, 3, 3)
    """
    v = np.asarray(v, dtype=float)
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def symmetrize(M):
    return 0.5 * (M + np.swapaxes(M, -1, -2))


def check_rotation(T, tol=1e-9):
    """Raise ValidationError unless T is a 3x3 orthonormal matrix."""
    T = np.asarray(T, dtype=float)
    if T.shape != (3, 3):
        raise ValidationError(f"rotation must be 3x3, got {T.shape}")
    err = np.linalg.norm(T.T @ T - np.eye(3))
    if not np.isfinite(err) or err >= tol:
        raise ValidationError(f"rotation is not orthonormal (|T'T - I| = {err:.3e})")
    return T


def lyapunov_rk4(P, F, N, dt):
    """
    One RK4 step of dP/dt = F P + P F' + N with F and N held constant.

    Args:
        P: square covariance
        F: dynamics matrix
        N: forcing term (already mapped noise, e.g. B Q B')
        dt: step, s

    Returns:
        propagated, symmetrized covariance
    """
    def rate(X):
        FX = F @ X
        return FX + FX.T + N

    k1 = rate(P)
    k2 = rate(P + 0.5 * dt * k1)
    k3 = rate(P + 0.5 * dt * k2)
    k4 = rate(P + dt * k3)
    return symmetrize(P + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4))


def min_eigenvalue_ratio(P):
    """Smallest eigenvalue of a symmetric matrix relative to its trace."""
    trace = np.trace(P)
    if trace <= 0.0:
        return 0.0
    return float(np.linalg.eigvalsh(symmetrize(P)).min() / trace)
