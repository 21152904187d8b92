"""Single-pulse radar detection model, ellipsoid RCS and their Jacobians"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erfc, erfcinv

from src.config.defaults import BOLTZMANN
from src.errors import (
    DegenerateGeometryError, DomainError, InfeasibleRadiusError, ValidationError,
)
from src.utils.rotations import ned_to_body, ned_to_body_partials

logger = logging.getLogger(__name__)

_SQRT_PI = math.sqrt(math.pi)


@dataclass(frozen=True)
class AircraftPose:
    p_a_n: np.ndarray
    theta_a: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p_a_n, dtype=float).reshape(3)
        th = np.asarray(self.theta_a, dtype=float).reshape(3)
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(th))):
            raise ValidationError("aircraft pose must be finite")
        roll, pitch, yaw = th
        if abs(roll) >= math.pi or abs(pitch) >= math.pi / 2 or not (-math.pi <= yaw < math.pi):
            raise ValidationError(f"aircraft attitude out of range: {th.tolist()}")
        object.__setattr__(self, 'p_a_n', p)
        object.__setattr__(self, 'theta_a', th)


@dataclass(frozen=True)
class RadarSite:
    """Ground radar: NED position, lumped constant c_r, false-alarm probability and
    the 4x4 covariance of [p_r_n, c_r]."""

    p_r_n: np.ndarray
    c_r: float
    p_fa: float
    C_rr: np.ndarray = field(default_factory=lambda: np.zeros((4, 4)))
    name: str = 'radar'

    def __post_init__(self):
        p = np.asarray(self.p_r_n, dtype=float).reshape(3)
        C = np.asarray(self.C_rr, dtype=float)
        if self.c_r <= 0:
            raise ValidationError(f"{self.name}: c_r must be positive")
        if not 0.0 < self.p_fa < 1.0:
            raise ValidationError(f"{self.name}: p_fa must lie in (0, 1)")
        if C.shape != (4, 4) or not np.allclose(C, C.T):
            raise ValidationError(f"{self.name}: C_rr must be a symmetric 4x4 matrix")
        if np.linalg.eigvalsh(C).min() < -1e-12 * max(1.0, np.trace(C)):
            raise ValidationError(f"{self.name}: C_rr must be positive semidefinite")
        object.__setattr__(self, 'p_r_n', p)
        object.__setattr__(self, 'C_rr', C)
        object.__setattr__(self, 'c_r', float(self.c_r))
        object.__setattr__(self, 'p_fa', float(self.p_fa))

    @property
    def ne(self):
        return self.p_r_n[:2]


@dataclass(frozen=True)
class EllipsoidRcs:
    a: float
    b: float
    c: float

    def __post_init__(self):
        if min(self.a, self.b, self.c) <= 0:
            raise ValidationError("ellipsoid axes must be positive")


@dataclass(frozen=True)
class RcsAngles:
    alpha: float
    phi: float


@dataclass(frozen=True)
class DetectionStats:
    pd_nominal: float
    sigma_pd: float


def radar_range(p_a, p_r):
    """Euclidean range between aircraft and radar, m."""
    return np.linalg.norm(np.asarray(p_a, dtype=float) - np.asarray(p_r, dtype=float), axis=-1)


def snr(c_r, sigma_r, R):
    """Signal-to-noise ratio S = c_r sigma_r / (k R^4)."""
    R = np.asarray(R, dtype=float)
    if np.any(R <= 0):
        raise DomainError("range must be positive")
    return c_r * np.asarray(sigma_r, dtype=float) / (BOLTZMANN * R ** 4)


def probability_of_detection(S, p_fa):
    return 0.5 * erfc(math.sqrt(-math.log(p_fa)) - np.sqrt(np.asarray(S, dtype=float) + 0.5))


def _rcs_denominator(rcs, alpha, phi):
    sa, ca = np.sin(alpha), np.cos(alpha)
    sp, cp = np.sin(phi), np.cos(phi)
    return (rcs.a * sa * cp) ** 2 + (rcs.b * sa * sp) ** 2 + (rcs.c * ca) ** 2


def rcs_ellipsoid(rcs, ang):
    """Ellipsoid RCS, m^2. ``ang`` may carry scalar or array angles."""
    D = _rcs_denominator(rcs, ang.alpha, ang.phi)
    return math.pi * (rcs.a * rcs.b * rcs.c) ** 2 / D ** 2


def rcs_partials(rcs, ang):
    """
    Partial derivatives of the ellipsoid RCS with respect to azimuth and elevation.

    Returns:
        tuple: (d sigma / d alpha, d sigma / d phi)
    """
    alpha, phi = ang.alpha, ang.phi
    D = _rcs_denominator(rcs, alpha, phi)
    scale = -2.0 * math.pi * (rcs.a * rcs.b * rcs.c) ** 2 / D ** 3
    dD_dalpha = np.sin(2 * alpha) * (rcs.a ** 2 * np.cos(phi) ** 2
                                     + rcs.b ** 2 * np.sin(phi) ** 2 - rcs.c ** 2)
    dD_dphi = np.sin(alpha) ** 2 * np.sin(2 * phi) * (rcs.b ** 2 - rcs.a ** 2)
    return scale * dD_dalpha, scale * dD_dphi


def _body_vector(p_a, theta, p_r):
    d = np.asarray(p_r, dtype=float) - np.asarray(p_a, dtype=float)
    T = ned_to_body(theta)
    rho = np.einsum('...ij,...j->...i', T, d)
    return d, T, rho


def rcs_angles(pose, p_r):
    """Azimuth and elevation of the radar seen from the aircraft body frame."""
    d, _, rho = _body_vector(pose.p_a_n, pose.theta_a, p_r)
    if np.linalg.norm(d) == 0.0:
        raise DegenerateGeometryError("aircraft and radar coincide")
    alpha = math.atan2(rho[1], rho[0])
    if alpha >= math.pi:
        alpha -= 2 * math.pi
    phi = math.atan2(rho[2], math.hypot(rho[0], rho[1]))
    return RcsAngles(alpha, phi)


@dataclass
class DetectionGeometry:
    """Batched P_D evaluation with its Jacobians, one row per sample."""

    pd: np.ndarray
    rcs: np.ndarray
    A_pa: np.ndarray
    A_pr: np.ndarray


def detection_jacobians(p_a, theta, radar, rcs, with_jacobians=True):
    """
    Evaluate P_D and its Jacobians for a stack of aircraft poses.

    Args:
        p_a: (N, 3) aircraft NED positions, m
        theta: (N, 3) aircraft Euler angles, rad
        radar: RadarSite
        rcs: EllipsoidRcs
        with_jacobians: skip the derivative chain when False

    Returns:
        DetectionGeometry with pd (N,), rcs (N,), A_pa (N, 6), A_pr (N, 4)
    """
    p_a = np.atleast_2d(np.asarray(p_a, dtype=float))
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    d, T, rho = _body_vector(p_a, theta, radar.p_r_n)

    R = np.linalg.norm(d, axis=1)
    beta = np.hypot(rho[:, 0], rho[:, 1])
    if np.any(R == 0.0):
        raise DegenerateGeometryError(f"{radar.name}: aircraft at the radar position")

    alpha = np.arctan2(rho[:, 1], rho[:, 0])
    phi = np.arctan2(rho[:, 2], beta)
    ang = RcsAngles(alpha, phi)
    sigma_r = rcs_ellipsoid(rcs, ang)

    inv_kr4 = 1.0 / (BOLTZMANN * R ** 4)
    S = radar.c_r * sigma_r * inv_kr4
    root = np.sqrt(S + 0.5)
    W = math.sqrt(-math.log(radar.p_fa)) - root
    pd = 0.5 * erfc(W)

    if not with_jacobians:
        empty = np.zeros((len(pd), 0))
        return DetectionGeometry(pd, sigma_r, empty, empty)

    if np.any(beta == 0.0):
        raise DegenerateGeometryError(f"{radar.name}: radar directly above or below the aircraft")

    dpd_dS = np.exp(-W ** 2) / (2.0 * _SQRT_PI * root)
    dS_dR = -4.0 * S / R
    dS_dsigma = radar.c_r * inv_kr4
    dS_dcr = sigma_r * inv_kr4

    dsig_dalpha, dsig_dphi = rcs_partials(rcs, ang)
    rxy2 = beta ** 2
    dalpha_drho = np.stack([-rho[:, 1] / rxy2, rho[:, 0] / rxy2, np.zeros_like(R)], axis=1)
    dphi_drho = np.stack([-rho[:, 2] * rho[:, 0] / (beta * R ** 2),
                          -rho[:, 2] * rho[:, 1] / (beta * R ** 2),
                          beta / R ** 2], axis=1)
    dsig_drho = dsig_dalpha[:, None] * dalpha_drho + dsig_dphi[:, None] * dphi_drho

    unit = d / R[:, None]
    dsig_dd = np.einsum('ni,nij->nj', dsig_drho, T)
    drho_dtheta = np.stack([np.einsum('nij,nj->ni', dT, d) for dT in ned_to_body_partials(theta)],
                           axis=2)

    scale = dpd_dS[:, None]
    A_pos = scale * (dS_dR[:, None] * -unit - dS_dsigma[:, None] * dsig_dd)
    A_att = scale * dS_dsigma[:, None] * np.einsum('ni,nij->nj', dsig_drho, drho_dtheta)
    A_pa = np.hstack([A_pos, A_att])

    A_rpos = scale * (dS_dR[:, None] * unit + dS_dsigma[:, None] * dsig_dd)
    A_pr = np.hstack([A_rpos, (dpd_dS * dS_dcr)[:, None]])
    return DetectionGeometry(pd, sigma_r, A_pa, A_pr)


def jacobian_aircraft(pose, radar, rcs):
    """dP_D/dx_a as a 1x6 row over [p_a_n, theta_a]."""
    geo = detection_jacobians(pose.p_a_n, pose.theta_a, radar, rcs)
    return geo.A_pa[0]


def jacobian_radar(pose, radar, rcs):
    """dP_D/dx_r as a 1x4 row over [p_r_n, c_r]."""
    geo = detection_jacobians(pose.p_a_n, pose.theta_a, radar, rcs)
    return geo.A_pr[0]


def pd_variance(A_pa, C_aa, A_pr, C_rr):
    """sigma_pd^2 = A_pa C_aa A_pa' + A_pr C_rr A_pr'."""
    A_pa = np.asarray(A_pa, dtype=float)
    A_pr = np.asarray(A_pr, dtype=float)
    var = A_pa @ np.asarray(C_aa) @ A_pa + A_pr @ np.asarray(C_rr) @ A_pr
    return max(float(var), 0.0)


def detection_stats(pose, radar, rcs, C_aa):
    """Nominal P_D and sigma_pd for a single pose."""
    geo = detection_jacobians(pose.p_a_n, pose.theta_a, radar, rcs)
    var = pd_variance(geo.A_pa[0], C_aa, geo.A_pr[0], radar.C_rr)
    return DetectionStats(float(geo.pd[0]), math.sqrt(var))


def detection_radius(pd_target, sigma_r, c_r, p_fa):
    """
    Range at which the nominal P_D equals ``pd_target``.

    Raises:
        InfeasibleRadiusError: when no positive SNR produces ``pd_target``
    """
    root_l = math.sqrt(-math.log(p_fa))
    upper = 0.5 * erfc(-root_l)
    if not 0.0 < pd_target < upper:
        raise InfeasibleRadiusError(f"target P_D {pd_target} outside (0, {upper})")
    x = root_l - float(erfcinv(2.0 * pd_target))
    if x <= math.sqrt(0.5):
        raise InfeasibleRadiusError(
            f"target P_D {pd_target} is below the zero-SNR detection probability")
    return (c_r * sigma_r / (BOLTZMANN * (x ** 2 - 0.5))) ** 0.25
