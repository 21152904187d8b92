"""Aided-INS error covariance: 15-state error model, discrete propagation and
measurement updates.

Error state ordering is [dp_n (3), dv_n (3), dtheta (3), db_a (3), db_g (3)].
"""

import hashlib
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.special import gammainc

from src.config.defaults import (
    DEFAULT_INITIAL_SIGMAS, DEFAULT_RATES_HZ, DEFAULT_TAU_A, DEFAULT_TAU_G, GRAVITY, IMU_GRADES,
)
from src.errors import NumericalError, ValidationError
from src.utils.linalg import check_rotation, lyapunov_rk4, skew, symmetrize
from src.utils.rotations import quat_normalize, quat_rate, quat_to_dcm, quat_to_euler_jacobian

logger = logging.getLogger(__name__)

N_STATES = 15
POS, VEL, ATT, BA, BG = (slice(0, 3), slice(3, 6), slice(6, 9), slice(9, 12), slice(12, 15))
MEASUREMENT_KINDS = ('position', 'altitude', 'heading')

_I3 = np.eye(3)
_G_N = np.array([0.0, 0.0, GRAVITY])


@dataclass(frozen=True)
class ImuSpec:
    """IMU error model: white noise PSDs and first-order Gauss-Markov biases.

    PSDs may be zero (used to switch a source off); time constants must be positive.
    """

    q_nu: float
    q_omega: float
    tau_a: float
    tau_g: float
    sigma_a_ss: float
    sigma_g_ss: float

    def __post_init__(self):
        if min(self.q_nu, self.q_omega, self.sigma_a_ss, self.sigma_g_ss) < 0:
            raise ValidationError("IMU noise parameters must be non-negative")
        if self.tau_a <= 0 or self.tau_g <= 0:
            raise ValidationError("IMU bias time constants must be positive")

    @property
    def q_a(self):
        return 2.0 * self.sigma_a_ss ** 2 / self.tau_a

    @property
    def q_g(self):
        return 2.0 * self.sigma_g_ss ** 2 / self.tau_g

    @classmethod
    def from_table(cls, vrw_3sigma, accel_bias_3sigma, arw_3sigma, gyro_bias_3sigma,
                   tau_a=DEFAULT_TAU_A, tau_g=DEFAULT_TAU_G):
        """Build from 3-sigma values in m/s/sqrt(hr), g, deg/sqrt(hr), deg/hr."""
        deg = math.pi / 180.0
        return cls(
            q_nu=(vrw_3sigma / 3.0 / 60.0) ** 2,
            q_omega=(arw_3sigma / 3.0 * deg / 60.0) ** 2,
            tau_a=tau_a,
            tau_g=tau_g,
            sigma_a_ss=accel_bias_3sigma / 3.0 * GRAVITY,
            sigma_g_ss=gyro_bias_3sigma / 3.0 * deg / 3600.0,
        )

    @classmethod
    def from_grade(cls, grade, tau_a=DEFAULT_TAU_A, tau_g=DEFAULT_TAU_G):
        try:
            row = IMU_GRADES[grade]
        except KeyError:
            raise ValidationError(f"unknown IMU grade {grade!r}") from None
        return cls.from_table(tau_a=tau_a, tau_g=tau_g, **row)


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle in the NE plane, m."""

    n_min: float
    n_max: float
    e_min: float
    e_max: float

    def __post_init__(self):
        if self.n_min >= self.n_max or self.e_min >= self.e_max:
            raise ValidationError("rectangle bounds must satisfy min < max")

    def contains(self, ne):
        ne = np.asarray(ne, dtype=float)
        n, e = ne[..., 0], ne[..., 1]
        return (n >= self.n_min) & (n <= self.n_max) & (e >= self.e_min) & (e <= self.e_max)


@dataclass(frozen=True)
class MeasSpec:
    sigma_n: float
    sigma_e: float
    sigma_d: float
    sigma_h: float
    sigma_psi: float
    rates: dict = field(default_factory=lambda: dict(DEFAULT_RATES_HZ))
    gps_denied_regions: tuple = ()

    def __post_init__(self):
        if min(self.sigma_n, self.sigma_e, self.sigma_d, self.sigma_h, self.sigma_psi) <= 0:
            raise ValidationError("measurement standard deviations must be positive")
        for kind in MEASUREMENT_KINDS:
            if self.rates.get(kind, 0.0) <= 0:
                raise ValidationError(f"measurement rate for {kind} must be positive")
        object.__setattr__(self, 'gps_denied_regions', tuple(self.gps_denied_regions))

    def denied(self, ne):
        """True where position and heading aiding are unavailable."""
        ne = np.asarray(ne, dtype=float)
        out = np.zeros(ne.shape[:-1], dtype=bool)
        for rect in self.gps_denied_regions:
            out |= rect.contains(ne)
        return out

    def stride(self, kind, dt):
        """Number of samples between epochs of a sensor."""
        return max(1, int(round(1.0 / (self.rates[kind] * dt))))


@dataclass
class NavCovariance:
    P: np.ndarray

    def __post_init__(self):
        P = np.asarray(self.P, dtype=float)
        if P.shape != (N_STATES, N_STATES):
            raise ValidationError(f"navigation covariance must be 15x15, got {P.shape}")
        self.P = symmetrize(P)

    def sigmas(self):
        return np.sqrt(np.clip(np.diag(self.P), 0.0, None))

    @classmethod
    def initial(cls, imu, sigma_p=DEFAULT_INITIAL_SIGMAS['sigma_p_m'],
                sigma_v=DEFAULT_INITIAL_SIGMAS['sigma_v_mps'],
                sigma_theta=math.radians(DEFAULT_INITIAL_SIGMAS['sigma_theta_deg'])):
        """Diagonal P0 with the biases at their steady-state spread."""
        diag = np.concatenate([
            np.full(3, sigma_p ** 2), np.full(3, sigma_v ** 2), np.full(3, sigma_theta ** 2),
            np.full(3, imu.sigma_a_ss ** 2), np.full(3, imu.sigma_g_ss ** 2),
        ])
        return cls(np.diag(diag))


def nav_dynamics_matrix(T_b_n, nu_hat_b, tau_a, tau_g):
    """Linearized error dynamics F of the strapdown navigation equations."""
    T = check_rotation(T_b_n)
    F = np.zeros((N_STATES, N_STATES))
    F[POS, VEL] = _I3
    F[VEL, ATT] = skew(T @ np.asarray(nu_hat_b, dtype=float))
    F[VEL, BA] = -T
    F[ATT, BG] = T
    F[BA, BA] = -_I3 / tau_a
    F[BG, BG] = -_I3 / tau_g
    return F


def noise_mixing_matrix(T_b_n):
    """B mapping [accel noise, gyro noise, accel bias drive, gyro bias drive] into the error state."""
    B = np.zeros((N_STATES, 12))
    B[VEL, 0:3] = -T_b_n
    B[ATT, 3:6] = T_b_n
    B[BA, 6:9] = _I3
    B[BG, 9:12] = _I3
    return B


def noise_psd(imu):
    return np.diag(np.repeat([imu.q_nu, imu.q_omega, imu.q_a, imu.q_g], 3))


def stm_lear(F_k, F_km1, dt):
    """
    Second-order transition matrix from two successive dynamics matrices.

    The bias block uses the exact first-order Gauss-Markov transition, with the
    time constants read off the bias diagonal of F_k.
    """
    Phi = np.eye(N_STATES) + 0.5 * dt * (F_k + F_km1) + 0.5 * dt * dt * (F_k @ F_km1)
    decay = np.exp(np.diag(F_k)[9:] * dt)
    Phi[9:, :] = 0.0
    Phi[9:, 9:] = np.diag(decay)
    return Phi


def _gamma_moments(tau, dt):
    """Integrals of t/2 exp(-t/tau) and t^2/2 exp(-t/tau) over [0, dt]."""
    x = dt / tau
    return 0.5 * tau ** 2 * gammainc(2, x), tau ** 3 * gammainc(3, x)


def integrated_process_noise(T_k, T_km1, nu_k, nu_km1, imu, dt):
    """Discrete process noise Q_{k-1} consistent with stm_lear."""
    Tk = np.asarray(T_k, dtype=float)
    Tm = np.asarray(T_km1, dtype=float)
    Ts = Tk + Tm
    Nk = skew(Tk @ np.asarray(nu_k, dtype=float))
    Nm = skew(Tm @ np.asarray(nu_km1, dtype=float))
    Ns = Nk + Nm
    Qn = imu.q_nu * (Tk @ Tk.T)
    Qw = imu.q_omega * (Tk @ Tk.T)
    qa, qg = imu.q_a, imu.q_g
    ta, tg = imu.tau_a, imu.tau_g
    dt2, dt3, dt4, dt5 = dt ** 2, dt ** 3, dt ** 4, dt ** 5

    TmTm, TsTs, TkTk = Tm @ Tm.T, Ts @ Ts.T, Tk @ Tk.T
    TkTs = Tk @ Ts.T
    NmQwNm = Nm @ Qw @ Nm.T

    Q = np.zeros((N_STATES, N_STATES))
    Q[POS, POS] = dt3 / 3.0 * Qn + dt5 / 20.0 * (NmQwNm + qa * TmTm)
    Q[POS, VEL] = (dt2 / 2.0 * Qn + dt4 / 16.0 * Nm @ Qw @ Ns.T
                   + qa * (dt4 / 16.0 * Tm @ Ts.T - dt5 / (20.0 * ta) * Tm @ Tk.T))
    Q[POS, ATT] = dt3 / 6.0 * Nm @ Qw
    Q[VEL, VEL] = (dt * Qn + dt3 / 12.0 * Ns @ Qw @ Ns.T
                   + qa * (dt3 / 12.0 * TsTs - dt4 / (16.0 * ta) * (TkTs + TkTs.T)
                           + dt5 / (20.0 * ta ** 2) * TkTk)
                   + qg * dt5 / 20.0 * Nk @ TmTm @ Nk.T)
    Q[VEL, ATT] = (dt2 / 4.0 * Ns @ Qw
                   + qg * (dt4 / 16.0 * Nk @ Tm @ Ts.T - dt5 / (20.0 * tg) * Nk @ Tm @ Tk.T))
    Q[ATT, ATT] = (dt * Qw
                   + qg * (dt3 / 12.0 * TsTs - dt4 / (16.0 * tg) * (TkTs + TkTs.T)
                           + dt5 / (20.0 * tg ** 2) * TkTk))

    I1a, I2a = _gamma_moments(ta, dt)
    I1g, I2g = _gamma_moments(tg, dt)
    Q[POS, BA] = -qa * I2a * Tm
    Q[VEL, BA] = -qa * I1a * Ts + qa * I2a / ta * Tk
    Q[VEL, BG] = qg * I2g * Nk @ Tm
    Q[ATT, BG] = qg * I1g * Ts - qg * I2g / tg * Tk

    Q[BA, BA] = -qa * ta / 2.0 * math.expm1(-2.0 * dt / ta) * _I3
    Q[BG, BG] = -qg * tg / 2.0 * math.expm1(-2.0 * dt / tg) * _I3

    upper = np.triu(Q, 1)
    Q = np.diag(np.diag(Q)) + upper + upper.T
    return symmetrize(Q)


def _as_array(P):
    return P.P if isinstance(P, NavCovariance) else np.asarray(P, dtype=float)


def propagate(P, Phi, Q):
    P = _as_array(P)
    return NavCovariance(Phi @ P @ Phi.T + Q)


def propagate_riccati(P, F, BQBt, dt):
    """One RK4 step of the continuous Riccati equation without measurements."""
    return NavCovariance(lyapunov_rk4(_as_array(P), F, BQBt, dt))


def measurement_model(kind, meas):
    """
    Measurement Jacobian H and noise covariance R of an aiding sensor.

    Returns:
        tuple: (H, R)
    """
    if kind == 'position':
        H = np.zeros((3, N_STATES))
        H[:, POS] = _I3
        R = np.diag([meas.sigma_n ** 2, meas.sigma_e ** 2, meas.sigma_d ** 2])
    elif kind == 'altitude':
        H = np.zeros((1, N_STATES))
        H[0, 2] = -1.0
        R = np.array([[meas.sigma_h ** 2]])
    elif kind == 'heading':
        H = np.zeros((1, N_STATES))
        H[0, 8] = -1.0
        R = np.array([[meas.sigma_psi ** 2]])
    else:
        raise ValidationError(f"unknown measurement kind {kind!r}")
    return H, R


def kalman_update(P, H, R):
    """
    Joseph-form update with the optimal gain.

    Returns:
        tuple: (P_plus, K)
    """
    S = H @ P @ H.T + R
    try:
        K = np.linalg.solve(S, H @ P).T
    except np.linalg.LinAlgError as e:
        raise NumericalError(f"innovation covariance is singular: {e}") from e
    IKH = np.eye(P.shape[0]) - K @ H
    return symmetrize(IKH @ P @ IKH.T + K @ R @ K.T), K


def measurement_update(P, kind, meas):
    H, R = measurement_model(kind, meas)
    P_plus, _ = kalman_update(_as_array(P), H, R)
    return NavCovariance(P_plus)


def aircraft_selector():
    """M_a mapping the error state to [position error, Euler angle error]."""
    M = np.zeros((6, N_STATES))
    M[0:3, POS] = _I3
    M[3:6, ATT] = quat_to_euler_jacobian(np.zeros(3)) @ (-0.5 * _I3)
    return M


def aircraft_covariance(P):
    """C_aa = M_a P M_a' for one covariance or a stack of shape (N, 15, 15)."""
    M = aircraft_selector()
    return symmetrize(M @ _as_array(P) @ M.T)


@dataclass(frozen=True)
class GainRecord:
    index: int
    kind: str
    K: np.ndarray
    H: np.ndarray
    R: np.ndarray


@dataclass
class CovarianceHistory:
    t: np.ndarray
    P: np.ndarray
    gains: list
    method: str = 'lear'

    def __len__(self):
        return len(self.t)

    def __iter__(self):
        for k in range(len(self.t)):
            yield float(self.t[k]), NavCovariance(self.P[k])

    def aircraft_covariances(self):
        return aircraft_covariance(self.P)

    def checksum(self):
        """SHA-256 over the gain schedule."""
        digest = hashlib.sha256()
        for rec in self.gains:
            digest.update(f"{rec.index}:{rec.kind}".encode())
            digest.update(np.ascontiguousarray(rec.K).tobytes())
        return digest.hexdigest()

    def to_frame(self):
        names = ['p_n', 'p_e', 'p_d', 'v_n', 'v_e', 'v_d', 'th_x', 'th_y', 'th_z',
                 'ba_x', 'ba_y', 'ba_z', 'bg_x', 'bg_y', 'bg_z']
        units = ['m'] * 3 + ['m/s'] * 3 + ['rad'] * 3 + ['m/s^2'] * 3 + ['rad/s'] * 3
        sig = np.sqrt(np.clip(np.diagonal(self.P, axis1=1, axis2=2), 0.0, None))
        data = {'t [s]': self.t}
        for j, (name, unit) in enumerate(zip(names, units)):
            data[f'sigma_{name} [{unit}]'] = sig[:, j]
        C = self.aircraft_covariances()
        labels = ['n', 'e', 'd', 'roll', 'pitch', 'yaw']
        for i in range(6):
            for j in range(i, 6):
                unit = ['m', 'rad'][i >= 3]
                unit2 = ['m', 'rad'][j >= 3]
                data[f'C_{labels[i]}_{labels[j]} [{unit}*{unit2}]'] = C[:, i, j]
        return pd.DataFrame(data)


def run_covariance(trajectory, P0, imu, meas, method='lear'):
    """
    Propagate and update the navigation covariance along a trajectory.

    Position and heading updates are skipped while the nominal position is
    inside a GPS-denied rectangle; altitude updates continue.

    Args:
        trajectory: Trajectory
        P0: NavCovariance at the first sample
        imu: ImuSpec
        meas: MeasSpec
        method: 'lear' (discrete transition + integrated noise) or 'riccati' (RK4)

    Returns:
        CovarianceHistory with the post-update covariance at every sample and
        the full gain schedule
    """
    if len(trajectory) == 0:
        raise ValidationError("trajectory is empty")
    if method not in ('lear', 'riccati'):
        raise ValidationError(f"unknown propagation method {method!r}")

    dt = trajectory.dt
    T = trajectory.T_b_n
    nu = trajectory.nu_b
    n = len(trajectory)
    denied = meas.denied(trajectory.p_n[:, :2])
    strides = {kind: meas.stride(kind, dt) for kind in MEASUREMENT_KINDS}
    models = {kind: measurement_model(kind, meas) for kind in MEASUREMENT_KINDS}
    Qc = noise_psd(imu)

    history = np.empty((n, N_STATES, N_STATES))
    gains = []

    def update(P, k):
        for kind in MEASUREMENT_KINDS:
            if k % strides[kind]:
                continue
            if denied[k] and kind != 'altitude':
                continue
            H, R = models[kind]
            P, K = kalman_update(P, H, R)
            gains.append(GainRecord(k, kind, K, H, R))
        return P

    P = update(_as_array(P0).copy(), 0)
    history[0] = P
    F_prev = nav_dynamics_matrix(T[0], nu[0], imu.tau_a, imu.tau_g)
    B_prev = noise_mixing_matrix(T[0])
    for k in range(1, n):
        F_k = nav_dynamics_matrix(T[k], nu[k], imu.tau_a, imu.tau_g)
        if method == 'lear':
            Phi = stm_lear(F_k, F_prev, dt)
            Q = integrated_process_noise(T[k], T[k - 1], nu[k], nu[k - 1], imu, dt)
            P = symmetrize(Phi @ P @ Phi.T + Q)
        else:
            B_k = noise_mixing_matrix(T[k])
            N_mid = 0.5 * (B_k @ Qc @ B_k.T + B_prev @ Qc @ B_prev.T)
            P = lyapunov_rk4(P, 0.5 * (F_k + F_prev), N_mid, dt)
            B_prev = B_k
        P = update(P, k)
        history[k] = P
        F_prev = F_k

    logger.debug("covariance run: %d samples, %d updates, %d denied samples",
                 n, len(gains), int(denied.sum()))
    return CovarianceHistory(trajectory.t.copy(), history, gains, method)


def truth_derivative(v, q, nu_b, omega_b):
    """Rates of position, velocity and attitude quaternion for flat-earth NED strapdown."""
    return v, quat_to_dcm(q) @ nu_b + _G_N, quat_rate(q, omega_b)


def strapdown_step(p, v, q, nu0, nu1, w0, w1, dt):
    """RK4 step with specific force and body rates linearly interpolated over the step."""
    nu_mid = 0.5 * (nu0 + nu1)
    w_mid = 0.5 * (w0 + w1)

    k1p, k1v, k1q = truth_derivative(v, q, nu0, w0)
    k2p, k2v, k2q = truth_derivative(v + 0.5 * dt * k1v, q + 0.5 * dt * k1q, nu_mid, w_mid)
    k3p, k3v, k3q = truth_derivative(v + 0.5 * dt * k2v, q + 0.5 * dt * k2q, nu_mid, w_mid)
    k4p, k4v, k4q = truth_derivative(v + dt * k3v, q + dt * k3q, nu1, w1)

    p = p + dt / 6.0 * (k1p + 2 * k2p + 2 * k3p + k4p)
    v = v + dt / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
    q = quat_normalize(q + dt / 6.0 * (k1q + 2 * k2q + 2 * k3q + k4q))
    return p, v, q
