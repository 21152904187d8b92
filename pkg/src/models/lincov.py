"""Linear covariance analysis of the aided INS and per-source sigma_pd error budgets.

The augmented state stacks the truth dispersion (15) over the navigation
dispersion (15). The navigation filter's Kalman gains are computed once with
every source on and replayed for every source subset, which keeps each run
linear in its sources.
"""

import logging
import math
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields

import numpy as np
import pandas as pd

from src.config import MAX_WORKERS
from src.errors import ValidationError
from src.models.detection import detection_series
from src.models.ins import (
    ATT, BA, BG, N_STATES, POS, VEL, aircraft_covariance, nav_dynamics_matrix, run_covariance,
)
from src.utils.linalg import check_rotation, lyapunov_rk4, skew, symmetrize
from src.utils.progress import progress

logger = logging.getLogger(__name__)

N_AUG = 2 * N_STATES

_I3 = np.eye(3)
_I15 = np.eye(N_STATES)
_TRUE_ERROR_SELECTOR = np.hstack([-_I15, _I15])

# Truth bias states feeding the IMU outputs, and the process noise entry point.
C_X = np.hstack([np.zeros((6, 9)), np.eye(6)])
B_TRUTH = np.vstack([np.zeros((9, 6)), np.eye(6)])

NAV_SOURCES = ('accel_noise', 'gyro_noise', 'accel_bias', 'gyro_bias',
               'pos_meas_noise', 'heading_meas_noise', 'alt_meas_noise', 'initial_conditions')
RADAR_SOURCES = ('radar_position', 'radar_constant')
MEASUREMENT_SOURCES = {'position': 'pos_meas_noise',
                       'altitude': 'alt_meas_noise',
                       'heading': 'heading_meas_noise'}
IMU_SOURCES = ('accel_noise', 'gyro_noise', 'accel_bias', 'gyro_bias')


@dataclass(frozen=True)
class NoiseSourceSet:
    """On/off flag for every uncertainty source."""

    accel_noise: bool = True
    gyro_noise: bool = True
    accel_bias: bool = True
    gyro_bias: bool = True
    pos_meas_noise: bool = True
    heading_meas_noise: bool = True
    alt_meas_noise: bool = True
    radar_position: bool = True
    radar_constant: bool = True
    initial_conditions: bool = True

    @classmethod
    def names(cls):
        return tuple(f.name for f in fields(cls))

    @classmethod
    def all_on(cls):
        return cls()

    @classmethod
    def none(cls):
        return cls(**{name: False for name in cls.names()})

    @classmethod
    def only(cls, *names):
        unknown = set(names) - set(cls.names())
        if unknown:
            raise ValidationError(f"unknown noise sources: {sorted(unknown)}")
        return cls(**{name: name in names for name in cls.names()})

    def active(self):
        return tuple(name for name in self.names() if getattr(self, name))

    @property
    def nav_active(self):
        return any(getattr(self, name) for name in NAV_SOURCES)


@dataclass
class AugmentedCovariance:
    C_A: np.ndarray

    def __post_init__(self):
        C = np.asarray(self.C_A, dtype=float)
        if C.shape != (N_AUG, N_AUG):
            raise ValidationError(f"augmented covariance must be 30x30, got {C.shape}")
        self.C_A = symmetrize(C)

    @property
    def truth(self):
        return self.C_A[:N_STATES, :N_STATES]

    @property
    def nav(self):
        return self.C_A[N_STATES:, N_STATES:]


def _as_augmented(C_A):
    return C_A.C_A if isinstance(C_A, AugmentedCovariance) else np.asarray(C_A, dtype=float)


def truth_dispersion_matrix(T_bar, nu_b, tau_a, tau_g):
    """Truth dispersion dynamics F_x. Biases reach the velocity and attitude
    only through the measured IMU outputs, so those blocks are zero here."""
    T = check_rotation(T_bar)
    F = np.zeros((N_STATES, N_STATES))
    F[POS, VEL] = _I3
    F[VEL, ATT] = skew(T @ np.asarray(nu_b, dtype=float))
    F[BA, BA] = -_I3 / tau_a
    F[BG, BG] = -_I3 / tau_g
    return F


def imu_output_matrix(T_hat):
    """F_y: sensitivity of the navigation dispersion to [accel, gyro] output errors."""
    F_y = np.zeros((N_STATES, 6))
    F_y[VEL, 0:3] = T_hat
    F_y[ATT, 3:6] = -T_hat
    return F_y


def build_augmented(F_x, F_hat, F_y, C_x=C_X):
    """
    Assemble the augmented dispersion dynamics.

    Args:
        F_x: 15x15 truth dispersion dynamics
        F_hat: 15x15 navigation dynamics
        F_y: 15x6 IMU output sensitivity
        C_x: 6x15 selector of the truth bias states

    Returns:
        tuple: (F_script 30x30, G 30x6, W 30x6)
    """
    F_x, F_hat, F_y, C_x = (np.asarray(M, dtype=float) for M in (F_x, F_hat, F_y, C_x))
    if F_x.shape != (N_STATES, N_STATES) or F_hat.shape != (N_STATES, N_STATES):
        raise ValidationError("F_x and F_hat must be 15x15")
    if F_y.shape != (N_STATES, 6) or C_x.shape != (6, N_STATES):
        raise ValidationError("F_y must be 15x6 and C_x 6x15")

    F_script = np.zeros((N_AUG, N_AUG))
    F_script[:N_STATES, :N_STATES] = F_x
    F_script[N_STATES:, :N_STATES] = F_y @ C_x
    F_script[N_STATES:, N_STATES:] = F_hat
    G = np.vstack([np.zeros((N_STATES, 6)), F_y])
    W = np.vstack([B_TRUTH, np.zeros((N_STATES, 6))])
    return F_script, G, W


def propagate_augmented(C_A, F_script, G, W, S_eta, S_w, dt, G_prev=None):
    """
    One RK4 step of dC/dt = F C + C F' + G S_eta G' + W S_w W'.

    When ``G_prev`` is given the IMU-noise forcing is averaged over the two step
    endpoints, matching ``run_covariance(method='riccati')``.
    """
    C = _as_augmented(C_A)
    N = G @ S_eta @ G.T
    if G_prev is not None:
        N = 0.5 * (N + G_prev @ S_eta @ G_prev.T)
    N = N + W @ S_w @ W.T
    return AugmentedCovariance(lyapunov_rk4(C, F_script, N, dt))


def update_augmented(C_A, K, H_x, R):
    """Measurement update of the augmented covariance with a fixed gain K."""
    C = _as_augmented(C_A)
    K = np.atleast_2d(np.asarray(K, dtype=float))
    H_x = np.atleast_2d(np.asarray(H_x, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    n_z = H_x.shape[0]
    if K.shape != (N_STATES, n_z) or H_x.shape != (n_z, N_STATES) or R.shape != (n_z, n_z):
        raise ValidationError(
            f"inconsistent update shapes K{K.shape} H{H_x.shape} R{R.shape}")

    KH = K @ H_x
    A = np.eye(N_AUG)
    A[N_STATES:, :N_STATES] = KH
    A[N_STATES:, N_STATES:] -= KH
    B = np.vstack([np.zeros((N_STATES, n_z)), K])
    return AugmentedCovariance(A @ C @ A.T + B @ R @ B.T)


def true_nav_covariance(C_A):
    """P_true = [-I I] C_A [-I I]'."""
    C = _as_augmented(C_A)
    return symmetrize(_TRUE_ERROR_SELECTOR @ C @ _TRUE_ERROR_SELECTOR.T)


def _initial_truth(P0, sources):
    P0 = P0.P if hasattr(P0, 'P') else np.asarray(P0, dtype=float)
    mask = np.zeros(N_STATES)
    if sources.initial_conditions:
        mask[0:9] = 1.0
    if sources.accel_bias:
        mask[BA] = 1.0
    if sources.gyro_bias:
        mask[BG] = 1.0
    return P0 * np.outer(mask, mask)


def _radar_covariances(radars, sources):
    """Per-source blocks of C_rr; the position/constant cross terms belong to
    neither source and are left out."""
    pos = np.array([1.0, 1.0, 1.0, 0.0]) * sources.radar_position
    const = np.array([0.0, 0.0, 0.0, 1.0]) * sources.radar_constant
    mask = np.outer(pos, pos) + np.outer(const, const)
    return [radar.C_rr * mask for radar in radars]


def _gain_schedule(gains):
    schedule = defaultdict(list)
    for rec in gains:
        schedule[rec.index].append(rec)
    return schedule


def _augmented_dynamics(T, nu, imu):
    F_hat = nav_dynamics_matrix(T, nu, imu.tau_a, imu.tau_g)
    F_x = truth_dispersion_matrix(T, nu, imu.tau_a, imu.tau_g)
    return build_augmented(F_x, F_hat, imu_output_matrix(T))


def propagate_dispersions(trajectory, P0, imu, gains, sources, measurement_sources=None):
    """
    Run the augmented model along a trajectory with a fixed gain schedule.

    Returns:
        (N, 15, 15) true navigation error covariance after each sample's updates
    """
    n = len(trajectory)
    dt = trajectory.dt
    T = trajectory.T_b_n
    nu = trajectory.nu_b
    schedule = _gain_schedule(gains)
    measurement_sources = measurement_sources or MEASUREMENT_SOURCES

    S_eta = np.diag(np.repeat([imu.q_nu * sources.accel_noise,
                               imu.q_omega * sources.gyro_noise], 3))
    S_w = np.diag(np.repeat([imu.q_a * sources.accel_bias, imu.q_g * sources.gyro_bias], 3))

    def update(C, k):
        for rec in schedule.get(k, ()):
            on = getattr(sources, measurement_sources[rec.kind])
            C = update_augmented(C, rec.K, rec.H, rec.R if on else np.zeros_like(rec.R))
        return C

    C = np.zeros((N_AUG, N_AUG))
    C[:N_STATES, :N_STATES] = _initial_truth(P0, sources)
    C = update(AugmentedCovariance(C), 0)

    P_true = np.empty((n, N_STATES, N_STATES))
    P_true[0] = true_nav_covariance(C)
    F_prev, G_prev, _ = _augmented_dynamics(T[0], nu[0], imu)
    for k in range(1, n):
        F_k, G_k, W = _augmented_dynamics(T[k], nu[k], imu)
        C = propagate_augmented(C, 0.5 * (F_k + F_prev), G_k, W, S_eta, S_w, dt, G_prev=G_prev)
        C = update(C, k)
        P_true[k] = true_nav_covariance(C)
        F_prev, G_prev = F_k, G_k
    return P_true


def sigma_pd_series(scenario, sources, trajectory=None, history=None):
    """
    sigma_pd of every radar along a trajectory with only ``sources`` active.

    Args:
        scenario: Scenario
        sources: NoiseSourceSet
        trajectory: defaults to the scenario's reference trajectory
        history: all-on CovarianceHistory whose gains are replayed; computed
            when omitted

    Returns:
        DetectionSeries with the gain-schedule checksum in its metadata
    """
    if trajectory is None:
        trajectory = scenario.build_trajectory()
    if history is None:
        history = run_covariance(trajectory, scenario.P0, scenario.imu, scenario.meas)
    if len(history) != len(trajectory):
        raise ValidationError("gain schedule does not match the trajectory")

    if sources.nav_active:
        P_true = propagate_dispersions(trajectory, scenario.P0, scenario.imu,
                                       history.gains, sources)
        C_aa = aircraft_covariance(P_true)
    else:
        C_aa = np.zeros((len(trajectory), 6, 6))

    return detection_series(
        trajectory, C_aa, scenario.radars, scenario.rcs,
        C_rr=_radar_covariances(scenario.radars, sources),
        metadata={'sources': list(sources.active()),
                  'gain_checksum': history.checksum()},
    )


@dataclass
class ErrorBudget:
    """sigma_pd per source at one snapshot, for one radar."""

    t_snapshot: float
    sample_index: int
    radar_name: str
    sources: tuple
    sigma: np.ndarray
    total: float
    gain_checksums: tuple

    @property
    def rss(self):
        return float(np.sqrt(np.sum(self.sigma ** 2)))

    @property
    def evaluations(self):
        return len(self.sources) + 1

    def percent(self):
        if self.total == 0.0:
            return np.zeros_like(self.sigma)
        return 100.0 * self.sigma / self.total

    def variance_share(self):
        if self.total == 0.0:
            return np.zeros_like(self.sigma)
        return 100.0 * self.sigma ** 2 / self.total ** 2

    def to_frame(self):
        frame = pd.DataFrame({
            'source': list(self.sources) + ['Total'],
            '3sigma_pd [-]': np.append(3.0 * self.sigma, 3.0 * self.total),
            'percent_of_total [%]': np.append(self.percent(), 100.0 if self.total else 0.0),
            'variance_share [%]': np.append(self.variance_share(), 100.0 if self.total else 0.0),
        })
        return frame

    def metadata(self):
        return {
            't_snapshot [s]': self.t_snapshot,
            'sample_index': self.sample_index,
            'radar': self.radar_name,
            'evaluations': self.evaluations,
            'rss_3sigma_pd': 3.0 * self.rss,
            'gain_checksum': self.gain_checksums[0] if self.gain_checksums else None,
        }


def _budget_run(args):
    scenario, trajectory, history, sources = args
    return sigma_pd_series(scenario, sources, trajectory=trajectory, history=history)


def error_budget(scenario, t_snapshot, sources=None, trajectory=None, radar=None, workers=None):
    """
    Per-source sigma_pd at ``t_snapshot``.

    One all-on run plus one run per source, all replaying the same gain schedule.

    Args:
        scenario: Scenario
        t_snapshot: time along the trajectory, s
        sources: names of the sources to budget; all of them by default
        trajectory: defaults to the scenario's reference trajectory
        radar: radar name; defaults to the radar with the largest all-on sigma_pd
        workers: process count; 1 runs in-process

    Returns:
        ErrorBudget
    """
    sources = tuple(sources or NoiseSourceSet.names())
    if trajectory is None:
        trajectory = scenario.build_trajectory()
    if not trajectory.t[0] <= t_snapshot <= trajectory.t[-1]:
        raise ValidationError(
            f"t_snapshot {t_snapshot} s outside [{trajectory.t[0]}, {trajectory.t[-1]}] s")

    history = run_covariance(trajectory, scenario.P0, scenario.imu, scenario.meas)
    runs = [NoiseSourceSet.only(*sources)] + [NoiseSourceSet.only(name) for name in sources]
    tasks = [(scenario, trajectory, history, s) for s in runs]

    workers = MAX_WORKERS if workers is None else workers
    logger.info("error budget: %d evaluations at t = %.1f s", len(tasks), t_snapshot)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            results = list(progress(executor.map(_budget_run, tasks), total=len(tasks),
                                    desc="Budget"))
    else:
        results = [_budget_run(task) for task in progress(tasks, desc="Budget")]

    k = int(np.argmin(np.abs(trajectory.t - t_snapshot)))
    total_series = results[0]
    if radar is None:
        i = int(np.argmax(total_series.sigma_pd[:, k]))
    elif radar in total_series.radar_names:
        i = total_series.radar_names.index(radar)
    else:
        raise ValidationError(f"unknown radar {radar!r}")

    budget = ErrorBudget(
        t_snapshot=float(trajectory.t[k]),
        sample_index=k,
        radar_name=total_series.radar_names[i],
        sources=sources,
        sigma=np.array([series.sigma_pd[i, k] for series in results[1:]]),
        total=float(total_series.sigma_pd[i, k]),
        gain_checksums=tuple(series.metadata['gain_checksum'] for series in results),
    )
    if budget.total > 0 and not math.isclose(budget.rss, budget.total, rel_tol=0.02):
        logger.warning("budget RSS %.3e differs from total %.3e by more than 2%%",
                       budget.rss, budget.total)
    return budget


def imu_share(budget):
    """sigma_pd attributable to the IMU sources of a budget, RSS-combined."""
    idx = [j for j, name in enumerate(budget.sources) if name in IMU_SOURCES]
    return float(np.sqrt(np.sum(budget.sigma[idx] ** 2)))
