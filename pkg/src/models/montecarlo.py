"""Monte Carlo validation: noisy truth, a full error-state EKF per run and
ensemble statistics of the P_D error"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd
from scipy.signal import lfilter
from scipy.spatial.transform import Rotation

from src.config import MAX_WORKERS
from src.errors import NumericalError, ValidationError
from src.models.ins import (
    ATT, BA, BG, MEASUREMENT_KINDS, POS, VEL, kalman_update, measurement_model,
    nav_dynamics_matrix, integrated_process_noise, stm_lear, strapdown_step,
)
from src.models.lincov import NoiseSourceSet
from src.models.radar import detection_jacobians
from src.utils.linalg import symmetrize
from src.utils.progress import progress
from src.utils.rotations import dcm_to_euler, euler_to_quat, quat_to_dcm, wrap_angle

logger = logging.getLogger(__name__)

MAX_FAILURE_FRACTION = 0.01
ERROR_SIGNS = ('run_minus_nominal', 'nominal_minus_run')

# Stream ids; a stream is keyed by (seed, run, channel) so toggling one source
# never shifts the draws of another.
CHANNELS = {name: i for i, name in enumerate((
    'init_pos', 'init_vel', 'init_att', 'init_ba', 'init_bg',
    'accel_noise', 'gyro_noise', 'accel_bias_drive', 'gyro_bias_drive',
    'pos_meas', 'alt_meas', 'hdg_meas', 'radar_pos', 'radar_const',
))}


def stream(seed, run, channel):
    """Counter-based generator for one (seed, run, channel) triple."""
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, (run << 16) | CHANNELS[channel]], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _normal(seed, run, channel, shape, on):
    if not on:
        return np.zeros(shape)
    return stream(seed, run, channel).standard_normal(shape)


def _psd_sqrt(C):
    w, V = np.linalg.eigh(symmetrize(np.asarray(C, dtype=float)))
    return V * np.sqrt(np.clip(w, 0.0, None))


def _fogm(initial, sigma_ss, tau, dt, white):
    """Exact first-order Gauss-Markov samples starting from ``initial``."""
    phi = math.exp(-dt / tau)
    drive = sigma_ss * math.sqrt(1.0 - phi * phi) * white
    drive[0] = initial
    return lfilter([1.0], [1.0, -phi], drive, axis=0)


@dataclass
class RunDraws:
    """Every random quantity of one run."""

    dx0: np.ndarray
    accel_bias: np.ndarray
    gyro_bias: np.ndarray
    accel_noise: np.ndarray
    gyro_noise: np.ndarray
    pos_noise: np.ndarray
    alt_noise: np.ndarray
    hdg_noise: np.ndarray
    radar_dx: list


def draw_run(scenario, n, dt, seed, run, sources):
    """Sample the dispersions of one run for the active sources."""
    imu, meas = scenario.imu, scenario.meas
    P0 = scenario.P0.P
    sd = np.sqrt(np.clip(np.diag(P0), 0.0, None))

    dx0 = np.zeros(15)
    ic = sources.initial_conditions
    dx0[POS] = sd[POS] * _normal(seed, run, 'init_pos', 3, ic)
    dx0[VEL] = sd[VEL] * _normal(seed, run, 'init_vel', 3, ic)
    dx0[ATT] = sd[ATT] * _normal(seed, run, 'init_att', 3, ic)
    ba0 = sd[BA] * _normal(seed, run, 'init_ba', 3, sources.accel_bias)
    bg0 = sd[BG] * _normal(seed, run, 'init_bg', 3, sources.gyro_bias)

    accel_bias = _fogm(ba0, imu.sigma_a_ss * sources.accel_bias, imu.tau_a, dt,
                       _normal(seed, run, 'accel_bias_drive', (n, 3), sources.accel_bias))
    gyro_bias = _fogm(bg0, imu.sigma_g_ss * sources.gyro_bias, imu.tau_g, dt,
                      _normal(seed, run, 'gyro_bias_drive', (n, 3), sources.gyro_bias))

    # Zero-order hold: one white-noise sample per step, sigma = sqrt(q / dt).
    accel_noise = math.sqrt(imu.q_nu / dt) * _normal(seed, run, 'accel_noise', (n, 3),
                                                     sources.accel_noise)
    gyro_noise = math.sqrt(imu.q_omega / dt) * _normal(seed, run, 'gyro_noise', (n, 3),
                                                       sources.gyro_noise)

    pos_sigma = np.array([meas.sigma_n, meas.sigma_e, meas.sigma_d])
    pos_noise = pos_sigma * _normal(seed, run, 'pos_meas', (n, 3), sources.pos_meas_noise)
    alt_noise = meas.sigma_h * _normal(seed, run, 'alt_meas', n, sources.alt_meas_noise)
    hdg_noise = meas.sigma_psi * _normal(seed, run, 'hdg_meas', n, sources.heading_meas_noise)

    # Position and constant are drawn from their own blocks of C_rr; any
    # position/constant cross-covariance is not sampled.
    n_radars = len(scenario.radars)
    pos_white = _normal(seed, run, 'radar_pos', (n_radars, 4), sources.radar_position)
    const_white = _normal(seed, run, 'radar_const', n_radars, sources.radar_constant)
    pos_mask = np.array([1.0, 1.0, 1.0, 0.0])
    radar_dx = []
    for i, radar in enumerate(scenario.radars):
        dx = _psd_sqrt(radar.C_rr * np.outer(pos_mask, pos_mask)) @ pos_white[i]
        dx[3] = math.sqrt(max(radar.C_rr[3, 3], 0.0)) * const_white[i]
        radar_dx.append(dx)

    return RunDraws(dx0, accel_bias, gyro_bias, accel_noise, gyro_noise,
                    pos_noise, alt_noise, hdg_noise, radar_dx)


def _to_quat(T):
    x, y, z, w = Rotation.from_matrix(T).as_quat()
    return np.array([w, x, y, z])


def _correct_attitude(q_hat, dtheta):
    """T_hat <- (I - [dtheta x]) T_hat, applied as an exact rotation."""
    if not np.any(dtheta):
        return q_hat
    T = Rotation.from_rotvec(-dtheta).as_matrix() @ quat_to_dcm(q_hat)
    return _to_quat(T)


def simulate_run(scenario, trajectory, draws):
    """
    Integrate truth and navigation for one run.

    Returns:
        tuple: (true positions (N, 3), true body-to-NED matrices (N, 3, 3),
        navigation positions (N, 3), navigation body-to-NED matrices (N, 3, 3))
    """
    imu, meas = scenario.imu, scenario.meas
    n, dt = len(trajectory), trajectory.dt
    nu, omega = trajectory.nu_b, trajectory.omega_b
    denied = meas.denied(trajectory.p_n[:, :2])
    strides = {kind: meas.stride(kind, dt) for kind in MEASUREMENT_KINDS}
    models = {kind: measurement_model(kind, meas) for kind in MEASUREMENT_KINDS}
    decay_a = math.exp(-dt / imu.tau_a)
    decay_g = math.exp(-dt / imu.tau_g)

    # Truth starts dispersed, navigation starts at the nominal state.
    p = trajectory.p_n[0] + draws.dx0[POS]
    v = trajectory.v_n[0] + draws.dx0[VEL]
    q = _correct_attitude(euler_to_quat(trajectory.theta[0]), draws.dx0[ATT])
    p_hat = trajectory.p_n[0].copy()
    v_hat = trajectory.v_n[0].copy()
    q_hat = euler_to_quat(trajectory.theta[0])
    ba_hat = np.zeros(3)
    bg_hat = np.zeros(3)
    P = scenario.P0.P.copy()

    p_true = np.empty((n, 3))
    T_true = np.empty((n, 3, 3))
    p_nav = np.empty((n, 3))
    T_nav = np.empty((n, 3, 3))

    def imu_output(k, hold):
        nu_m = nu[k] + draws.accel_bias[k] + draws.accel_noise[hold]
        omega_m = omega[k] + draws.gyro_bias[k] + draws.gyro_noise[hold]
        return nu_m, omega_m

    def update(k, p_hat, v_hat, q_hat, ba_hat, bg_hat, P):
        for kind in MEASUREMENT_KINDS:
            if k % strides[kind] or (denied[k] and kind != 'altitude'):
                continue
            H, R = models[kind]
            if kind == 'position':
                r = p + draws.pos_noise[k] - p_hat
            elif kind == 'altitude':
                r = np.array([(-p[2] + draws.alt_noise[k]) - (-p_hat[2])])
            else:
                psi = dcm_to_euler(quat_to_dcm(q))[2]
                psi_hat = dcm_to_euler(quat_to_dcm(q_hat))[2]
                r = np.array([wrap_angle(psi + draws.hdg_noise[k] - psi_hat)])
            P, K = kalman_update(P, H, R)
            dx = K @ r
            p_hat = p_hat + dx[POS]
            v_hat = v_hat + dx[VEL]
            q_hat = _correct_attitude(q_hat, dx[ATT])
            ba_hat = ba_hat + dx[BA]
            bg_hat = bg_hat + dx[BG]
        return p_hat, v_hat, q_hat, ba_hat, bg_hat, P

    p_hat, v_hat, q_hat, ba_hat, bg_hat, P = update(0, p_hat, v_hat, q_hat, ba_hat, bg_hat, P)
    p_true[0], T_true[0] = p, quat_to_dcm(q)
    p_nav[0], T_nav[0] = p_hat, quat_to_dcm(q_hat)

    nu_prev, omega_prev = imu_output(0, 1 if n > 1 else 0)
    F_prev = nav_dynamics_matrix(T_nav[0], nu_prev - ba_hat, imu.tau_a, imu.tau_g)
    for k in range(1, n):
        p, v, q = strapdown_step(p, v, q, nu[k - 1], nu[k], omega[k - 1], omega[k], dt)

        # Both ends of the step see the same held noise sample.
        nu0, w0 = imu_output(k - 1, k)
        nu1, w1 = imu_output(k, k)
        ba_next = decay_a * ba_hat
        bg_next = decay_g * bg_hat
        p_hat, v_hat, q_hat = strapdown_step(p_hat, v_hat, q_hat, nu0 - ba_hat, nu1 - ba_next,
                                             w0 - bg_hat, w1 - bg_next, dt)
        T_prev = T_nav[k - 1]
        T_k = quat_to_dcm(q_hat)
        F_k = nav_dynamics_matrix(T_k, nu1 - ba_next, imu.tau_a, imu.tau_g)
        Phi = stm_lear(F_k, F_prev, dt)
        Q = integrated_process_noise(T_k, T_prev, nu1 - ba_next, nu0 - ba_hat, imu, dt)
        P = symmetrize(Phi @ P @ Phi.T + Q)
        ba_hat, bg_hat = ba_next, bg_next

        p_hat, v_hat, q_hat, ba_hat, bg_hat, P = update(k, p_hat, v_hat, q_hat, ba_hat, bg_hat, P)
        if not (np.all(np.isfinite(P)) and np.all(np.isfinite(p_hat))):
            raise NumericalError(f"filter diverged at sample {k}")
        p_true[k], T_true[k] = p, quat_to_dcm(q)
        p_nav[k], T_nav[k] = p_hat, quat_to_dcm(q_hat)
        F_prev = nav_dynamics_matrix(T_nav[k], nu1 - ba_hat, imu.tau_a, imu.tau_g)

    return p_true, T_true, p_nav, T_nav


def implied_pose(trajectory, p_true, T_true, p_nav, T_nav):
    """
    Pose the aircraft actually flies when guidance holds the navigation
    solution on the nominal path: nominal plus the navigation error.
    """
    positions = trajectory.p_n + (p_true - p_nav)
    T_err = np.einsum('nij,nkj->nik', T_true, T_nav)
    theta = dcm_to_euler(T_err @ trajectory.T_b_n)
    return positions, theta


def run_pd(scenario, trajectory, positions, theta, radar_dx):
    rows = []
    for radar, dx in zip(scenario.radars, radar_dx):
        perturbed = replace(radar, p_r_n=radar.p_r_n + dx[:3], c_r=max(radar.c_r + dx[3], 1e-12))
        rows.append(detection_jacobians(positions, theta, perturbed, scenario.rcs,
                                        with_jacobians=False).pd)
    return np.array(rows)


def _run_worker(args):
    scenario, trajectory, seed, run, sources = args
    draws = draw_run(scenario, len(trajectory), trajectory.dt, seed, run, sources)
    try:
        states = simulate_run(scenario, trajectory, draws)
        pd_run = run_pd(scenario, trajectory, *implied_pose(trajectory, *states), draws.radar_dx)
    except (NumericalError, np.linalg.LinAlgError) as e:
        logger.warning("run %d failed: %s", run, e)
        return None
    if not np.all(np.isfinite(pd_run)):
        logger.warning("run %d produced a non-finite P_D", run)
        return None
    return pd_run


@dataclass
class _Moments:
    count: int
    mean: np.ndarray
    m2: np.ndarray

    @classmethod
    def of(cls, x):
        return cls(1, x.astype(float), np.zeros_like(x, dtype=float))

    def merge(self, other):
        n = self.count + other.count
        delta = other.mean - self.mean
        mean = self.mean + delta * (other.count / n)
        m2 = self.m2 + other.m2 + delta ** 2 * (self.count * other.count / n)
        return _Moments(n, mean, m2)


def pairwise_moments(samples):
    """Mean and M2 of a sequence of arrays, merged pairwise in order."""
    parts = [_Moments.of(x) for x in samples]
    if not parts:
        raise ValidationError("no samples to accumulate")
    while len(parts) > 1:
        merged = [parts[i].merge(parts[i + 1]) for i in range(0, len(parts) - 1, 2)]
        if len(parts) % 2:
            merged.append(parts[-1])
        parts = merged
    return parts[0]


@dataclass
class EnsembleResult:
    """Ensemble statistics of P_D error, arrays indexed [radar, sample]."""

    t: np.ndarray
    radar_names: list
    n_runs: int
    n_failed: int
    pd_nominal: np.ndarray
    mean_error: np.ndarray
    sigma_error: np.ndarray
    traces: np.ndarray = None
    seed: int = 0
    sources: tuple = ()
    error_sign: str = 'run_minus_nominal'
    metadata: dict = field(default_factory=dict)

    def to_frame(self):
        data = {'t [s]': self.t}
        for i, name in enumerate(self.radar_names):
            data[f'{name}_pd_nominal [-]'] = self.pd_nominal[i]
            data[f'{name}_mean_error [-]'] = self.mean_error[i]
            data[f'{name}_sigma_error [-]'] = self.sigma_error[i]
        return pd.DataFrame(data)

    def traces_frame(self):
        if self.traces is None:
            raise ValidationError("per-run traces were not retained")
        n_runs, n_radars, n = self.traces.shape
        return pd.DataFrame({
            'run': np.repeat(np.arange(n_runs), n_radars * n),
            'radar': np.tile(np.repeat(self.radar_names, n), n_runs),
            't [s]': np.tile(self.t, n_runs * n_radars),
            'pd_error [-]': self.traces.reshape(-1),
        })


def run_ensemble(scenario, n_runs, seed, sources=None, trajectory=None, workers=None,
                 keep_traces=True, error_sign='run_minus_nominal'):
    """
    Monte Carlo ensemble of P_D error about the nominal trajectory.

    Args:
        scenario: Scenario
        n_runs: number of runs, at least 2
        seed: 64-bit seed; results depend only on (seed, run index, sources)
        sources: NoiseSourceSet, all on by default
        trajectory: defaults to the scenario's reference trajectory
        workers: process count; 1 runs in-process
        keep_traces: retain the per-run P_D error traces
        error_sign: 'run_minus_nominal' or 'nominal_minus_run'

    Returns:
        EnsembleResult

    Raises:
        NumericalError: when more than 1% of the runs fail
    """
    if n_runs < 2:
        raise ValidationError("an ensemble needs at least 2 runs")
    if error_sign not in ERROR_SIGNS:
        raise ValidationError(f"error_sign must be one of {ERROR_SIGNS}")
    sources = sources or NoiseSourceSet.all_on()
    if trajectory is None:
        trajectory = scenario.build_trajectory()

    pd_nominal = np.array([
        detection_jacobians(trajectory.p_n, trajectory.theta, radar, scenario.rcs,
                            with_jacobians=False).pd
        for radar in scenario.radars])

    tasks = [(scenario, trajectory, seed, run, sources) for run in range(n_runs)]
    workers = MAX_WORKERS if workers is None else workers
    logger.info("Monte Carlo: %d runs, %d samples, seed %d", n_runs, len(trajectory), seed)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            results = list(progress(executor.map(_run_worker, tasks, chunksize=4), total=n_runs,
                                    desc="Monte Carlo"))
    else:
        results = [_run_worker(task) for task in progress(tasks, desc="Monte Carlo")]

    failed = sum(r is None for r in results)
    if failed > MAX_FAILURE_FRACTION * n_runs:
        raise NumericalError(f"{failed} of {n_runs} Monte Carlo runs failed")
    if failed:
        logger.warning("%d of %d runs failed and were dropped", failed, n_runs)

    sign = 1.0 if error_sign == 'run_minus_nominal' else -1.0
    errors = [sign * (r - pd_nominal) for r in results if r is not None]
    moments = pairwise_moments(errors)
    sigma = np.sqrt(moments.m2 / (moments.count - 1)) if moments.count > 1 \
        else np.zeros_like(moments.mean)

    return EnsembleResult(
        t=trajectory.t.copy(),
        radar_names=[radar.name for radar in scenario.radars],
        n_runs=n_runs,
        n_failed=failed,
        pd_nominal=pd_nominal,
        mean_error=moments.mean,
        sigma_error=sigma,
        traces=np.array(errors) if keep_traces else None,
        seed=seed,
        sources=sources.active(),
        error_sign=error_sign,
    )


def coverage_check(result, lincov_series, k=3.0):
    """Fraction of (run, sample) P_D errors inside +/- k sigma_pd."""
    if result.traces is None:
        raise ValidationError("coverage needs the per-run traces")
    if (result.pd_nominal.shape != lincov_series.sigma_pd.shape
            or not np.allclose(result.t, lincov_series.t, rtol=0.0, atol=1e-9)):
        raise ValidationError("ensemble and LinCov series are not aligned")
    inside = np.abs(result.traces) <= k * lincov_series.sigma_pd[None, :, :]
    return float(inside.mean())
