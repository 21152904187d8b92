"""Waypoint smoothing with clothoid fillets and sampling of the nominal flight

Turns are flown as symmetric clothoid -> arc -> clothoid fillets at constant
speed and altitude in coordinated flight. The sampled trajectory carries the
true specific force and body rates the IMU would measure.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy import integrate
from scipy.special import fresnel

from src.config.defaults import DEFAULT_TRAJECTORY, GRAVITY
from src.errors import DomainError, InfeasibleSmoothingError, ValidationError
from src.utils.rotations import body_to_ned, ned_to_body, wrap_angle

logger = logging.getLogger(__name__)

SEGMENT_KINDS = ('line', 'arc', 'clothoid')

# Fresnel evaluation loses accuracy once the shifted argument gets large
_FRESNEL_ARG_LIMIT = 50.0


@dataclass(frozen=True)
class WaypointPath:
    points: np.ndarray
    altitude: float
    speed: float = DEFAULT_TRAJECTORY['speed']

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
            raise ValidationError("a waypoint path needs at least two 2-D points")
        if np.any(np.linalg.norm(np.diff(pts, axis=0), axis=1) == 0.0):
            raise ValidationError("consecutive waypoints must be distinct")
        if self.speed <= 0:
            raise ValidationError("speed must be positive")
        object.__setattr__(self, 'points', pts)


@dataclass(frozen=True)
class PathSegment:
    kind: str
    x0: float
    y0: float
    psi0: float
    kappa0: float
    kappa_rate: float
    length: float

    def __post_init__(self):
        if self.kind not in SEGMENT_KINDS:
            raise ValidationError(f"unknown segment kind {self.kind!r}")
        if self.length <= 0:
            raise ValidationError("segment length must be positive")

    def end(self):
        return clothoid_point(self.length, self)


@dataclass(frozen=True)
class TrajectorySample:
    t: float
    p_n: np.ndarray
    v_n: np.ndarray
    theta: np.ndarray
    nu_b: np.ndarray
    omega_b: np.ndarray
    kappa: float


@dataclass
class Trajectory:
    """Uniformly sampled nominal trajectory stored column-wise.

    Indexing returns a TrajectorySample.
    """

    t: np.ndarray
    p_n: np.ndarray
    v_n: np.ndarray
    theta: np.ndarray
    nu_b: np.ndarray
    omega_b: np.ndarray
    kappa: np.ndarray
    dt: float
    speed: float

    def __len__(self):
        return len(self.t)

    def __getitem__(self, k):
        return TrajectorySample(float(self.t[k]), self.p_n[k], self.v_n[k], self.theta[k],
                                self.nu_b[k], self.omega_b[k], float(self.kappa[k]))

    def __iter__(self):
        for k in range(len(self)):
            yield self[k]

    @property
    def T_b_n(self):
        return body_to_ned(self.theta)

    @property
    def duration(self):
        return float(self.t[-1])

    @property
    def path_length(self):
        return float(np.sum(np.linalg.norm(np.diff(self.p_n, axis=0), axis=1)))

    def to_frame(self):
        columns = {
            't [s]': self.t,
            'p_n [m]': self.p_n[:, 0], 'p_e [m]': self.p_n[:, 1], 'p_d [m]': self.p_n[:, 2],
            'v_n [m/s]': self.v_n[:, 0], 'v_e [m/s]': self.v_n[:, 1], 'v_d [m/s]': self.v_n[:, 2],
            'roll [rad]': self.theta[:, 0], 'pitch [rad]': self.theta[:, 1],
            'yaw [rad]': self.theta[:, 2],
            'nu_x [m/s^2]': self.nu_b[:, 0], 'nu_y [m/s^2]': self.nu_b[:, 1],
            'nu_z [m/s^2]': self.nu_b[:, 2],
            'omega_x [rad/s]': self.omega_b[:, 0], 'omega_y [rad/s]': self.omega_b[:, 1],
            'omega_z [rad/s]': self.omega_b[:, 2],
            'kappa [1/m]': self.kappa,
        }
        return pd.DataFrame(columns)


def _fresnel_offsets(s, psi0, kappa0, k):
    """Offsets of a clothoid with k > 0 via Fresnel integrals."""
    scale = math.sqrt(k / math.pi)
    shift = kappa0 / k
    c0 = psi0 - kappa0 ** 2 / (2.0 * k)
    S1, C1 = fresnel(scale * (s + shift))
    S0, C0 = fresnel(scale * shift)
    dC, dS = C1 - C0, S1 - S0
    factor = math.sqrt(math.pi / k)
    dx = factor * (math.cos(c0) * dC - math.sin(c0) * dS)
    dy = factor * (math.sin(c0) * dC + math.cos(c0) * dS)
    return dx, dy


def _quad_offsets(s, psi0, kappa0, k):
    def heading(xi):
        return psi0 + kappa0 * xi + 0.5 * k * xi * xi

    dx = np.array([integrate.quad(lambda xi: math.cos(heading(xi)), 0.0, si,
                                  epsabs=1e-12, epsrel=1e-12, limit=200)[0] for si in s])
    dy = np.array([integrate.quad(lambda xi: math.sin(heading(xi)), 0.0, si,
                                  epsabs=1e-12, epsrel=1e-12, limit=200)[0] for si in s])
    return dx, dy


def _offsets(s, psi0, kappa0, k):
    if k == 0.0:
        # chord of a circular arc (line when kappa0 == 0)
        chord = s * np.sinc(kappa0 * s / (2.0 * math.pi))
        mid = psi0 + 0.5 * kappa0 * s
        return chord * np.cos(mid), chord * np.sin(mid)
    if abs(kappa0 / k) * math.sqrt(abs(k) / math.pi) > _FRESNEL_ARG_LIMIT:
        dx, dy = _quad_offsets(np.atleast_1d(s).ravel(), psi0, kappa0, k)
        return dx.reshape(np.shape(s)), dy.reshape(np.shape(s))
    if k > 0:
        return _fresnel_offsets(s, psi0, kappa0, k)
    dx, dy = _fresnel_offsets(s, -psi0, -kappa0, -k)
    return dx, -dy


def clothoid_point(s, seg):
    """
    Pose and curvature at arc length ``s`` along a segment.

    Args:
        s: arc length from the segment start, m (scalar or array)
        seg: PathSegment

    Returns:
        tuple: (x, y, psi, kappa)
    """
    s_arr = np.asarray(s, dtype=float)
    tol = 1e-9 * max(seg.length, 1.0)
    if np.any(s_arr < -tol) or np.any(s_arr > seg.length + tol):
        raise DomainError(f"arc length outside [0, {seg.length}]")
    s_arr = np.clip(s_arr, 0.0, seg.length)
    dx, dy = _offsets(s_arr, seg.psi0, seg.kappa0, seg.kappa_rate)
    psi = seg.psi0 + seg.kappa0 * s_arr + 0.5 * seg.kappa_rate * s_arr ** 2
    kappa = seg.kappa0 + seg.kappa_rate * s_arr
    x, y = seg.x0 + dx, seg.y0 + dy
    if np.ndim(s) == 0:
        return float(x), float(y), float(psi), float(kappa)
    return x, y, psi, kappa


def _fillet_shape(turn, kappa_max, kappa_rate_max):
    """Peak curvature, clothoid length and arc length for an unsigned turn angle."""
    if turn * kappa_rate_max >= kappa_max ** 2:
        kappa_peak = kappa_max
        clothoid_len = kappa_max / kappa_rate_max
        arc_len = turn / kappa_max - clothoid_len
    else:
        kappa_peak = math.sqrt(turn * kappa_rate_max)
        clothoid_len = kappa_peak / kappa_rate_max
        arc_len = 0.0
    return kappa_peak, clothoid_len, arc_len


def _fillet_segments(x0, y0, psi0, turn_sign, kappa_peak, clothoid_len, arc_len):
    kp = turn_sign * kappa_peak
    rate = kp / clothoid_len
    segments = [PathSegment('clothoid', x0, y0, psi0, 0.0, rate, clothoid_len)]
    if arc_len > 1e-9:
        x, y, psi, _ = segments[-1].end()
        segments.append(PathSegment('arc', x, y, psi, kp, 0.0, arc_len))
    x, y, psi, _ = segments[-1].end()
    segments.append(PathSegment('clothoid', x, y, psi, kp, -rate, clothoid_len))
    return segments


def _tangent_distance(turn, kappa_peak, clothoid_len, arc_len):
    """Distance from the fillet start to the waypoint along the incoming leg."""
    shape = _fillet_segments(0.0, 0.0, 0.0, 1.0, kappa_peak, clothoid_len, arc_len)
    x_end, y_end, _, _ = shape[-1].end()
    return x_end - y_end * math.cos(turn) / math.sin(turn)


def smooth_waypoints(path, kappa_max=DEFAULT_TRAJECTORY['kappa_max'],
                     kappa_rate_max=DEFAULT_TRAJECTORY['kappa_rate_max']):
    """
    Replace the corners of a waypoint path with clothoid-arc-clothoid fillets.

    Args:
        path: WaypointPath
        kappa_max: curvature limit, 1/m
        kappa_rate_max: curvature-rate limit, 1/m^2

    Returns:
        list of PathSegment forming a G2-continuous chain

    Raises:
        InfeasibleSmoothingError: a fillet does not fit on its legs
    """
    pts = path.points
    legs = np.diff(pts, axis=0)
    leg_len = np.linalg.norm(legs, axis=1)
    headings = np.arctan2(legs[:, 1], legs[:, 0])

    n = len(pts)
    turns = np.zeros(n)
    tangents = np.zeros(n)
    shapes = [None] * n
    for i in range(1, n - 1):
        turn = float(wrap_angle(headings[i] - headings[i - 1]))
        if abs(abs(turn) - math.pi) < 1e-12:
            raise InfeasibleSmoothingError("turn angle reaches pi", i)
        turns[i] = turn
        if abs(turn) < 1e-12:
            continue
        shapes[i] = _fillet_shape(abs(turn), kappa_max, kappa_rate_max)
        tangents[i] = _tangent_distance(abs(turn), *shapes[i])

    for j in range(n - 1):
        if tangents[j] + tangents[j + 1] > leg_len[j] * (1.0 + 1e-12):
            blame = j if tangents[j] >= tangents[j + 1] else j + 1
            raise InfeasibleSmoothingError(
                f"fillets need {tangents[j] + tangents[j + 1]:.1f} m on a {leg_len[j]:.1f} m leg",
                blame)

    segments = []
    x, y = pts[0]
    psi = float(headings[0])
    pending = 0.0
    for i in range(1, n):
        pending += leg_len[i - 1] - tangents[i - 1] - tangents[i]
        if i == n - 1 or shapes[i] is not None:
            if pending > 1e-9:
                segments.append(PathSegment('line', x, y, psi, 0.0, 0.0, pending))
                x, y, psi, _ = segments[-1].end()
            pending = 0.0
        if i < n - 1 and shapes[i] is not None:
            fillet = _fillet_segments(x, y, psi, math.copysign(1.0, turns[i]), *shapes[i])
            segments.extend(fillet)
            x, y, psi, _ = fillet[-1].end()

    logger.debug("smoothed %d waypoints into %d segments", n, len(segments))
    return segments


def coordinated_turn_roll(psi_dot, speed):
    """Bank angle of a coordinated turn, rad."""
    return np.arctan(np.asarray(psi_dot) * speed / GRAVITY)


def specific_force(psi, psi_dot, speed, T_n_b, speed_dot=0.0):
    """Body-frame specific force for constant-altitude curvilinear flight."""
    psi = np.asarray(psi, dtype=float)
    accel_n = np.stack([
        speed_dot * np.cos(psi) - speed * psi_dot * np.sin(psi),
        speed_dot * np.sin(psi) + speed * psi_dot * np.cos(psi),
        np.full_like(psi, -GRAVITY),
    ], axis=-1)
    return np.einsum('...ij,...j->...i', T_n_b, accel_n)


def body_rates(psi_dot, psi_ddot, roll, pitch, speed, speed_dot=0.0):
    """Body angular rates for coordinated flight at constant pitch."""
    roll_rate = np.cos(roll) ** 2 * (psi_ddot * speed + psi_dot * speed_dot) / GRAVITY
    return np.stack([
        roll_rate - psi_dot * np.sin(pitch),
        psi_dot * np.sin(roll) * np.cos(pitch),
        psi_dot * np.cos(roll) * np.cos(pitch),
    ], axis=-1)


def sample_trajectory(segments, speed=DEFAULT_TRAJECTORY['speed'], dt=DEFAULT_TRAJECTORY['dt'],
                      altitude=0.0, pitch_trim=DEFAULT_TRAJECTORY['pitch_trim']):
    """
    Sample a segment chain at fixed time steps.

    Samples fall at t = 0, dt, 2 dt, ... and the last one at the chain
    duration T. When T is not a whole number of steps, dt shrinks to
    T / ceil(T / dt) so the end point is sampled. At a joint the sample
    belongs to the segment that ends there.

    Returns:
        Trajectory
    """
    if dt <= 0:
        raise ValidationError("dt must be positive")
    lengths = np.array([seg.length for seg in segments])
    starts = np.concatenate([[0.0], np.cumsum(lengths)])
    total = starts[-1]
    steps = total / (speed * dt)
    n_steps = max(1, int(math.ceil(steps - 1e-9)))
    if abs(n_steps - steps) > 1e-9 * max(1.0, steps):
        logger.debug("dt %.6g s does not divide %.3f s; using %.6g s",
                     dt, total / speed, total / (speed * n_steps))
        dt = total / (speed * n_steps)
    n_samples = n_steps + 1
    t = np.arange(n_samples) * dt
    s = np.minimum(speed * t, total)
    s[-1] = total

    idx = np.clip(np.searchsorted(starts[1:], s, side='left'), 0, len(segments) - 1)
    x = np.empty(n_samples)
    y = np.empty(n_samples)
    psi = np.empty(n_samples)
    kappa = np.empty(n_samples)
    kappa_rate = np.empty(n_samples)
    for j, seg in enumerate(segments):
        mask = idx == j
        if not np.any(mask):
            continue
        local = np.clip(s[mask] - starts[j], 0.0, seg.length)
        x[mask], y[mask], psi[mask], kappa[mask] = clothoid_point(local, seg)
        kappa_rate[mask] = seg.kappa_rate

    psi_dot = speed * kappa
    psi_ddot = speed ** 2 * kappa_rate
    roll = coordinated_turn_roll(psi_dot, speed)
    pitch = np.full(n_samples, float(pitch_trim))
    yaw = wrap_angle(psi)
    theta = np.stack([roll, pitch, yaw], axis=1)

    p_n = np.stack([x, y, np.full(n_samples, -float(altitude))], axis=1)
    v_n = speed * np.stack([np.cos(psi), np.sin(psi), np.zeros(n_samples)], axis=1)
    nu_b = specific_force(psi, psi_dot, speed, ned_to_body(theta))
    omega_b = body_rates(psi_dot, psi_ddot, roll, pitch, speed)
    return Trajectory(t, p_n, v_n, theta, nu_b, omega_b, kappa, float(dt), float(speed))


def trajectory_from_waypoints(points, altitude, speed=DEFAULT_TRAJECTORY['speed'],
                              dt=DEFAULT_TRAJECTORY['dt'],
                              kappa_max=DEFAULT_TRAJECTORY['kappa_max'],
                              kappa_rate_max=DEFAULT_TRAJECTORY['kappa_rate_max'],
                              pitch_trim=DEFAULT_TRAJECTORY['pitch_trim']):
    """Smooth and sample a waypoint list in one call."""
    path = WaypointPath(points, altitude, speed)
    segments = smooth_waypoints(path, kappa_max, kappa_rate_max)
    return sample_trajectory(segments, speed, dt, altitude, pitch_trim)
