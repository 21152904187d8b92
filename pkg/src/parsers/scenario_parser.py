"""Scenario documents: YAML schema, unit conversion and the Scenario container"""

import logging
import math
from dataclasses import dataclass, replace
from typing import Dict, List, Literal, Optional

import numpy as np
import pydantic
import yaml
from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, conlist, model_validator

from src.config.defaults import (
    COMMON_PARAMETERS, DEFAULT_INITIAL_SIGMAS, DEFAULT_PLANNER, DEFAULT_RATES_HZ,
    DEFAULT_TAU_A, DEFAULT_TAU_G, DEFAULT_TRAJECTORY,
)
from src.errors import ConfigError, PdvgError
from src.models.ins import ImuSpec, MeasSpec, NavCovariance, Rect
from src.models.radar import EllipsoidRcs, RadarSite
from src.models.trajectory import trajectory_from_waypoints
from src.parsers.base_parser import BaseParser

logger = logging.getLogger(__name__)

LENGTH_SCALE = {'m': 1.0, 'km': 1000.0}
ANGLE_SCALE = {'rad': 1.0, 'deg': math.pi / 180.0}
TIME_SCALE = {'s': 1.0, 'hr': 3600.0}


class _Model(BaseModel):
    model_config = ConfigDict(extra='forbid')


class UnitsModel(_Model):
    length: Literal['km', 'm'] = 'km'
    angle: Literal['deg', 'rad'] = 'deg'
    time: Literal['s', 'hr'] = 's'


class RadarModel(_Model):
    id: str
    position: List[float] = Field(min_length=2, max_length=3)
    c_r: float = Field(default=COMMON_PARAMETERS['c_r'], gt=0)
    p_fa: float = Field(default=COMMON_PARAMETERS['p_fa'], gt=0, lt=1)
    sigma_position_m: float = Field(default=0.0, ge=0)
    sigma_c_r: float = Field(default=0.0, ge=0)
    covariance: Optional[conlist(conlist(float, min_length=4, max_length=4),
                                 min_length=4, max_length=4)] = None


class RcsModel(_Model):
    a: float = Field(default=COMMON_PARAMETERS['rcs_axes_m']['a'], gt=0)
    b: float = Field(default=COMMON_PARAMETERS['rcs_axes_m']['b'], gt=0)
    c: float = Field(default=COMMON_PARAMETERS['rcs_axes_m']['c'], gt=0)


class RectModel(_Model):
    n_min: float
    n_max: float
    e_min: float
    e_max: float

    @model_validator(mode='after')
    def _ordered(self):
        if self.n_min >= self.n_max or self.e_min >= self.e_max:
            raise ValueError("rectangle needs n_min < n_max and e_min < e_max")
        return self


class ImuModel(_Model):
    """Exactly one of: a grade name, the 3-sigma table form, or SI PSDs."""

    grade: Optional[Literal['industrial', 'tactical']] = None
    vrw_3sigma: Optional[float] = Field(default=None, ge=0)
    accel_bias_3sigma: Optional[float] = Field(default=None, ge=0)
    arw_3sigma: Optional[float] = Field(default=None, ge=0)
    gyro_bias_3sigma: Optional[float] = Field(default=None, ge=0)
    q_nu: Optional[float] = Field(default=None, ge=0)
    q_omega: Optional[float] = Field(default=None, ge=0)
    sigma_a_ss: Optional[float] = Field(default=None, ge=0)
    sigma_g_ss: Optional[float] = Field(default=None, ge=0)
    tau_a: Optional[float] = Field(default=None, gt=0)
    tau_g: Optional[float] = Field(default=None, gt=0)

    @model_validator(mode='after')
    def _one_form(self):
        table = (self.vrw_3sigma, self.accel_bias_3sigma, self.arw_3sigma, self.gyro_bias_3sigma)
        psd = (self.q_nu, self.q_omega, self.sigma_a_ss, self.sigma_g_ss)
        forms = [self.grade is not None, any(v is not None for v in table),
                 any(v is not None for v in psd)]
        if sum(forms) != 1:
            raise ValueError("give exactly one of grade, the 3-sigma table values or SI PSDs")
        if forms[1] and any(v is None for v in table):
            raise ValueError("3-sigma form needs vrw, accel_bias, arw and gyro_bias")
        if forms[2] and any(v is None for v in psd):
            raise ValueError("SI form needs q_nu, q_omega, sigma_a_ss and sigma_g_ss")
        return self


class MeasurementModel(_Model):
    sigma_n_m: float = Field(default=COMMON_PARAMETERS['sigma_n_m'], gt=0)
    sigma_e_m: float = Field(default=COMMON_PARAMETERS['sigma_e_m'], gt=0)
    sigma_d_m: float = Field(default=COMMON_PARAMETERS['sigma_d_m'], gt=0)
    sigma_h_m: float = Field(default=COMMON_PARAMETERS['sigma_h_m'], gt=0)
    # angle units; None means the tabulated value
    sigma_psi: Optional[float] = Field(default=None, gt=0)
    rates_hz: Dict[Literal['position', 'altitude', 'heading'], PositiveFloat] = Field(
        default_factory=lambda: dict(DEFAULT_RATES_HZ))


class InitialModel(_Model):
    sigma_p_m: float = Field(default=DEFAULT_INITIAL_SIGMAS['sigma_p_m'], ge=0)
    sigma_v_mps: float = Field(default=DEFAULT_INITIAL_SIGMAS['sigma_v_mps'], ge=0)
    sigma_theta: Optional[float] = Field(default=None, ge=0)


class TrajectoryModel(_Model):
    speed_mps: float = Field(default=DEFAULT_TRAJECTORY['speed'], gt=0)
    dt: Optional[float] = Field(default=None, gt=0)
    kappa_max_per_m: float = Field(default=DEFAULT_TRAJECTORY['kappa_max'], gt=0)
    kappa_rate_max_per_m2: float = Field(default=DEFAULT_TRAJECTORY['kappa_rate_max'], gt=0)
    pitch_trim: float = 0.0


class PlannerModel(_Model):
    p_dt: float = Field(default=COMMON_PARAMETERS['p_dt'], gt=0, lt=1)
    m_sigma: float = Field(default=COMMON_PARAMETERS['m_sigma'], ge=0)
    pd_init: float = Field(default=COMMON_PARAMETERS['pd_init'], gt=0, lt=1)
    sigma_r_init: float = Field(default=COMMON_PARAMETERS['sigma_r_init'], gt=0)
    n_vertices: int = Field(default=COMMON_PARAMETERS['n_vertices'], ge=3)
    max_iterations: int = Field(default=DEFAULT_PLANNER['max_iterations'], ge=1)
    growth_floor_m: float = Field(default=DEFAULT_PLANNER['growth_floor_m'], gt=0)
    pd_floor: float = Field(default=DEFAULT_PLANNER['pd_floor'], gt=0, lt=1)
    smoothing_inflation: float = Field(default=DEFAULT_PLANNER['smoothing_inflation'], ge=0)


class ScenarioModel(_Model):
    name: str = 'scenario'
    units: UnitsModel = Field(default_factory=UnitsModel)
    radars: List[RadarModel] = Field(min_length=1)
    rcs: RcsModel = Field(default_factory=RcsModel)
    start: List[float] = Field(min_length=2, max_length=3)
    goal: List[float] = Field(min_length=2, max_length=3)
    altitude: Optional[float] = None
    bounds: RectModel
    gps_denied: List[RectModel] = Field(default_factory=list)
    imu: ImuModel
    measurements: MeasurementModel = Field(default_factory=MeasurementModel)
    initial: InitialModel = Field(default_factory=InitialModel)
    trajectory: TrajectoryModel = Field(default_factory=TrajectoryModel)
    planner: PlannerModel = Field(default_factory=PlannerModel)
    reference_path: Optional[conlist(conlist(float, min_length=2, max_length=2),
                                     min_length=2)] = None

    @model_validator(mode='after')
    def _consistent(self):
        ids = [r.id for r in self.radars]
        duplicates = sorted({i for i in ids if ids.count(i) > 1})
        if duplicates:
            raise ValueError(f"duplicate radar ids: {duplicates}")
        if self.altitude is None and len(self.start) < 3:
            raise ValueError("altitude missing: give 'altitude' or a 3-component start")
        return self


@dataclass(frozen=True)
class TrajectoryConfig:
    speed: float
    dt: float
    kappa_max: float
    kappa_rate_max: float
    pitch_trim: float


@dataclass(frozen=True)
class PlannerConfig:
    p_dt: float
    m_sigma: float
    pd_init: float
    sigma_r_init: float
    n_vertices: int
    max_iterations: int
    growth_floor_m: float
    pd_floor: float
    smoothing_inflation: float


@dataclass(frozen=True)
class Scenario:
    """A fully validated scenario in SI units (m, rad, s)."""

    name: str
    radars: list
    rcs: EllipsoidRcs
    imu: ImuSpec
    meas: MeasSpec
    initial_sigmas: dict
    start: np.ndarray
    goal: np.ndarray
    altitude: float
    bounds: Rect
    trajectory: TrajectoryConfig
    planner: PlannerConfig
    reference_path: Optional[np.ndarray] = None

    @property
    def P0(self):
        return NavCovariance.initial(self.imu, self.initial_sigmas['sigma_p_m'],
                                     self.initial_sigmas['sigma_v_mps'],
                                     self.initial_sigmas['sigma_theta_rad'])

    def build_trajectory(self, points=None):
        """Smooth and sample ``points``; defaults to the reference path, else start to goal."""
        if points is None:
            points = self.reference_path if self.reference_path is not None \
                else np.array([self.start, self.goal])
        cfg = self.trajectory
        return trajectory_from_waypoints(np.asarray(points, dtype=float), self.altitude,
                                         cfg.speed, cfg.dt, cfg.kappa_max, cfg.kappa_rate_max,
                                         cfg.pitch_trim)

    def with_dt(self, dt):
        return replace(self, trajectory=replace(self.trajectory, dt=float(dt)))

    def with_imu(self, imu):
        return replace(self, imu=imu)


def _field_path(error):
    return '.'.join(str(part) for part in error['loc']) or '<document>'


def _build(model):
    L = LENGTH_SCALE[model.units.length]
    A = ANGLE_SCALE[model.units.angle]
    T = TIME_SCALE[model.units.time]

    radars = []
    for r in model.radars:
        position = np.zeros(3)
        position[:len(r.position)] = np.asarray(r.position) * L
        if r.covariance is not None:
            C_rr = np.asarray(r.covariance, dtype=float)
        else:
            C_rr = np.diag([r.sigma_position_m ** 2] * 3 + [r.sigma_c_r ** 2])
        radars.append(RadarSite(position, r.c_r, r.p_fa, C_rr, r.id))

    tau_a = model.imu.tau_a * T if model.imu.tau_a else DEFAULT_TAU_A
    tau_g = model.imu.tau_g * T if model.imu.tau_g else DEFAULT_TAU_G
    imu_cfg = model.imu
    if imu_cfg.grade:
        imu = ImuSpec.from_grade(imu_cfg.grade, tau_a, tau_g)
    elif imu_cfg.vrw_3sigma is not None:
        imu = ImuSpec.from_table(imu_cfg.vrw_3sigma, imu_cfg.accel_bias_3sigma,
                                 imu_cfg.arw_3sigma, imu_cfg.gyro_bias_3sigma, tau_a, tau_g)
    else:
        imu = ImuSpec(imu_cfg.q_nu, imu_cfg.q_omega, tau_a, tau_g,
                      imu_cfg.sigma_a_ss, imu_cfg.sigma_g_ss)

    m = model.measurements
    sigma_psi = m.sigma_psi * A if m.sigma_psi is not None \
        else math.radians(COMMON_PARAMETERS['sigma_psi_deg'])
    denied = tuple(Rect(g.n_min * L, g.n_max * L, g.e_min * L, g.e_max * L)
                   for g in model.gps_denied)
    meas = MeasSpec(m.sigma_n_m, m.sigma_e_m, m.sigma_d_m, m.sigma_h_m, sigma_psi,
                    dict(DEFAULT_RATES_HZ, **m.rates_hz), denied)

    initial = {
        'sigma_p_m': model.initial.sigma_p_m,
        'sigma_v_mps': model.initial.sigma_v_mps,
        'sigma_theta_rad': model.initial.sigma_theta * A if model.initial.sigma_theta is not None
        else math.radians(DEFAULT_INITIAL_SIGMAS['sigma_theta_deg']),
    }

    tr = model.trajectory
    trajectory = TrajectoryConfig(
        speed=tr.speed_mps,
        dt=tr.dt * T if tr.dt is not None else DEFAULT_TRAJECTORY['dt'],
        kappa_max=tr.kappa_max_per_m,
        kappa_rate_max=tr.kappa_rate_max_per_m2,
        pitch_trim=tr.pitch_trim * A,
    )

    altitude = model.altitude * L if model.altitude is not None else -model.start[2] * L
    b = model.bounds
    reference = None
    if model.reference_path is not None:
        reference = np.asarray(model.reference_path, dtype=float) * L

    return Scenario(
        name=model.name,
        radars=radars,
        rcs=EllipsoidRcs(model.rcs.a, model.rcs.b, model.rcs.c),
        imu=imu,
        meas=meas,
        initial_sigmas=initial,
        start=np.asarray(model.start[:2], dtype=float) * L,
        goal=np.asarray(model.goal[:2], dtype=float) * L,
        altitude=float(altitude),
        bounds=Rect(b.n_min * L, b.n_max * L, b.e_min * L, b.e_max * L),
        trajectory=trajectory,
        planner=PlannerConfig(**model.planner.model_dump()),
        reference_path=reference,
    )


class ScenarioParser(BaseParser):
    """Parses a YAML scenario document into a Scenario"""

    def parse(self, text):
        try:
            document = yaml.safe_load(text)
        except yaml.YAMLError as e:
            raise ConfigError(f"malformed YAML: {e}") from e
        if not isinstance(document, dict):
            raise ConfigError("scenario document must be a mapping")
        return self.parse_document(document)

    def parse_document(self, document):
        try:
            model = ScenarioModel.model_validate(document)
        except pydantic.ValidationError as e:
            first = e.errors()[0]
            raise ConfigError(first['msg'], field_path=_field_path(first)) from e
        try:
            scenario = _build(model)
        except ConfigError:
            raise
        except PdvgError as e:
            raise ConfigError(f"invariant violated: {e}") from e
        logger.debug("parsed scenario %s with %d radars", scenario.name, len(scenario.radars))
        return scenario


def parse_scenario(text):
    return ScenarioParser().parse(text)


def load_scenario(path):
    return ScenarioParser().parse_file(path)


def _floats(values):
    return [float(v) for v in np.asarray(values).reshape(-1)]


def scenario_document(scenario):
    """SI document (units m/rad/s) describing ``scenario`` exactly."""
    imu = scenario.imu
    meas = scenario.meas
    tr = scenario.trajectory
    b = scenario.bounds
    document = {
        'name': scenario.name,
        'units': {'length': 'm', 'angle': 'rad', 'time': 's'},
        'radars': [{
            'id': r.name,
            'position': _floats(r.p_r_n),
            'c_r': float(r.c_r),
            'p_fa': float(r.p_fa),
            'covariance': [_floats(row) for row in r.C_rr],
        } for r in scenario.radars],
        'rcs': {'a': float(scenario.rcs.a), 'b': float(scenario.rcs.b), 'c': float(scenario.rcs.c)},
        'start': _floats(scenario.start),
        'goal': _floats(scenario.goal),
        'altitude': float(scenario.altitude),
        'bounds': {'n_min': float(b.n_min), 'n_max': float(b.n_max),
                   'e_min': float(b.e_min), 'e_max': float(b.e_max)},
        'gps_denied': [{'n_min': float(g.n_min), 'n_max': float(g.n_max),
                        'e_min': float(g.e_min), 'e_max': float(g.e_max)}
                       for g in meas.gps_denied_regions],
        'imu': {'q_nu': float(imu.q_nu), 'q_omega': float(imu.q_omega),
                'sigma_a_ss': float(imu.sigma_a_ss), 'sigma_g_ss': float(imu.sigma_g_ss),
                'tau_a': float(imu.tau_a), 'tau_g': float(imu.tau_g)},
        'measurements': {'sigma_n_m': float(meas.sigma_n), 'sigma_e_m': float(meas.sigma_e),
                         'sigma_d_m': float(meas.sigma_d), 'sigma_h_m': float(meas.sigma_h),
                         'sigma_psi': float(meas.sigma_psi),
                         'rates_hz': {k: float(v) for k, v in meas.rates.items()}},
        'initial': {'sigma_p_m': float(scenario.initial_sigmas['sigma_p_m']),
                    'sigma_v_mps': float(scenario.initial_sigmas['sigma_v_mps']),
                    'sigma_theta': float(scenario.initial_sigmas['sigma_theta_rad'])},
        'trajectory': {'speed_mps': float(tr.speed), 'dt': float(tr.dt),
                       'kappa_max_per_m': float(tr.kappa_max),
                       'kappa_rate_max_per_m2': float(tr.kappa_rate_max),
                       'pitch_trim': float(tr.pitch_trim)},
        'planner': {k: (int(v) if isinstance(v, (int, np.integer)) else float(v))
                    for k, v in vars(scenario.planner).items()},
    }
    if scenario.reference_path is not None:
        document['reference_path'] = [_floats(p) for p in scenario.reference_path]
    return document


def dump_scenario(scenario):
    """YAML text that parses back to an identical scenario."""
    return yaml.safe_dump(scenario_document(scenario), sort_keys=False)
