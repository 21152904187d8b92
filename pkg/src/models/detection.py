"""Per-radar detection probability series along a trajectory"""

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from src.errors import ValidationError
from src.models.radar import detection_jacobians


@dataclass
class DetectionSeries:
    """Nominal P_D and sigma_pd for every radar at every trajectory sample.

    Arrays indexed [radar, sample].
    """

    t: np.ndarray
    positions: np.ndarray
    radar_names: list
    pd: np.ndarray
    sigma_pd: np.ndarray
    rcs: np.ndarray
    sigma_radar: np.ndarray
    metadata: dict = field(default_factory=dict)

    @property
    def n_radars(self):
        return len(self.radar_names)

    def margin(self, p_dt, m_sigma):
        """P_D + m sigma - P_DT; non-negative entries are violations."""
        return self.pd + m_sigma * self.sigma_pd - p_dt

    def peak_sigma(self):
        return float(self.sigma_pd.max()) if self.sigma_pd.size else 0.0

    def aligned_with(self, other, tol=1e-9):
        return (self.pd.shape == other.pd.shape
                and np.allclose(self.t, other.t, rtol=0.0, atol=tol))

    def to_frame(self, p_dt=None, m_sigma=None):
        data = {'t [s]': self.t,
                'p_n [m]': self.positions[:, 0],
                'p_e [m]': self.positions[:, 1]}
        for i, name in enumerate(self.radar_names):
            data[f'{name}_pd [-]'] = self.pd[i]
            data[f'{name}_sigma_pd [-]'] = self.sigma_pd[i]
            data[f'{name}_rcs [m^2]'] = self.rcs[i]
            if p_dt is not None:
                data[f'{name}_violation [-]'] = (self.margin(p_dt, m_sigma)[i] >= 0).astype(int)
        return pd.DataFrame(data)


def detection_series(trajectory, C_aa, radars, rcs, C_rr=None, metadata=None):
    """
    Evaluate P_D and sigma_pd for every radar along a trajectory.

    Args:
        trajectory: Trajectory with N samples
        C_aa: (N, 6, 6) aircraft pose covariance
        radars: list of RadarSite
        rcs: EllipsoidRcs
        C_rr: optional list of 4x4 radar covariances overriding radar.C_rr
        metadata: stored on the result

    Returns:
        DetectionSeries
    """
    C_aa = np.asarray(C_aa, dtype=float)
    n = len(trajectory)
    if C_aa.shape != (n, 6, 6):
        raise ValidationError(f"C_aa must have shape ({n}, 6, 6), got {C_aa.shape}")
    if C_rr is None:
        C_rr = [radar.C_rr for radar in radars]

    pd_rows, sigma_rows, rcs_rows, radar_rows = [], [], [], []
    for radar, Crr in zip(radars, C_rr):
        geo = detection_jacobians(trajectory.p_n, trajectory.theta, radar, rcs)
        var_nav = np.einsum('ni,nij,nj->n', geo.A_pa, C_aa, geo.A_pa)
        var_radar = np.einsum('ni,ij,nj->n', geo.A_pr, Crr, geo.A_pr)
        pd_rows.append(geo.pd)
        rcs_rows.append(geo.rcs)
        sigma_rows.append(np.sqrt(np.clip(var_nav + var_radar, 0.0, None)))
        radar_rows.append(np.sqrt(np.clip(var_radar, 0.0, None)))

    return DetectionSeries(
        t=trajectory.t.copy(),
        positions=trajectory.p_n.copy(),
        radar_names=[radar.name for radar in radars],
        pd=np.array(pd_rows).reshape(len(radars), n),
        sigma_pd=np.array(sigma_rows).reshape(len(radars), n),
        rcs=np.array(rcs_rows).reshape(len(radars), n),
        sigma_radar=np.array(radar_rows).reshape(len(radars), n),
        metadata=dict(metadata or {}),
    )


@dataclass(frozen=True)
class Violation:
    """A (radar, sample) pair where P_D + m sigma_pd reaches the threshold."""

    radar_index: int
    sample_index: int
    t: float
    margin: float
