"""Probability-of-detection visibility graph planner.

Each iteration searches the visibility graph around the radar polygons,
evaluates the detection risk of the smoothed candidate and grows the polygons
where P_D + m sigma_pd reaches the threshold.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from src.errors import InfeasibleSmoothingError, NoPathError
from src.models.detection import Violation, detection_series
from src.models.ins import run_covariance
from src.models.radar import detection_radius
from src.planner.geometry import (
    RadarPolygon, build_visibility_graph, initial_polygons, shortest_path,
)
from src.utils.progress import progress

logger = logging.getLogger(__name__)


def evaluate_path(waypoints, scenario):
    """Smooth, sample and run the navigation covariance along a waypoint path.

    Returns:
        tuple: (Trajectory, DetectionSeries)
    """
    trajectory = scenario.build_trajectory(waypoints)
    history = run_covariance(trajectory, scenario.P0, scenario.imu, scenario.meas)
    series = detection_series(trajectory, history.aircraft_covariances(),
                              scenario.radars, scenario.rcs,
                              metadata={'gain_checksum': history.checksum()})
    return trajectory, series


def evaluate_candidate(waypoints, scenario):
    """Nominal P_D and sigma_pd of every radar along a candidate path."""
    return evaluate_path(waypoints, scenario)[1]


def check_validity(series, p_dt, m_sigma):
    """
    All (radar, sample) pairs with P_D + m_sigma * sigma_pd >= p_dt.

    Returns:
        list of Violation, empty when the path is valid
    """
    margin = series.margin(p_dt, m_sigma)
    radar_idx, sample_idx = np.nonzero(margin >= 0.0)
    return [Violation(int(i), int(k), float(series.t[k]), float(margin[i, k]))
            for i, k in zip(radar_idx, sample_idx)]


def expand_polygons(polygons, violations, series, scenario):
    """
    Grow the polygons around every violating sample.

    The vertex nearest in angle to the sample is pushed out to the range where
    P_D drops to P_DT - m sigma_pd (floored), and the vertices at +/- 2 pi / n_p
    are raised to the same radius, inserted when missing.

    Returns:
        list of RadarPolygon; radii never decrease
    """
    cfg = scenario.planner
    step = 2.0 * math.pi / cfg.n_vertices
    targets = [dict() for _ in polygons]
    primary = [set() for _ in polygons]

    for v in violations:
        poly = polygons[v.radar_index]
        radar = scenario.radars[v.radar_index]
        rel = series.positions[v.sample_index, :2] - poly.center
        angle = math.atan2(rel[1], rel[0]) % (2.0 * math.pi)
        sigma = series.sigma_pd[v.radar_index, v.sample_index]
        pd_exp = max(cfg.p_dt - cfg.m_sigma * sigma, cfg.pd_floor)
        radius = detection_radius(pd_exp, series.rcs[v.radar_index, v.sample_index],
                                  radar.c_r, radar.p_fa)

        centre = float(poly.angles[poly.nearest_vertex(angle)])
        primary[v.radar_index].add(round(centre, 12))
        for a in (centre, (centre - step) % (2.0 * math.pi), (centre + step) % (2.0 * math.pi)):
            key = round(a, 12)
            targets[v.radar_index][key] = max(targets[v.radar_index].get(key, 0.0), radius)

    expanded = []
    for poly, target, first in zip(polygons, targets, primary):
        if not target:
            expanded.append(poly)
            continue
        angles, radii = list(poly.angles), list(poly.radii)
        for a, r in sorted(target.items()):
            j = poly.vertex_near(a)
            if j is None:
                angles.append(a)
                radii.append(r)
                continue
            floor = radii[j] + cfg.growth_floor_m if a in first else radii[j]
            radii[j] = max(r, floor)
        grown = RadarPolygon(poly.center, angles, radii, poly.name)
        if not grown.is_simple():
            grown = grown.repaired()
        outside = ~scenario.bounds.contains(grown.vertices)
        if outside.any():
            logger.warning("%s: %d vertices expanded beyond the planning bounds",
                           poly.name, int(outside.sum()))
        expanded.append(grown)
    return expanded


@dataclass
class CandidateRecord:
    iteration: int
    waypoints: np.ndarray
    n_violations: int
    worst_margin: float


@dataclass
class PlanResult:
    waypoints: np.ndarray
    trajectory: object
    detection: object
    iterations: int
    candidates: list
    polygons: list
    feasible: bool
    diagnostics: dict = field(default_factory=dict)

    def waypoints_frame(self):
        return pd.DataFrame({'p_n [m]': self.waypoints[:, 0], 'p_e [m]': self.waypoints[:, 1]})

    def polygons_frame(self):
        rows = []
        for poly in self.polygons:
            for i, (a, r) in enumerate(zip(poly.angles, poly.radii)):
                n, e = poly.center + r * np.array([math.cos(a), math.sin(a)])
                rows.append({'radar': poly.name, 'vertex': i, 'angle [rad]': a,
                             'radius [m]': r, 'p_n [m]': n, 'p_e [m]': e})
        return pd.DataFrame(rows)

    def iteration_log(self):
        return {
            'feasible': self.feasible,
            'iterations': self.iterations,
            'diagnostics': self.diagnostics,
            'candidates': [
                {'iteration': c.iteration,
                 'waypoints [m]': np.round(c.waypoints, 3).tolist(),
                 'n_violations': c.n_violations,
                 'worst_margin': c.worst_margin}
                for c in self.candidates
            ],
        }

    def min_clearance(self, radars):
        """Smallest horizontal distance from the flown path to any radar, m."""
        if self.trajectory is None:
            return math.nan
        ne = self.trajectory.p_n[:, :2]
        return float(min(np.linalg.norm(ne - radar.ne, axis=1).min() for radar in radars))


def _search(polygons, scenario):
    graph = build_visibility_graph(polygons, scenario.start, scenario.goal, scenario.bounds)
    return shortest_path(graph)


def plan(scenario, max_iterations=None):
    """
    Run the planner until a candidate passes the validity check.

    Returns:
        PlanResult; ``feasible`` is False when the goal becomes unreachable or
        the iteration cap is reached, with the reason in ``diagnostics``
    """
    cfg = scenario.planner
    max_iterations = max_iterations or cfg.max_iterations
    polygons = initial_polygons(scenario.radars, cfg.pd_init, cfg.sigma_r_init, cfg.n_vertices)
    candidates = []
    trajectory = series = None
    waypoints = np.array([scenario.start, scenario.goal])
    violations = []

    bar = progress(range(1, max_iterations + 1), desc="Planning")
    for iteration in bar:
        try:
            waypoints = _search(polygons, scenario)
            try:
                trajectory, series = evaluate_path(waypoints, scenario)
            except InfeasibleSmoothingError as e:
                logger.info("iteration %d: %s; inflating polygons by %.0f%%",
                            iteration, e, 100 * cfg.smoothing_inflation)
                polygons = [p.scaled(1.0 + cfg.smoothing_inflation) for p in polygons]
                waypoints = _search(polygons, scenario)
                trajectory, series = evaluate_path(waypoints, scenario)
        except NoPathError as e:
            logger.warning("iteration %d: %s", iteration, e)
            bar.close()
            return PlanResult(waypoints, trajectory, series, iteration, candidates, polygons,
                              feasible=False, diagnostics={'reason': 'no_path', 'message': str(e)})

        violations = check_validity(series, cfg.p_dt, cfg.m_sigma)
        worst = float(series.margin(cfg.p_dt, cfg.m_sigma).max()) if series.pd.size else -math.inf
        candidates.append(CandidateRecord(iteration, waypoints, len(violations), worst))
        logger.info("iteration %d: %d waypoints, %d violations, worst margin %.4f",
                    iteration, len(waypoints), len(violations), worst)
        if not violations:
            bar.close()
            return PlanResult(waypoints, trajectory, series, iteration, candidates, polygons,
                              feasible=True)
        polygons = expand_polygons(polygons, violations, series, scenario)

    bar.close()
    logger.warning("no valid path after %d iterations", max_iterations)
    last = [{'radar': series.radar_names[v.radar_index], 't [s]': v.t, 'margin': v.margin}
            for v in violations]
    return PlanResult(waypoints, trajectory, series, max_iterations, candidates, polygons,
                      feasible=False,
                      diagnostics={'reason': 'max_iterations', 'violations': last})
