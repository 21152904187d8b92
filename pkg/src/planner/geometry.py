"""Radar detection polygons, the visibility graph over their vertices and
Dijkstra's shortest path"""

import heapq
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import shapely

from src.errors import InfeasibleEndpointError, NoPathError, ValidationError
from src.models.radar import detection_radius

logger = logging.getLogger(__name__)

ANGLE_TOL = 1e-9
# boundaries are traversable within this distance, m
BOUNDARY_EPS = 1e-9
INTERIOR = 'T********'


@dataclass
class RadarPolygon:
    """Star-shaped polygon around a radar, one radius per vertex angle.

    Angles are measured from north towards east and kept sorted in [0, 2 pi).
    """

    center: np.ndarray
    angles: np.ndarray
    radii: np.ndarray
    name: str = 'radar'

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float).reshape(2)
        angles = np.mod(np.asarray(self.angles, dtype=float), 2.0 * math.pi)
        radii = np.asarray(self.radii, dtype=float)
        if angles.shape != radii.shape or angles.ndim != 1 or len(angles) < 3:
            raise ValidationError(f"{self.name}: polygon needs at least 3 vertices")
        if np.any(radii <= 0):
            raise ValidationError(f"{self.name}: vertex radii must be positive")
        order = np.argsort(angles, kind='stable')
        self.angles = angles[order]
        self.radii = radii[order]

    def __len__(self):
        return len(self.angles)

    @property
    def vertices(self):
        return self.center + self.radii[:, None] * np.stack(
            [np.cos(self.angles), np.sin(self.angles)], axis=1)

    def to_shapely(self):
        return shapely.Polygon(self.vertices)

    def interior(self, eps=BOUNDARY_EPS):
        """The polygon shrunk by ``eps``; anything meeting its interior is blocked."""
        return shapely.buffer(self.to_shapely(), -eps, join_style='mitre')

    def is_simple(self):
        return bool(self.to_shapely().is_valid)

    def contains(self, points):
        """Interior test for one point or an (M, 2) array; points within
        BOUNDARY_EPS of the boundary are outside."""
        pts = shapely.points(np.atleast_2d(np.asarray(points, dtype=float)))
        return shapely.relate_pattern(pts, self.interior(), INTERIOR)

    def vertex_near(self, angle):
        """Index of the vertex at ``angle`` within ANGLE_TOL, or None."""
        diff = np.abs(_angle_diff(self.angles, angle))
        i = int(np.argmin(diff))
        return i if diff[i] <= ANGLE_TOL else None

    def nearest_vertex(self, angle):
        return int(np.argmin(np.abs(_angle_diff(self.angles, angle))))

    def scaled(self, factor):
        return RadarPolygon(self.center, self.angles, self.radii * factor, self.name)

    def repaired(self):
        """Drop vertices sharing an angle, keeping the largest radius."""
        keep_angles, keep_radii = [], []
        for a, r in zip(self.angles, self.radii):
            if keep_angles and abs(a - keep_angles[-1]) <= ANGLE_TOL:
                keep_radii[-1] = max(keep_radii[-1], r)
            else:
                keep_angles.append(a)
                keep_radii.append(r)
        if len(keep_angles) > 1 and 2.0 * math.pi - keep_angles[-1] + keep_angles[0] <= ANGLE_TOL:
            keep_radii[0] = max(keep_radii[0], keep_radii.pop())
            keep_angles.pop()
        return RadarPolygon(self.center, keep_angles, keep_radii, self.name)


def _angle_diff(a, b):
    return np.mod(np.asarray(a) - b + math.pi, 2.0 * math.pi) - math.pi


def initial_polygons(radars, pd_init, sigma_r_init, n_vertices):
    """
    Regular polygons whose circumradius is the detection range at ``pd_init``.

    Args:
        radars: list of RadarSite
        pd_init: detection probability defining the radius
        sigma_r_init: RCS used for the radius, m^2
        n_vertices: vertices per polygon

    Returns:
        list of RadarPolygon
    """
    if n_vertices < 3:
        raise ValidationError("polygons need at least 3 vertices")
    angles = 2.0 * math.pi * np.arange(n_vertices) / n_vertices
    polygons = []
    for radar in radars:
        radius = detection_radius(pd_init, sigma_r_init, radar.c_r, radar.p_fa)
        logger.debug("%s: initial polygon radius %.1f km", radar.name, radius / 1000.0)
        polygons.append(RadarPolygon(radar.ne, angles, np.full(n_vertices, radius), radar.name))
    return polygons


@dataclass
class VisibilityGraph:
    """Nodes are 'start', 'goal' and '<radar>:<vertex>' ids."""

    node_ids: list
    points: np.ndarray
    adjacency: dict = field(default_factory=dict)

    def neighbors(self, node):
        return self.adjacency.get(node, {})

    def has_edge(self, u, v):
        return v in self.adjacency.get(u, {})

    @property
    def n_edges(self):
        return sum(len(nbrs) for nbrs in self.adjacency.values()) // 2

    def point(self, node):
        return self.points[self.node_ids.index(node)]


def _check_endpoint(point, polygons, label):
    for poly in polygons:
        if poly.contains(point)[0]:
            raise InfeasibleEndpointError(f"{label} {np.round(point, 1).tolist()} is inside its polygon",
                                          poly.name)


def build_visibility_graph(polygons, start, goal, bounds):
    """
    Visibility graph over start, goal and the polygon vertices inside the bounds.

    An edge exists when the segment between two nodes does not cross the
    interior of any polygon; running along a polygon edge is allowed.

    Args:
        polygons: list of RadarPolygon
        start, goal: NE positions, m
        bounds: Rect in NE metres

    Returns:
        VisibilityGraph

    Raises:
        InfeasibleEndpointError: start or goal inside a polygon
    """
    start = np.asarray(start, dtype=float).reshape(2)
    goal = np.asarray(goal, dtype=float).reshape(2)
    for label, point in (('start', start), ('goal', goal)):
        if not bounds.contains(point[None, :])[0]:
            raise ValidationError(f"{label} lies outside the planning bounds")
        _check_endpoint(point, polygons, label)

    ids, pts = ['start', 'goal'], [start, goal]
    shapes = [poly.interior() for poly in polygons]
    for shape in shapes:
        shapely.prepare(shape)
    for poly in polygons:
        verts = poly.vertices
        keep = bounds.contains(verts)
        for j, shape in enumerate(shapes):
            if polygons[j] is not poly:
                keep &= ~shapely.relate_pattern(shapely.points(verts), shape, INTERIOR)
        for i in np.flatnonzero(keep):
            ids.append(f"{poly.name}:{i:02d}")
            pts.append(verts[i])
    pts = np.array(pts)

    iu, ju = np.triu_indices(len(pts), k=1)
    segments = shapely.linestrings(np.stack([pts[iu], pts[ju]], axis=1))
    blocked = np.zeros(len(iu), dtype=bool)
    for shape in shapes:
        blocked |= shapely.relate_pattern(segments, shape, INTERIOR)

    cost = np.linalg.norm(pts[ju] - pts[iu], axis=1)
    adjacency = {node: {} for node in ids}
    for a, b, c in zip(iu[~blocked], ju[~blocked], cost[~blocked]):
        if c <= 0.0:
            continue
        adjacency[ids[a]][ids[b]] = float(c)
        adjacency[ids[b]][ids[a]] = float(c)

    graph = VisibilityGraph(ids, pts, adjacency)
    logger.debug("visibility graph: %d nodes, %d edges", len(ids), graph.n_edges)
    return graph


def shortest_path(graph, source='start', target='goal'):
    """
    Dijkstra over the visibility graph; ties broken by node id.

    Returns:
        (M, 2) array of NE waypoints from source to target

    Raises:
        NoPathError: target unreachable
    """
    dist = {source: 0.0}
    previous = {}
    done = set()
    heap = [(0.0, source)]
    while heap:
        d, node = heapq.heappop(heap)
        if node in done:
            continue
        done.add(node)
        if node == target:
            break
        for nbr, cost in sorted(graph.neighbors(node).items()):
            nd = d + cost
            if nbr not in done and nd < dist.get(nbr, math.inf):
                dist[nbr] = nd
                previous[nbr] = node
                heapq.heappush(heap, (nd, nbr))

    if target not in done:
        raise NoPathError(f"no path from {source} to {target}")

    route = [target]
    while route[-1] != source:
        route.append(previous[route[-1]])
    route.reverse()
    return np.array([graph.point(node) for node in route])
