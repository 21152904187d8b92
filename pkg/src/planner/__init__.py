"""Detection-aware path planning around ground radars"""

from src.planner.geometry import (
    RadarPolygon, VisibilityGraph, build_visibility_graph, initial_polygons, shortest_path,
)
from src.planner.pdvg import (
    CandidateRecord, PlanResult, check_validity, evaluate_candidate, evaluate_path,
    expand_polygons, plan,
)
