"""Scenario and waypoint document parsers"""

from src.parsers.scenario_parser import (
    Scenario, ScenarioParser, dump_scenario, load_scenario, parse_scenario, scenario_document,
)
from src.parsers.waypoint_parser import WaypointParser, load_waypoints
