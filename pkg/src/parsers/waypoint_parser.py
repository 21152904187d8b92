"""Waypoint CSV files for candidate evaluation"""

import io
import logging

import numpy as np
import pandas as pd

from src.errors import ConfigError
from src.parsers.base_parser import BaseParser

logger = logging.getLogger(__name__)

COLUMN_SCALES = {
    ('p_n [m]', 'p_e [m]'): 1.0,
    ('p_n [km]', 'p_e [km]'): 1000.0,
}


class WaypointParser(BaseParser):
    """Reads an (M, 2) NE waypoint list in metres from CSV text.

    The header must name the columns with their unit, as the planner writes them.
    """

    def parse(self, text):
        try:
            df = pd.read_csv(io.StringIO(text))
        except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
            raise ConfigError(f"malformed waypoint CSV: {e}", field_path=self.source) from e

        for columns, scale in COLUMN_SCALES.items():
            if set(columns) <= set(df.columns):
                points = df[list(columns)].to_numpy(dtype=float) * scale
                break
        else:
            expected = ' or '.join(', '.join(c) for c in COLUMN_SCALES)
            raise ConfigError(f"waypoint CSV needs columns {expected}", field_path=self.source)

        if len(points) < 2:
            raise ConfigError("a waypoint path needs at least two rows", field_path=self.source)
        if not np.all(np.isfinite(points)):
            raise ConfigError("waypoints must be finite", field_path=self.source)
        logger.debug("read %d waypoints", len(points))
        return points


def load_waypoints(path):
    return WaypointParser().parse_file(path)
