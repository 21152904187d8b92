"""Utils package initialization"""

from src.utils.linalg import skew, symmetrize, check_rotation, lyapunov_rk4
from src.utils.rotations import (
    ned_to_body, body_to_ned, ned_to_body_partials, dcm_to_euler, wrap_angle,
)

__all__ = [
    'skew', 'symmetrize', 'check_rotation', 'lyapunov_rk4',
    'ned_to_body', 'body_to_ned', 'ned_to_body_partials', 'dcm_to_euler', 'wrap_angle',
]
