"""Tabulated constants shared by the scenarios and the models"""

BOLTZMANN = 1.38e-23  # J/K
GRAVITY = 9.80665  # m/s^2

# IMU grades, given as 3-sigma values in the units they are usually quoted in:
#   vrw  - velocity random walk, m/s/sqrt(hr)
#   accel_bias - accelerometer bias steady-state, g
#   arw  - angle random walk, deg/sqrt(hr)
#   gyro_bias  - gyro bias steady-state, deg/hr
IMU_GRADES = {
    'industrial': {
        'vrw_3sigma': 0.1,
        'accel_bias_3sigma': 0.001,
        'arw_3sigma': 0.2,
        'gyro_bias_3sigma': 10.0,
    },
    'tactical': {
        'vrw_3sigma': 0.03,
        'accel_bias_3sigma': 0.0001,
        'arw_3sigma': 0.05,
        'gyro_bias_3sigma': 1.0,
    },
}

# Bias time constants are not part of the grade table
DEFAULT_TAU_A = 3600.0  # s
DEFAULT_TAU_G = 3600.0  # s

# Parameters common to the bundled scenarios (km, deg where noted)
COMMON_PARAMETERS = {
    'radars': [
        {'id': 'radar-1', 'position_km': [0.0, 0.0, 0.0]},
        {'id': 'radar-2', 'position_km': [-650.0, 900.0, 0.0]},
    ],
    'c_r': 164.7,
    'p_fa': 1e-9,
    'sigma_pr_m': 500.0 / 3.0,
    'sigma_cr': 2.0 / 3.0,
    'start_km': [-100.0, -700.0, -3.5],
    'goal_km': [-400.0, 1650.0, -3.5],
    'p_dt': 0.1,
    'm_sigma': 3.0,
    'rcs_axes_m': {'a': 0.18, 'b': 0.17, 'c': 0.20},
    'n_vertices': 30,
    'pd_init': 0.1,
    'sigma_r_init': 0.09,
    'sigma_n_m': 1.0 / 3.0,
    'sigma_e_m': 1.0 / 3.0,
    'sigma_d_m': 1.0,
    'sigma_h_m': 0.1 / 3.0,
    'sigma_psi_deg': 0.1 / 3.0,
}

DEFAULT_RATES_HZ = {'position': 1.0, 'altitude': 10.0, 'heading': 10.0}

DEFAULT_INITIAL_SIGMAS = {
    'sigma_p_m': 10.0,
    'sigma_v_mps': 0.5,
    'sigma_theta_deg': 0.5,
}

DEFAULT_TRAJECTORY = {
    'speed': 200.0,
    'dt': 0.1,
    'kappa_max': 1.0 / 5000.0,
    'kappa_rate_max': 1e-7,
    'pitch_trim': 0.0,
}

DEFAULT_PLANNER = {
    'max_iterations': 25,
    'growth_floor_m': 1.0,
    'pd_floor': 1e-3,
    'smoothing_inflation': 0.01,
}
