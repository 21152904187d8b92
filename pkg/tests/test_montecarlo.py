import math
from dataclasses import replace

import numpy as np
import pytest

from src.errors import ValidationError
from src.models.ins import BG, ImuSpec
from src.models.lincov import NoiseSourceSet, sigma_pd_series
from src.models.montecarlo import (
    CHANNELS, coverage_check, draw_run, pairwise_moments, run_ensemble, stream,
)
from src.models.radar import detection_jacobians


@pytest.fixture
def short_trajectory(validation_scenario, short_validation_path):
    return validation_scenario.build_trajectory(short_validation_path)


def _constant_draws(seed, n_runs, sigma):
    return np.array([sigma * stream(seed, run, 'radar_const').standard_normal(1)[0]
                     for run in range(n_runs)])


def test_streams_are_reproducible_and_independent():
    a = stream(7, 3, 'accel_noise').standard_normal(5)
    np.testing.assert_array_equal(a, stream(7, 3, 'accel_noise').standard_normal(5))
    assert not np.array_equal(a, stream(7, 3, 'gyro_noise').standard_normal(5))
    assert not np.array_equal(a, stream(7, 4, 'accel_noise').standard_normal(5))
    assert not np.array_equal(a, stream(8, 3, 'accel_noise').standard_normal(5))


def test_every_channel_has_its_own_stream():
    assert len(set(CHANNELS.values())) == len(CHANNELS)
    assert all(0 <= k < 2 ** 16 for k in CHANNELS.values())
    firsts = {stream(1, 0, name).standard_normal() for name in CHANNELS}
    assert len(firsts) == len(CHANNELS)


def test_disabled_sources_draw_zeros(validation_scenario):
    draws = draw_run(validation_scenario, 20, 1.0, 1, 0, NoiseSourceSet.none())
    for name in ('dx0', 'accel_bias', 'gyro_bias', 'accel_noise', 'gyro_noise',
                 'pos_noise', 'alt_noise', 'hdg_noise'):
        np.testing.assert_array_equal(getattr(draws, name), 0.0)
    np.testing.assert_array_equal(draws.radar_dx[0], 0.0)


def test_toggling_one_source_leaves_the_others(validation_scenario):
    all_on = draw_run(validation_scenario, 20, 1.0, 5, 2, NoiseSourceSet.all_on())
    accel = draw_run(validation_scenario, 20, 1.0, 5, 2, NoiseSourceSet.only('accel_noise'))
    np.testing.assert_array_equal(accel.accel_noise, all_on.accel_noise)
    np.testing.assert_array_equal(accel.gyro_noise, 0.0)


def test_bias_sequences_start_from_the_initial_draw(validation_scenario):
    draws = draw_run(validation_scenario, 50, 1.0, 11, 4, NoiseSourceSet.only('gyro_bias'))
    sd = np.sqrt(np.diag(validation_scenario.P0.P))[BG]
    np.testing.assert_allclose(draws.gyro_bias[0],
                               sd * stream(11, 4, 'init_bg').standard_normal(3), rtol=1e-15)
    # a one-hour time constant barely moves the bias in 50 s
    assert np.all(np.abs(draws.gyro_bias[-1]) < 5.0 * validation_scenario.imu.sigma_g_ss)


def test_radar_draws_use_separate_blocks(validation_scenario):
    sources = NoiseSourceSet.only('radar_constant')
    draws = draw_run(validation_scenario, 5, 1.0, 3, 9, sources)
    radar = validation_scenario.radars[0]
    np.testing.assert_array_equal(draws.radar_dx[0][:3], 0.0)
    expected = math.sqrt(radar.C_rr[3, 3]) * stream(3, 9, 'radar_const').standard_normal(1)[0]
    assert draws.radar_dx[0][3] == pytest.approx(expected, rel=1e-15)


def test_pairwise_moments_match_numpy(rng):
    samples = [rng.normal(size=(2, 7)) for _ in range(13)]
    moments = pairwise_moments(samples)
    stacked = np.array(samples)
    assert moments.count == 13
    np.testing.assert_allclose(moments.mean, stacked.mean(axis=0), rtol=1e-12)
    np.testing.assert_allclose(moments.m2 / 12, stacked.var(axis=0, ddof=1), rtol=1e-12)
    with pytest.raises(ValidationError):
        pairwise_moments([])


def test_no_sources_reproduce_the_nominal(validation_scenario, short_trajectory):
    result = run_ensemble(validation_scenario, 4, seed=1, sources=NoiseSourceSet.none(),
                          trajectory=short_trajectory, workers=1)
    np.testing.assert_allclose(result.mean_error, 0.0, atol=1e-9)
    np.testing.assert_allclose(result.sigma_error, 0.0, atol=1e-9)
    assert result.n_failed == 0


@pytest.fixture
def constant_only(validation_scenario, short_trajectory):
    return run_ensemble(validation_scenario, 20, seed=42,
                        sources=NoiseSourceSet.only('radar_constant'),
                        trajectory=short_trajectory, workers=1)


def test_radar_constant_traces_are_exact(validation_scenario, short_trajectory, constant_only):
    radar = validation_scenario.radars[0]
    deltas = _constant_draws(42, 20, math.sqrt(radar.C_rr[3, 3]))
    nominal = detection_jacobians(short_trajectory.p_n, short_trajectory.theta, radar,
                                  validation_scenario.rcs, with_jacobians=False).pd
    for run, delta in enumerate(deltas):
        shifted = replace(radar, c_r=radar.c_r + delta)
        expected = detection_jacobians(short_trajectory.p_n, short_trajectory.theta, shifted,
                                       validation_scenario.rcs, with_jacobians=False).pd - nominal
        np.testing.assert_allclose(constant_only.traces[run, 0], expected, rtol=1e-9, atol=1e-14)


def test_radar_constant_spread_matches_linear_sigma(validation_scenario, short_trajectory,
                                                    constant_only):
    radar = validation_scenario.radars[0]
    deltas = _constant_draws(42, 20, math.sqrt(radar.C_rr[3, 3]))
    geo = detection_jacobians(short_trajectory.p_n, short_trajectory.theta, radar,
                              validation_scenario.rcs)
    np.testing.assert_allclose(constant_only.sigma_error[0],
                               np.abs(geo.A_pr[:, 3]) * deltas.std(ddof=1), rtol=1e-2)
    np.testing.assert_allclose(constant_only.sigma_error,
                               constant_only.traces.std(axis=0, ddof=1), rtol=1e-10)


def test_coverage(validation_scenario, short_trajectory, constant_only):
    series = sigma_pd_series(validation_scenario, NoiseSourceSet.only('radar_constant'),
                             trajectory=short_trajectory)
    assert coverage_check(constant_only, series, k=0.0) < 0.01
    assert coverage_check(constant_only, series, k=3.0) >= 0.9


def test_coverage_needs_aligned_series(validation_scenario, short_trajectory, constant_only):
    other = validation_scenario.build_trajectory(np.array([[-110e3, 550e3], [-100e3, 550e3]]))
    series = sigma_pd_series(validation_scenario, NoiseSourceSet.only('radar_constant'),
                             trajectory=other)
    with pytest.raises(ValidationError):
        coverage_check(constant_only, series)


def test_error_sign(validation_scenario, short_trajectory, constant_only):
    flipped = run_ensemble(validation_scenario, 20, seed=42,
                           sources=NoiseSourceSet.only('radar_constant'),
                           trajectory=short_trajectory, workers=1,
                           error_sign='nominal_minus_run')
    np.testing.assert_allclose(flipped.traces, -constant_only.traces, rtol=0.0, atol=0.0)
    np.testing.assert_allclose(flipped.sigma_error, constant_only.sigma_error, rtol=1e-12)


def test_ensemble_frames(constant_only):
    frame = constant_only.to_frame()
    assert list(frame.columns) == ['t [s]', 'radar-1_pd_nominal [-]', 'radar-1_mean_error [-]',
                                   'radar-1_sigma_error [-]']
    traces = constant_only.traces_frame()
    assert len(traces) == 20 * len(frame)


def test_ensemble_arguments(validation_scenario, short_trajectory):
    with pytest.raises(ValidationError):
        run_ensemble(validation_scenario, 1, seed=0, trajectory=short_trajectory, workers=1)
    with pytest.raises(ValidationError):
        run_ensemble(validation_scenario, 4, seed=0, trajectory=short_trajectory, workers=1,
                     error_sign='absolute')


def test_full_noise_runs_are_deterministic(validation_scenario, short_trajectory):
    a = run_ensemble(validation_scenario, 3, seed=9, trajectory=short_trajectory, workers=1)
    b = run_ensemble(validation_scenario, 3, seed=9, trajectory=short_trajectory, workers=1)
    np.testing.assert_array_equal(a.traces, b.traces)
    assert np.all(a.sigma_error > 0.0)


def test_worker_count_does_not_change_the_result(validation_scenario, short_trajectory):
    serial = run_ensemble(validation_scenario, 4, seed=9, trajectory=short_trajectory, workers=1)
    pooled = run_ensemble(validation_scenario, 4, seed=9, trajectory=short_trajectory, workers=2)
    assert pooled.n_failed == serial.n_failed
    for name in ('mean_error', 'sigma_error', 'traces'):
        np.testing.assert_allclose(getattr(pooled, name), getattr(serial, name),
                                   rtol=1e-12, atol=1e-15)


@pytest.mark.slow
def test_ensemble_agrees_with_linear_covariance(validation_scenario):
    scenario = validation_scenario.with_imu(ImuSpec.from_grade('tactical'))
    trajectory = scenario.build_trajectory()
    series = sigma_pd_series(scenario, NoiseSourceSet.all_on(), trajectory=trajectory)
    result = run_ensemble(scenario, 500, seed=20240611, trajectory=trajectory)

    sigma_lc = series.sigma_pd[0]
    sigma_mc = result.sigma_error[0]
    significant = sigma_lc > 0.01 * sigma_lc.max()
    ratio = sigma_mc[significant] / sigma_lc[significant]
    assert abs(np.median(ratio) - 1.0) < 0.1
    assert np.all(np.abs(ratio - 1.0) < 0.15)
    assert coverage_check(result, series, k=3.0) >= 0.985
