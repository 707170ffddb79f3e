"""MUSIC baseline: spectrum shape, peak picking, and the white-noise
assumption it gets wrong on purpose."""

import numpy as np
import pytest

from apndoa import (
    random_unitary,
    ArrayGeometry,
    MusicOptions,
    SampleCovariance,
    StochasticModel,
    linear_trend,
    music_estimate,
    music_spectrum,
    sample_covariance,
    scale_for_snr,
    steering_set,
    stream_rng,
    synthesize,
)

GEOM = ArrayGeometry.ula(11)
THETA = np.array([-0.2513, 0.1571, 1.005])
MODEL = StochasticModel(np.diag([1.0, 0.64, 0.25]))


def exact_covariance(lam):
    phi = steering_set(GEOM, THETA).phi
    return SampleCovariance(phi @ MODEL.rs @ phi.conj().T + np.diag(lam**-2.0), 100)


def test_spectrum_peaks_at_the_true_angles_for_white_noise():
    rz = exact_covariance(np.full(11, 31.6))
    angles, values = music_spectrum(rz, GEOM, 3)
    # every true angle has a nearby grid point far above the median level
    med = np.median(values)
    for t in THETA:
        near = np.abs(angles - t) < np.pi / (32 * 11)
        assert values[near].max() > 100 * med


def test_estimate_error_is_set_by_the_grid_on_exact_covariance():
    # with an exact covariance the only error left is the grid plus the
    # parabolic refinement, so it shrinks when the grid is refined
    rz = exact_covariance(np.full(11, 31.6))
    res = music_estimate(rz, GEOM, 3)
    assert res.found_all
    assert np.all(np.diff(res.theta) > 0)
    err_coarse = np.abs(res.theta - THETA).max()
    assert err_coarse < 0.5 * np.pi / (32 * 11)
    fine = music_estimate(rz, GEOM, 3, MusicOptions(grid_size=8 * 32 * 11))
    assert np.abs(fine.theta - THETA).max() < err_coarse / 4


def test_nonuniform_noise_biases_music_even_without_sampling_error():
    # a weak signal eigenvalue inside the noise-power band makes the
    # white-noise subspace split wrong; exact covariances on both sides,
    # equal mean noise power, fine grid so the floor does not mask it
    u = random_unitary(3, stream_rng(99))
    weak = StochasticModel(u @ np.diag([2.337, 0.06604, 0.0004642]) @ u.conj().T)
    phi = steering_set(GEOM, THETA).phi

    def cov(lam):
        return SampleCovariance(phi @ weak.rs @ phi.conj().T + np.diag(lam**-2.0), 100)

    lam_tilt = 10.0 * linear_trend(11)
    lam_flat = np.full(11, np.mean(lam_tilt**-2.0) ** -0.5)
    opts = MusicOptions(grid_size=2048)
    err_flat = np.abs(music_estimate(cov(lam_flat), GEOM, 3, opts).theta - THETA).max()
    err_tilt = np.abs(music_estimate(cov(lam_tilt), GEOM, 3, opts).theta - THETA).max()
    assert err_tilt > 10 * err_flat


def test_estimate_on_sampled_data():
    lam = scale_for_snr(GEOM, THETA, MODEL, linear_trend(11), 30.0)
    z = synthesize(GEOM, THETA, MODEL, lam, 100, stream_rng(21))
    res = music_estimate(sample_covariance(z), GEOM, 3)
    assert res.found_all
    assert np.abs(res.theta - THETA).max() < 0.05
    assert res.peak_values.shape == (3,)


def test_peaks_respect_the_separation_radius():
    lam = scale_for_snr(GEOM, THETA, MODEL, linear_trend(11), 20.0)
    z = synthesize(GEOM, THETA, MODEL, lam, 100, stream_rng(22))
    opts = MusicOptions(exclusion_radius=0.5)
    res = music_estimate(sample_covariance(z), GEOM, 3, opts)
    assert np.diff(res.theta).min() >= 0.5 - np.pi / (32 * 11)


def test_padding_when_too_few_peaks():
    # K = 4 sought but only 1 actual source: padding must still return 4
    # separated angles and flag the shortfall
    model1 = StochasticModel(np.eye(1))
    lam = scale_for_snr(GEOM, np.array([0.3]), model1, np.ones(11), 30.0)
    z = synthesize(GEOM, np.array([0.3]), model1, lam, 50, stream_rng(23))
    res = music_estimate(sample_covariance(z), GEOM, 4, MusicOptions(exclusion_radius=0.9))
    assert res.theta.shape == (4,)
    assert np.diff(res.theta).min() >= 0.9 - np.pi / (32 * 11)


def test_unreachable_separation_raises():
    z = synthesize(GEOM, np.array([0.0]), StochasticModel(np.eye(1)), np.ones(11), 30, stream_rng(24))
    with pytest.raises(ValueError):
        music_estimate(sample_covariance(z), GEOM, 4, MusicOptions(exclusion_radius=2.0))


def test_k_validation():
    rz = exact_covariance(np.full(11, 10.0))
    with pytest.raises(ValueError):
        music_spectrum(rz, GEOM, 0)
    with pytest.raises(ValueError):
        music_spectrum(rz, GEOM, 11)
