import numpy as np
import pytest

from she.array_model import (ArrayGeometry, ConfigError, angle_grid, desk_config,
                             generate_lue_channels, make_channels, radar_channel,
                             receive_steering, sample_eue_channels, transmit_steering)
from oracles import steering_scalar


def test_steering_examples():
    g4 = ArrayGeometry(num_tx=4, num_rx=4)
    assert np.allclose(transmit_steering(0.0, g4), np.ones(4))
    assert np.allclose(transmit_steering(30.0, g4), [1, 1j, -1, -1j], atol=1e-15)
    assert np.allclose(receive_steering(0.0, ArrayGeometry(8, 8)), np.ones(8))
    assert np.allclose(receive_steering(-30.0, g4), np.conj(receive_steering(30.0, g4)))


@pytest.mark.parametrize("theta,m", [(17.0, 32), (42.0, 8), (-63.5, 12)])
def test_steering_matches_scalar_oracle(theta, m):
    g = ArrayGeometry(num_tx=m, num_rx=m)
    assert np.allclose(transmit_steering(theta, g), steering_scalar(theta, m), atol=1e-12)
    assert np.allclose(receive_steering(theta, g), steering_scalar(theta, m), atol=1e-12)


def test_steering_properties():
    g = ArrayGeometry(num_tx=16, num_rx=4)
    for th in np.linspace(-90, 90, 37):
        a = transmit_steering(th, g)
        assert a[0] == 1
        assert np.allclose(np.abs(a), 1.0)
        assert np.isclose(np.vdot(a, a).real, 16.0)
    with pytest.raises(ValueError):
        transmit_steering(91.0, g)


def test_radar_channel():
    g = ArrayGeometry(num_tx=2, num_rx=2)
    assert np.allclose(radar_channel(30.0, g), [[1, -1j], [1j, 1]], atol=1e-15)
    g = ArrayGeometry(num_tx=16, num_rx=4)
    assert np.allclose(radar_channel(0.0, g), np.ones((4, 16)))
    for th in (-40.0, 7.0, 55.0):
        C = radar_channel(th, g)
        assert np.isclose(np.linalg.norm(C) ** 2, 64.0)
        assert np.linalg.matrix_rank(C) == 1
        ref = np.outer(receive_steering(th, g), transmit_steering(th, g).conj())
        assert np.max(np.abs(C - ref)) <= 1e-12
    batch = radar_channel(np.array([-40.0, 7.0]), g)
    assert np.allclose(batch[1], radar_channel(7.0, g))


def test_angle_grid():
    assert np.array_equal(angle_grid(0, 0, 0.5), [0.0])
    g = angle_grid(0, 5, 0.5)
    assert len(g) == 21 and g[0] == -5 and g[-1] == 5
    assert np.allclose(g, -g[::-1])
    assert np.allclose(angle_grid(10, 2, 1), [8, 9, 10, 11, 12])
    with pytest.raises(ValueError):
        angle_grid(0, 5, 0)


def test_lue_channels_single_path_and_normalization():
    cfg = desk_config()
    a = generate_lue_channels(cfg, 4, np.random.default_rng(7))
    b = generate_lue_channels(cfg, 4, np.random.default_rng(7))
    assert np.array_equal(a, b)
    cfg1 = desk_config(num_users=2, num_rf=4)
    draws = np.concatenate([generate_lue_channels(cfg1, 4, np.random.default_rng(s))
                            for s in range(5000)], axis=1)
    mean_energy = np.mean(np.sum(np.abs(draws) ** 2, axis=0))
    assert abs(mean_energy / 16 - 1) < 0.05


def test_eue_samples():
    rng = np.random.default_rng(3)
    h = (rng.standard_normal(16) + 1j * rng.standard_normal(16)) / np.sqrt(2)
    s0 = sample_eue_channels(h, 0.0, 5, rng)
    assert np.array_equal(s0, np.tile(h, (5, 1)))
    n = 10_000
    s = sample_eue_channels(h, 0.01, n, np.random.default_rng(4))
    assert np.array_equal(s[0], h)
    err = s[1:] - h
    bound = 3 * np.sqrt(0.01) / np.sqrt(n)
    assert np.all(np.abs(err.mean(axis=0).real) < 3 * bound)
    assert abs(np.mean(np.abs(err) ** 2) / 0.01 - 1) < 0.1


def test_make_channels_deterministic():
    cfg = desk_config()
    a = make_channels(cfg, np.random.default_rng(1))
    b = make_channels(cfg, np.random.default_rng(1))
    assert np.array_equal(a.lue, b.lue) and np.array_equal(a.eue_samples, b.eue_samples)
    assert a.lue.shape == (16, 2) and a.eue_samples.shape == (10, 16)


def test_config_validation():
    with pytest.raises(ConfigError):
        desk_config(num_rf=2)
    with pytest.raises(ConfigError):
        desk_config(clutter_angles=[1.0])
    with pytest.raises(ConfigError):
        desk_config(false_alarm=0.0)
