"""ULA geometry, steering vectors, channels and the scenario configuration."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np


class ConfigError(ValueError):
    """Raised when a SystemConfig violates one of its invariants."""


def db2lin(x):
    return 10.0 ** (np.asarray(x, dtype=float) / 10.0)


def lin2db(x):
    return 10.0 * np.log10(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class ArrayGeometry:
    num_tx: int = 32
    num_rx: int = 8
    spacing_ratio: float = 0.5  # d / lambda

    def __post_init__(self):
        if self.num_tx < 1 or self.num_rx < 1:
            raise ConfigError("array sizes must be positive")
        if not self.spacing_ratio > 0:
            raise ConfigError("spacing_ratio must be positive")


@dataclass
class SystemConfig:
    """All scenario constants. Powers and SINRs are linear.

    ``eue_estimate`` may be left as None; it is then drawn from the LUE
    channel model when channels are generated.
    """

    geometry: ArrayGeometry = field(default_factory=ArrayGeometry)
    num_rf: int = 8
    num_users: int = 4
    power_budget: float = 1.0
    noise_user: Sequence[float] = (0.1, 0.1, 0.1, 0.1)
    noise_eue: float = 0.01
    noise_radar: float = 0.01
    target_angle: float = 0.0
    angle_uncertainty: float = 5.0
    grid_step: float = 0.5
    clutter_angles: Sequence[float] = (-45.0, 30.0, 60.0)
    target_amplitude: complex = float(np.sqrt(10.0))
    clutter_amplitudes: Sequence[complex] = tuple([float(np.sqrt(db2lin(15.0)))] * 3)
    eue_estimate: Optional[np.ndarray] = None
    csi_error_var: float = 0.01
    num_samples: int = 20
    eue_rate_caps: Sequence[float] = (0.5, 0.5, 0.5, 0.5)
    radar_sinr_target: float = 10.0
    false_alarm: float = 1e-4
    path_count: int = 4

    def __post_init__(self):
        self.noise_user = np.broadcast_to(
            np.asarray(self.noise_user, dtype=float), (self.num_users,)).copy()
        self.eue_rate_caps = np.broadcast_to(
            np.asarray(self.eue_rate_caps, dtype=float), (self.num_users,)).copy()
        self.clutter_angles = np.asarray(self.clutter_angles, dtype=float).reshape(-1)
        self.clutter_amplitudes = np.asarray(self.clutter_amplitudes, dtype=complex).reshape(-1)
        if self.eue_estimate is not None:
            self.eue_estimate = np.asarray(self.eue_estimate, dtype=complex).reshape(-1)
        self.validate()

    @property
    def num_tx(self) -> int:
        return self.geometry.num_tx

    @property
    def num_rx(self) -> int:
        return self.geometry.num_rx

    @property
    def num_clutter(self) -> int:
        return len(self.clutter_angles)

    def validate(self):
        g = self.geometry
        if self.num_users < 1:
            raise ConfigError("num_users must be >= 1")
        if self.num_rf < self.num_users + 1:
            raise ConfigError(
                f"num_rf={self.num_rf} cannot carry {self.num_users} user streams "
                "plus the I2S stream")
        if self.num_rf > g.num_tx:
            raise ConfigError("num_rf must not exceed num_tx")
        if not self.power_budget > 0:
            raise ConfigError("power_budget must be positive")
        if np.any(self.noise_user <= 0) or self.noise_eue <= 0 or self.noise_radar <= 0:
            raise ConfigError("noise powers must be positive")
        if np.any(self.eue_rate_caps < 0):
            raise ConfigError("eue_rate_caps must be nonnegative")
        if self.angle_uncertainty < 0 or self.grid_step <= 0:
            raise ConfigError("invalid angle grid parameters")
        if len(self.clutter_angles) != len(self.clutter_amplitudes):
            raise ConfigError("clutter_angles and clutter_amplitudes differ in length")
        if self.csi_error_var < 0 or self.num_samples < 1:
            raise ConfigError("invalid EUE sampling parameters")
        if self.radar_sinr_target < 0:
            raise ConfigError("radar_sinr_target must be nonnegative")
        if not 0 < self.false_alarm <= 1:
            raise ConfigError("false_alarm must lie in (0, 1]")
        if self.eue_estimate is not None and self.eue_estimate.shape != (g.num_tx,):
            raise ConfigError("eue_estimate must have num_tx entries")
        if self.path_count < 1:
            raise ConfigError("path_count must be >= 1")

    def replace(self, **changes) -> "SystemConfig":
        return replace(self, **changes)


def desk_config(**overrides) -> SystemConfig:
    """Small scenario used for tests and quick experiments."""
    base = dict(
        geometry=ArrayGeometry(num_tx=16, num_rx=4),
        num_rf=4,
        num_users=2,
        noise_user=0.1,
        angle_uncertainty=5.0,
        grid_step=2.5,
        num_samples=10,
        eue_rate_caps=0.5,
        radar_sinr_target=db2lin(10.0),
    )
    base.update(overrides)
    return SystemConfig(**base)


def paper_config(**overrides) -> SystemConfig:
    return SystemConfig(**overrides)


@dataclass
class ChannelSet:
    lue: np.ndarray  # (M_t, U), column u is h_u
    eue_samples: np.ndarray  # (N, M_t), row n is h_e^n

    def __post_init__(self):
        if not (np.all(np.isfinite(self.lue)) and np.all(np.isfinite(self.eue_samples))):
            raise ValueError("channel entries must be finite")

    @property
    def num_users(self) -> int:
        return self.lue.shape[1]

    @property
    def num_samples(self) -> int:
        return self.eue_samples.shape[0]


def _steering(theta, num: int, spacing_ratio: float) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if np.any(np.abs(theta) > 90):
        raise ValueError("angles must lie in [-90, 90] degrees")
    m = np.arange(num)
    phase = 2 * np.pi * spacing_ratio * np.sin(np.deg2rad(theta))
    return np.exp(1j * np.multiply.outer(phase, m))


def transmit_steering(theta, geometry: ArrayGeometry) -> np.ndarray:
    """a_t(theta); a scalar angle gives shape (M_t,), an array (..., M_t)."""
    return _steering(theta, geometry.num_tx, geometry.spacing_ratio)


def receive_steering(theta, geometry: ArrayGeometry) -> np.ndarray:
    return _steering(theta, geometry.num_rx, geometry.spacing_ratio)


def radar_channel(theta, geometry: ArrayGeometry) -> np.ndarray:
    """Monostatic radar channel a_r(theta) a_t(theta)^H, shape (M_r, M_t)."""
    ar = receive_steering(theta, geometry)
    at = transmit_steering(theta, geometry)
    return np.multiply.outer(ar, at.conj()) if ar.ndim == 1 else \
        ar[..., :, None] * at.conj()[..., None, :]


def _crandn(rng: np.random.Generator, size) -> np.ndarray:
    return (rng.standard_normal(size) + 1j * rng.standard_normal(size)) / np.sqrt(2)


def geometric_channel(geometry: ArrayGeometry, path_count: int, num: int,
                      rng: np.random.Generator) -> np.ndarray:
    """Sum-of-paths ULA channels, returned as columns (M_t, num) with E||h||^2 = M_t.

    Each path is a unit-modulus steering vector, so the 1/sqrt(L) factor alone
    gives the stated normalization.
    """
    gains = _crandn(rng, (num, path_count))
    angles = rng.uniform(-90.0, 90.0, size=(num, path_count))
    steer = transmit_steering(angles, geometry)  # (num, L, M_t)
    h = np.einsum("nl,nlm->mn", gains, steer) / np.sqrt(path_count)
    return h


def generate_lue_channels(config: SystemConfig, path_count: int,
                          rng: np.random.Generator) -> np.ndarray:
    if path_count < 1:
        raise ValueError("path_count must be >= 1")
    return geometric_channel(config.geometry, path_count, config.num_users, rng)


def sample_eue_channels(eue_estimate, csi_error_var: float, n: int,
                        rng: np.random.Generator) -> np.ndarray:
    """N channel samples (rows); row 0 is the estimate itself."""
    h_hat = np.asarray(eue_estimate, dtype=complex).reshape(-1)
    if n < 1 or csi_error_var < 0:
        raise ValueError("need n >= 1 and csi_error_var >= 0")
    samples = np.tile(h_hat, (n, 1))
    if csi_error_var > 0 and n > 1:
        samples[1:] += np.sqrt(csi_error_var) * _crandn(rng, (n - 1, h_hat.size))
    return samples


def angle_grid(target_angle: float, angle_uncertainty: float, grid_step: float) -> np.ndarray:
    """Endpoint-inclusive uniform grid over [theta0 - dtheta, theta0 + dtheta]."""
    if not grid_step > 0:
        raise ValueError("grid_step must be positive")
    k = int(round(2 * angle_uncertainty / grid_step)) + 1
    if k == 1:
        return np.array([float(target_angle)])
    return np.linspace(target_angle - angle_uncertainty, target_angle + angle_uncertainty, k)


def make_channels(config: SystemConfig, rng: np.random.Generator) -> ChannelSet:
    """Draw LUE channels, the EUE estimate (if absent) and the EUE sample set."""
    lue = generate_lue_channels(config, config.path_count, rng)
    h_hat = config.eue_estimate
    if h_hat is None:
        h_hat = geometric_channel(config.geometry, config.path_count, 1, rng)[:, 0]
    eue = sample_eue_channels(h_hat, config.csi_error_var, config.num_samples, rng)
    return ChannelSet(lue=lue, eue_samples=eue)
