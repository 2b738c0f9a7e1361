"""Communication, secrecy and radar performance measures."""
from __future__ import annotations

import csv
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
from scipy import stats

from .array_model import ArrayGeometry, ChannelSet, SystemConfig, radar_channel, transmit_steering


class ZeroFilter(ValueError):
    pass


@dataclass
class BeamformerSet:
    analog: np.ndarray  # (M_t, N_RF)
    digital_comm: np.ndarray  # (N_RF, U)
    digital_i2s: np.ndarray  # (N_RF,)

    @property
    def digital(self) -> np.ndarray:
        """D_CI = [d_I, D_C]; column 0 is the I2S beamformer."""
        return np.column_stack([self.digital_i2s, self.digital_comm])

    @property
    def effective(self) -> np.ndarray:
        """Y = A D_CI = [y_0, y_1, ..., y_U]."""
        return self.analog @ self.digital

    @classmethod
    def from_digital(cls, analog, digital) -> "BeamformerSet":
        digital = np.asarray(digital)
        return cls(np.asarray(analog), digital[:, 1:].copy(), digital[:, 0].copy())

    def power(self) -> float:
        return float(np.linalg.norm(self.effective) ** 2)

    def is_constant_modulus(self) -> bool:
        return bool(np.all(np.abs(self.analog) == 1.0))


@dataclass
class MetricsReport:
    lue_sinr: np.ndarray
    lue_rate: np.ndarray
    eue_rate_worst: np.ndarray
    secrecy_rate_worst: float
    radar_sinr_grid: np.ndarray
    min_radar_sinr: float
    detection_probability: float
    power: float = float("nan")

    @property
    def min_rate(self) -> float:
        return float(np.min(self.lue_rate))

    def to_dict(self) -> dict:
        """Flat JSON-compatible record."""
        out = {}
        for key, val in asdict(self).items():
            arr = np.asarray(val)
            if arr.ndim == 0:
                out[key] = float(arr)
            else:
                for i, v in enumerate(arr):
                    out[f"{key}_{i}"] = float(v)
        out["min_rate"] = self.min_rate
        return out


def rate(sinr):
    return np.log2(1.0 + np.asarray(sinr, dtype=float))


def _gains(channels_cols: np.ndarray, effective: np.ndarray) -> np.ndarray:
    """|h^H y_j|^2 for every channel column h and every column y_j."""
    return np.abs(channels_cols.conj().T @ effective) ** 2


def lue_sinrs_effective(lue: np.ndarray, effective: np.ndarray, noise_user) -> np.ndarray:
    g = _gains(lue, effective)  # (U, U+1); column 0 is the I2S stream
    u = np.arange(lue.shape[1])
    signal = g[u, u + 1]
    interference = g.sum(axis=1) - signal
    return signal / (interference + np.asarray(noise_user, dtype=float))


def lue_sinr(u: int, channels: ChannelSet, bf: BeamformerSet, noise_user: float) -> float:
    noise = np.broadcast_to(noise_user, (channels.num_users,))
    return float(lue_sinrs_effective(channels.lue, bf.effective, noise)[u])


def eue_sinrs_effective(eue_samples: np.ndarray, effective: np.ndarray,
                        noise_eue: float) -> np.ndarray:
    """SINR of the eavesdropper about each user, per sample: shape (U, N)."""
    g = np.abs(np.atleast_2d(eue_samples).conj() @ effective) ** 2  # (N, U+1)
    return (g[:, 1:] / (g[:, :1] + noise_eue)).T


def eue_sinr(u: int, eue_channel, bf: BeamformerSet, noise_eue: float) -> float:
    return float(eue_sinrs_effective(np.asarray(eue_channel)[None, :], bf.effective,
                                     noise_eue)[u, 0])


def worst_case_sr(lue_rates, eue_rates_per_sample) -> float:
    eue = np.atleast_2d(np.asarray(eue_rates_per_sample, dtype=float))
    gap = np.asarray(lue_rates, dtype=float) - eue.max(axis=1)
    return float(np.sum(np.maximum(gap, 0.0)))


def clutter_filter_stack(w: np.ndarray, config: SystemConfig) -> np.ndarray:
    """Rows varsigma_i w^H A~(theta_i), shape (I, M_t)."""
    if config.num_clutter == 0:
        return np.zeros((0, config.num_tx), dtype=complex)
    chans = radar_channel(config.clutter_angles, config.geometry)  # (I, M_r, M_t)
    return config.clutter_amplitudes[:, None] * np.einsum("r,irt->it", w.conj(), chans)


def radar_sinrs_effective(w: np.ndarray, effective: np.ndarray, thetas,
                          config: SystemConfig) -> np.ndarray:
    """Radar output SINR at each angle in ``thetas`` for effective beamformer Y."""
    w = np.asarray(w, dtype=complex)
    wn2 = float(np.vdot(w, w).real)
    if wn2 == 0:
        raise ZeroFilter("receive filter is zero")
    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
    chans = radar_channel(thetas, config.geometry)  # (K, M_r, M_t)
    rows = np.einsum("r,krt->kt", w.conj(), chans)
    num = abs(config.target_amplitude) ** 2 * np.sum(np.abs(rows @ effective) ** 2, axis=1)
    clutter = np.sum(np.abs(clutter_filter_stack(w, config) @ effective) ** 2)
    return num / (clutter + config.noise_radar * wn2)


def radar_sinr(w, bf: BeamformerSet, theta: float, config: SystemConfig) -> float:
    return float(radar_sinrs_effective(w, bf.effective, [theta], config)[0])


def mse(u: int, kappa: complex, channels: ChannelSet, effective: np.ndarray,
        noise_user: float) -> float:
    h = channels.lue[:, u]
    g = h.conj() @ effective
    return float(abs(kappa) ** 2 * (np.sum(np.abs(g) ** 2) + noise_user)
                 - 2 * np.real(kappa * g[u + 1]) + 1.0)


def marcum_q1(a, b):
    """First-order Marcum Q function via the noncentral chi-square tail."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return np.where(b == 0, 1.0, stats.ncx2.sf(b ** 2, 2, a ** 2))


def detection_probability(radar_sinr: float, false_alarm: float) -> float:
    if radar_sinr < 0 or not 0 < false_alarm <= 1:
        raise ValueError("need radar_sinr >= 0 and 0 < false_alarm <= 1")
    a = np.sqrt(2.0 * radar_sinr)
    b = np.sqrt(-2.0 * np.log(false_alarm))
    if a == 0:
        return float(false_alarm)
    return float(marcum_q1(a, b))


def synthesize_transmit_block(bf: BeamformerSet, num_symbols: int,
                              rng: np.random.Generator) -> np.ndarray:
    """x_TX = A (D_C s_C + d_I s_I) for ``num_symbols`` unit-power Gaussian symbols."""
    if num_symbols < 1:
        raise ValueError("num_symbols must be >= 1")
    streams = bf.digital.shape[1]
    s = (rng.standard_normal((streams, num_symbols))
         + 1j * rng.standard_normal((streams, num_symbols))) / np.sqrt(2)
    return bf.effective @ s


def transmit_beampattern(bf_or_effective, grid, spacing_ratio: float = 0.5) -> np.ndarray:
    """||a_t(theta)^H A D_CI||^2 on each grid angle."""
    y = bf_or_effective.effective if isinstance(bf_or_effective, BeamformerSet) \
        else np.asarray(bf_or_effective)
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    geom = ArrayGeometry(num_tx=y.shape[0], num_rx=1, spacing_ratio=spacing_ratio)
    at = transmit_steering(grid, geom)
    return np.sum(np.abs(at.conj() @ y) ** 2, axis=1)


def write_beampattern_csv(path, grid, power) -> None:
    power = np.asarray(power, dtype=float)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["angle_deg", "power_linear", "power_db"])
        for a, p in zip(grid, power):
            writer.writerow([f"{a:.6g}", repr(float(p)),
                             repr(float(10 * np.log10(p))) if p > 0 else "-inf"])


def evaluate(config: SystemConfig, channels: ChannelSet, bf: BeamformerSet,
             w: np.ndarray, grid: Sequence[float]) -> MetricsReport:
    y = bf.effective
    return evaluate_effective(config, channels, y, w, grid)


def evaluate_effective(config: SystemConfig, channels: ChannelSet, effective: np.ndarray,
                       w: np.ndarray, grid: Sequence[float]) -> MetricsReport:
    sinr = lue_sinrs_effective(channels.lue, effective, config.noise_user)
    rates = rate(sinr)
    eue_rates = rate(eue_sinrs_effective(channels.eue_samples, effective, config.noise_eue))
    radar = radar_sinrs_effective(w, effective, grid, config)
    min_radar = float(np.min(radar))
    return MetricsReport(
        lue_sinr=sinr,
        lue_rate=rates,
        eue_rate_worst=eue_rates.max(axis=1),
        secrecy_rate_worst=worst_case_sr(rates, eue_rates),
        radar_sinr_grid=radar,
        min_radar_sinr=min_radar,
        detection_probability=detection_probability(min_radar, config.false_alarm),
        power=float(np.linalg.norm(effective) ** 2),
    )
