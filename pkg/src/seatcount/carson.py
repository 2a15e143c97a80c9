"""Speed-to-bandwidth conversion after Carson's rule.

For one person the received-power bandwidth around time ``t`` is the largest,
over body parts, of the Doppler shift implied by that part's peak speed in
the window plus the spectral width of the speed signal itself.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
from scipy.ndimage import maximum_filter1d

from ._frames import band_edge, frame_geometry, power_frames
from .errors import InvalidInput
from .motion import SpeedProfile

SPEED_OF_LIGHT = 299_792_458.0
CARRIER_HZ = 5.32e9
WAVELENGTH_M = SPEED_OF_LIGHT / CARRIER_HZ


@dataclass(frozen=True)
class CarsonConfig:
    wavelength_m: float = WAVELENGTH_M
    psi: Union[float, Sequence[float]] = 2.0
    window_s: float = 1.0
    shift_s: float = 0.01
    speed_band_power_fraction: float = 0.95

    def __post_init__(self):
        if self.wavelength_m <= 0:
            raise InvalidInput("wavelength_m must be positive")
        psi = np.atleast_1d(np.asarray(self.psi, dtype=float))
        if np.any(psi <= 0) or np.any(psi > 2):
            raise InvalidInput("psi must lie in (0, 2]")
        if not 0 < self.shift_s <= self.window_s:
            raise InvalidInput("need 0 < shift_s <= window_s")
        if not 0 < self.speed_band_power_fraction < 1:
            raise InvalidInput("speed_band_power_fraction must lie in (0, 1)")

    def psi_for(self, n_channels):
        psi = np.atleast_1d(np.asarray(self.psi, dtype=float))
        if psi.size == 1:
            return np.full(n_channels, psi[0])
        if psi.size != n_channels:
            raise InvalidInput(f"{psi.size} psi values for {n_channels} channels")
        return psi


@dataclass(frozen=True)
class BandwidthSeries:
    """Instantaneous bandwidth in Hz sampled every ``sample_period_s``."""

    values: np.ndarray
    sample_period_s: float = 0.01
    t0_s: float = 0.0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise InvalidInput("bandwidth values must be finite and non-negative")
        if not self.sample_period_s > 0:
            raise InvalidInput("sample_period_s must be positive")
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.size

    @property
    def times(self):
        return self.t0_s + np.arange(self.values.size) * self.sample_period_s

    @property
    def duration_s(self):
        return self.values.size * self.sample_period_s

    def slice(self, start, stop):
        return BandwidthSeries(self.values[start:stop], self.sample_period_s,
                               self.t0_s + start * self.sample_period_s)


def sliding_max(x, window_len: int) -> np.ndarray:
    """Centred running maximum, truncated at the edges.

    Element ``k`` covers ``x[k - window_len // 2 : k - window_len // 2 + window_len]``.
    """
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        raise InvalidInput("sliding_max needs a non-empty input")
    if window_len < 1:
        raise InvalidInput("window_len must be >= 1")
    # edge replication is equivalent to truncation for a maximum
    return maximum_filter1d(x, size=int(window_len), mode="nearest")


def _speed_bands(v, sample_rate, config):
    _, freqs, power = power_frames(v, sample_rate, config.window_s, config.shift_s)
    return band_edge(power, freqs, config.speed_band_power_fraction)


def speed_band(v, config: CarsonConfig, t: int, sample_rate: float = 100.0) -> float:
    """Spectral width (Hz) of speed channel ``v`` in window ``t``."""
    _, freqs, power = power_frames(v, sample_rate, config.window_s, config.shift_s, which=[t])
    return float(band_edge(power, freqs, config.speed_band_power_fraction)[0])


def carson_bandwidth(profile: SpeedProfile, config: CarsonConfig = CarsonConfig()) -> BandwidthSeries:
    """Predicted received-signal bandwidth series for one person's speed profile."""
    fs = profile.sample_rate
    win, centres, _ = frame_geometry(profile.n_samples, fs, config.window_s, config.shift_s)
    psi = config.psi_for(profile.n_parts)
    bw = np.zeros(centres.size)
    for m in range(profile.n_parts):
        v = profile.channels[m]
        vmax = sliding_max(v, win)[centres]
        term = vmax * psi[m] / config.wavelength_m + _speed_bands(v, fs, config)
        np.maximum(bw, term, out=bw)
    return BandwidthSeries(bw, config.shift_s, 0.0)


def max_combine(series: Sequence[BandwidthSeries]) -> BandwidthSeries:
    """Pointwise maximum of equally sampled bandwidth series."""
    series = list(series)
    if not series:
        raise InvalidInput("nothing to combine")
    first = series[0]
    for s in series[1:]:
        if len(s) != len(first) or not np.isclose(s.sample_period_s, first.sample_period_s):
            raise InvalidInput("series differ in length or sample period")
    out = np.max(np.vstack([s.values for s in series]), axis=0)
    return BandwidthSeries(out, first.sample_period_s, first.t0_s)


def write_bandwidth_csv(bw: BandwidthSeries, path):
    np.savetxt(path, np.column_stack([bw.times, bw.values]), delimiter=",",
               header="t_s,bw_hz", comments="", fmt="%.10g")


def read_bandwidth_csv(path) -> BandwidthSeries:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    t = data[:, 0]
    period = float(np.median(np.diff(t))) if t.size > 1 else 0.01
    return BandwidthSeries(data[:, 1], round(period, 12), float(t[0]))
