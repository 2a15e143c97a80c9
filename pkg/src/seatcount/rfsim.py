"""Received-power synthesis from body-part speeds and bandwidth extraction.

This is the measurement side: it produces what a receiver would record and
recovers bandwidth from it through spectrograms, so it can be checked
against the speed-side prediction in :mod:`seatcount.carson`.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
from scipy.integrate import cumulative_trapezoid

from ._frames import band_edge, power_frames
from .carson import BandwidthSeries
from .errors import InvalidInput
from .motion import SpeedProfile

DEFAULT_RATE_HZ = 200.0


@dataclass(frozen=True)
class ReflectorPath:
    amplitude: float
    initial_phase: float
    psi: float = 2.0
    speed_channel_index: int = 0

    def __post_init__(self):
        if not (np.isfinite(self.amplitude) and self.amplitude >= 0):
            raise InvalidInput("amplitude must be finite and >= 0")
        if not np.isfinite(self.initial_phase):
            raise InvalidInput("initial_phase must be finite")


@dataclass(frozen=True)
class BasebandTrace:
    values: np.ndarray
    sample_rate: float = DEFAULT_RATE_HZ

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        if not np.all(np.isfinite(v)):
            raise InvalidInput("trace values must be finite")
        if not self.sample_rate > 0:
            raise InvalidInput("sample_rate must be positive")
        object.__setattr__(self, "values", v)

    @property
    def times(self):
        return np.arange(self.values.size) / self.sample_rate


@dataclass(frozen=True)
class Spectrogram:
    times: np.ndarray
    freqs: np.ndarray
    power: np.ndarray

    def __post_init__(self):
        power = np.asarray(self.power, dtype=float)
        freqs = np.asarray(self.freqs, dtype=float)
        if power.shape != (len(self.times), freqs.size):
            raise InvalidInput("power must have shape (len(times), len(freqs))")
        if np.any(power < 0):
            raise InvalidInput("power must be non-negative")
        if freqs.size and (freqs[0] != 0 or np.any(np.diff(freqs) <= 0)):
            raise InvalidInput("freqs must increase strictly from 0")
        object.__setattr__(self, "power", power)
        object.__setattr__(self, "freqs", freqs)
        object.__setattr__(self, "times", np.asarray(self.times, dtype=float))


def random_paths(n_channels, rng, amplitude_range=(0.5, 1.0), psi=2.0) -> List[ReflectorPath]:
    """One path per speed channel, amplitudes uniform in ``amplitude_range``, phases uniform."""
    lo, hi = amplitude_range
    return [ReflectorPath(float(rng.uniform(lo, hi)), float(rng.uniform(0, 2 * np.pi)),
                          psi, m) for m in range(n_channels)]


def _resample(profile: SpeedProfile, sample_rate):
    if profile.sample_rate == sample_rate:
        return profile.channels
    n_out = int(round(profile.duration_s * sample_rate))
    t_out = np.arange(n_out) / sample_rate
    return np.vstack([np.interp(t_out, profile.times, ch) for ch in profile.channels])


def synth_power_signal(profile: SpeedProfile, paths: Sequence[ReflectorPath],
                       wavelength_m: float, sample_rate: float = DEFAULT_RATE_HZ,
                       noise_std: float = 0.0, seed=None) -> BasebandTrace:
    """Received power as a sum of phase-modulated reflector paths plus white noise."""
    if wavelength_m <= 0:
        raise InvalidInput("wavelength_m must be positive")
    if noise_std < 0:
        raise InvalidInput("noise_std must be >= 0")
    for p in paths:
        if not 0 <= p.speed_channel_index < profile.n_parts:
            raise InvalidInput(f"speed_channel_index {p.speed_channel_index} out of range")
    speeds = _resample(profile, sample_rate)
    n = speeds.shape[1]
    dist = cumulative_trapezoid(speeds, dx=1.0 / sample_rate, axis=1, initial=0.0)
    p = np.zeros(n)
    for path in paths:
        p += path.amplitude * np.cos(2 * np.pi * path.psi / wavelength_m
                                     * dist[path.speed_channel_index] + path.initial_phase)
    if noise_std > 0:
        p += np.random.default_rng(seed).normal(0.0, noise_std, n)
    return BasebandTrace(p, sample_rate)


def synth_streams(profile: SpeedProfile, n_streams: int, wavelength_m: float,
                  sample_rate: float = DEFAULT_RATE_HZ, noise_std: float = 0.0,
                  amplitude_range=(0.5, 1.0), seed=0) -> List[BasebandTrace]:
    """Several receive streams driven by the same speeds, each with its own paths and noise."""
    children = np.random.SeedSequence(seed).spawn(n_streams)
    out = []
    for child in children:
        rng = np.random.default_rng(child)
        paths = random_paths(profile.n_parts, rng, amplitude_range)
        out.append(synth_power_signal(profile, paths, wavelength_m, sample_rate,
                                      noise_std, seed=rng.integers(2**63)))
    return out


def spectrogram(trace: BasebandTrace, window_s: float = 1.0, shift_s: float = 0.01) -> Spectrogram:
    """Short-time power spectrum; frames are mean-removed and cosine-tapered."""
    if trace.values.size < int(round(window_s * trace.sample_rate)):
        raise InvalidInput("trace is shorter than one window")
    times, freqs, power = power_frames(trace.values, trace.sample_rate, window_s, shift_s)
    return Spectrogram(times, freqs, power)


def pca_components(traces: Sequence[BasebandTrace], n_components: int = 5) -> List[BasebandTrace]:
    """Principal-component time series, treating each trace as one variable."""
    traces = list(traces)
    if n_components < 1:
        raise InvalidInput("n_components must be >= 1")
    if len(traces) < n_components:
        raise InvalidInput(f"need at least {n_components} traces, got {len(traces)}")
    rate = traces[0].sample_rate
    n = traces[0].values.size
    if any(t.sample_rate != rate or t.values.size != n for t in traces):
        raise InvalidInput("traces must share length and sample rate")
    X = np.column_stack([t.values for t in traces])
    X = X - X.mean(axis=0)
    U, s, _ = np.linalg.svd(X, full_matrices=False)
    scores = U[:, :n_components] * s[:n_components]
    return [BasebandTrace(scores[:, k], rate) for k in range(n_components)]


def pca_average_spectrogram(traces: Sequence[BasebandTrace], n_components: int = 5,
                            window_s: float = 1.0, shift_s: float = 0.01) -> Spectrogram:
    comps = pca_components(traces, n_components)
    specs = [spectrogram(c, window_s, shift_s) for c in comps]
    power = np.mean([s.power for s in specs], axis=0)
    return Spectrogram(specs[0].times, specs[0].freqs, power)


def extract_bandwidth(spec: Spectrogram, power_fraction: float = 0.95) -> BandwidthSeries:
    """Per frame, the lowest frequency holding ``power_fraction`` of the frame's power."""
    if not 0 < power_fraction < 1:
        raise InvalidInput("power_fraction must lie in (0, 1)")
    bw = band_edge(spec.power, spec.freqs, power_fraction)
    period = float(spec.times[1] - spec.times[0]) if spec.times.size > 1 else 0.01
    t0 = float(spec.times[0]) if spec.times.size else 0.0
    return BandwidthSeries(bw, period, t0)


def write_trace_csv(traces: Sequence[BasebandTrace], path):
    traces = list(traces)
    cols = ["p"] if len(traces) == 1 else [f"p_{k}" for k in range(len(traces))]
    data = np.column_stack([traces[0].times] + [t.values for t in traces])
    np.savetxt(path, data, delimiter=",", header="t_s," + ",".join(cols),
               comments="", fmt="%.10g")


def read_trace_csv(path) -> List[BasebandTrace]:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    rate = 1.0 / float(np.median(np.diff(data[:, 0])))
    return [BasebandTrace(data[:, k], rate) for k in range(1, data.shape[1])]


def write_spectrogram(spec: Spectrogram, json_path, csv_path):
    """JSON header with times/freqs next to a CSV power matrix (rows = times)."""
    np.savetxt(csv_path, spec.power, delimiter=",", fmt="%.10g")
    with open(json_path, "w") as fh:
        json.dump({"times": spec.times.tolist(), "freqs": spec.freqs.tolist(),
                   "power_csv": str(csv_path)}, fh)


def read_spectrogram(json_path, csv_path: Optional[str] = None) -> Spectrogram:
    with open(json_path) as fh:
        head = json.load(fh)
    power = np.loadtxt(csv_path or head["power_csv"], delimiter=",", ndmin=2)
    return Spectrogram(np.array(head["times"]), np.array(head["freqs"]), power)
