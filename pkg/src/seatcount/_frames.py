"""Windowed framing shared by the speed-side and RF-side spectral estimates.

Frames are centred on ``t_k = k * shift_s``. Frames that run off either end
of the signal are truncated; each frame is mean-removed and tapered over
its valid samples only, then zero-padded to the nominal window length so
every frame shares one frequency grid with spacing ``1 / window_s``.
"""
from __future__ import annotations

import numpy as np

from .errors import InvalidInput

_CHUNK = 4096
# relative size below which a mean-removed frame counts as exactly constant
_CONSTANT_RTOL = 1e-12


def frame_geometry(n_samples, sample_rate, window_s, shift_s):
    """Return (window length in samples, frame centre indices, frame times)."""
    if sample_rate <= 0 or window_s <= 0 or shift_s <= 0:
        raise InvalidInput("sample_rate, window_s and shift_s must be positive")
    win = int(round(window_s * sample_rate))
    if win < 2:
        raise InvalidInput(f"window of {window_s}s at {sample_rate}Hz is under 2 samples")
    duration = n_samples / sample_rate
    n_frames = int(np.ceil(duration / shift_s - 1e-9))
    times = np.arange(n_frames) * shift_s
    centres = np.minimum(np.round(times * sample_rate).astype(np.int64), n_samples - 1)
    return win, centres, times


def frame_bounds(centres, win, n_samples):
    start = centres - win // 2
    lo = np.clip(start, 0, n_samples)
    hi = np.clip(start + win, 0, n_samples)
    return lo, hi


def power_frames(x, sample_rate, window_s, shift_s, taper=True, which=None):
    """Short-time power spectra of ``x``.

    Returns ``(times, freqs, power)`` with ``power`` of shape
    ``(n_frames, win // 2 + 1)``. ``which`` restricts the result to the
    given frame indices.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    win, centres, times = frame_geometry(n, sample_rate, window_s, shift_s)
    if which is not None:
        which = np.atleast_1d(np.asarray(which, dtype=np.int64))
        if np.any(which < 0) or np.any(which >= times.size):
            raise InvalidInput(f"frame index outside [0, {times.size})")
        centres, times = centres[which], times[which]
    freqs = np.fft.rfftfreq(win, d=1.0 / sample_rate)
    power = np.empty((times.size, freqs.size))
    lo_all, hi_all = frame_bounds(centres, win, n)
    offs = np.arange(win)
    for a in range(0, times.size, _CHUNK):
        lo = lo_all[a:a + _CHUNK, None]
        hi = hi_all[a:a + _CHUNK, None]
        length = hi - lo
        idx = lo + offs
        valid = offs < length
        seg = np.where(valid, x[np.minimum(idx, n - 1)], 0.0)
        cnt = np.maximum(length, 1)
        mean = seg.sum(axis=1, keepdims=True) / cnt
        seg = np.where(valid, seg - mean, 0.0)
        scale = np.abs(seg).max(axis=1)
        ref = np.abs(np.where(valid, x[np.minimum(idx, n - 1)], 0.0)).max(axis=1)
        flat = scale <= _CONSTANT_RTOL * np.maximum(ref, np.finfo(float).tiny)
        if taper:
            w = np.sin(np.pi * (offs + 0.5) / cnt) ** 2
            seg = np.where(valid, seg * w, 0.0)
        spec = np.abs(np.fft.rfft(seg, axis=1)) ** 2
        spec[flat] = 0.0
        power[a:a + _CHUNK] = spec
    return times, freqs, power


def band_edge(power, freqs, fraction):
    """Smallest frequency whose cumulative power reaches ``fraction`` of the total.

    Rows with zero total power map to 0 Hz.
    """
    power = np.atleast_2d(power)
    cum = np.cumsum(power, axis=1)
    total = cum[:, -1]
    target = fraction * total * (1.0 - 1e-12)
    k = np.argmax(cum >= target[:, None], axis=1)
    out = np.asarray(freqs, dtype=float)[k]
    out[total <= 0] = 0.0
    return out
