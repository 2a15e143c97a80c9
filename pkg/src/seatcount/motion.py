"""Body-part speed profiles: pose-landmark ingestion and a synthetic fidget process."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import signal

from .errors import InvalidInput

# average adult interpupillary distance, metres
INTERPUPILLARY_M = 0.06336
VISIBILITY_FLOOR = 0.5
DEFAULT_LOWPASS_HZ = 6.0


@dataclass(frozen=True)
class LandmarkTrack:
    """Pose landmarks for one person.

    ``joints`` has shape ``(n_joints, n_frames, 3)`` holding
    ``(x_px, y_px, visibility)`` per joint and frame.
    """

    frame_rate: float
    joints: np.ndarray
    interpupillary_px: float
    names: Optional[tuple] = None

    def __post_init__(self):
        joints = np.asarray(self.joints, dtype=float)
        if joints.ndim != 3 or joints.shape[2] != 3:
            raise InvalidInput("joints must have shape (n_joints, n_frames, 3)")
        if joints.shape[0] < 1 or joints.shape[1] < 2:
            raise InvalidInput("need at least one joint and two frames")
        if not (np.isfinite(self.frame_rate) and self.frame_rate > 0):
            raise InvalidInput("frame_rate must be positive")
        if not (np.isfinite(self.interpupillary_px) and self.interpupillary_px > 0):
            raise InvalidInput("interpupillary_px must be positive")
        vis = joints[:, :, 2]
        if np.any(~np.isfinite(vis)) or np.any(vis < 0) or np.any(vis > 1):
            raise InvalidInput("visibility values must lie in [0, 1]")
        object.__setattr__(self, "joints", joints)

    @property
    def n_frames(self):
        return self.joints.shape[1]


@dataclass(frozen=True)
class SpeedProfile:
    """Per-body-part speed magnitudes in m/s, shape ``(n_parts, n_samples)``."""

    sample_rate: float
    channels: np.ndarray

    def __post_init__(self):
        ch = np.atleast_2d(np.asarray(self.channels, dtype=float))
        if ch.ndim != 2 or ch.shape[1] < 1:
            raise InvalidInput("channels must be a non-empty 2-D array")
        if not (np.isfinite(self.sample_rate) and self.sample_rate > 0):
            raise InvalidInput("sample_rate must be positive")
        if not np.all(np.isfinite(ch)) or np.any(ch < 0):
            raise InvalidInput("speeds must be finite and non-negative")
        object.__setattr__(self, "channels", ch)

    @property
    def n_parts(self):
        return self.channels.shape[0]

    @property
    def n_samples(self):
        return self.channels.shape[1]

    @property
    def duration_s(self):
        return self.n_samples / self.sample_rate

    @property
    def times(self):
        return np.arange(self.n_samples) / self.sample_rate

    def stack(self, other: "SpeedProfile") -> "SpeedProfile":
        """Channels of both profiles side by side (same rate, truncated to the shorter)."""
        if other.sample_rate != self.sample_rate:
            raise InvalidInput("sample rates differ")
        n = min(self.n_samples, other.n_samples)
        return SpeedProfile(self.sample_rate,
                            np.vstack([self.channels[:, :n], other.channels[:, :n]]))


@dataclass(frozen=True)
class FidgetProcessParams:
    silent_mean_s: float = 15.0
    fidget_mean_s: float = 3.0
    peak_speed_range: tuple = (0.05, 0.35)
    n_body_parts: int = 3
    envelope_smoothness_hz: float = 2.0
    min_duration_s: float = 0.5
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.peak_speed_range
        if self.silent_mean_s <= 0 or self.fidget_mean_s <= 0:
            raise InvalidInput("mean durations must be positive")
        if lo < 0 or hi < lo:
            raise InvalidInput("peak_speed_range must satisfy 0 <= v_lo <= v_hi")
        if self.n_body_parts < 1:
            raise InvalidInput("n_body_parts must be >= 1")
        if self.envelope_smoothness_hz <= 0:
            raise InvalidInput("envelope_smoothness_hz must be positive")
        if not 0 <= self.min_duration_s < min(self.silent_mean_s, self.fidget_mean_s):
            raise InvalidInput("min_duration_s must be >= 0 and below both mean durations")

    @property
    def duty_cycle(self):
        return self.fidget_mean_s / (self.fidget_mean_s + self.silent_mean_s)


def pixel_scale_factor(d_ip_px: float) -> float:
    """Metres per pixel given the measured interpupillary distance in pixels."""
    d = float(d_ip_px)
    if not math.isfinite(d) or d <= 0:
        raise InvalidInput(f"interpupillary distance must be positive, got {d_ip_px!r}")
    return INTERPUPILLARY_M / d


def lowpass(x, cutoff_hz, sample_rate, order=2):
    """Zero-phase Butterworth low-pass along the last axis."""
    x = np.asarray(x, dtype=float)
    b, a = signal.butter(order, cutoff_hz, btype="low", fs=sample_rate)
    padlen = min(3 * max(len(a), len(b)), x.shape[-1] - 1)
    return signal.filtfilt(b, a, x, axis=-1, padlen=padlen)


def landmarks_to_speeds(track: LandmarkTrack,
                        lowpass_cutoff_hz: float = DEFAULT_LOWPASS_HZ,
                        visibility_floor: float = VISIBILITY_FLOOR) -> SpeedProfile:
    """Metric joint speeds from pixel trajectories.

    Speed sample ``k`` is the displacement between frames ``k`` and ``k+1``,
    so the profile has ``n_frames - 1`` samples. A step touching a frame whose
    visibility is below ``visibility_floor`` yields zero speed.
    """
    fr = track.frame_rate
    if not 0 < lowpass_cutoff_hz < fr / 2:
        raise InvalidInput(f"cutoff must lie in (0, {fr / 2}) Hz")
    xy = track.joints[:, :, :2]
    visible = track.joints[:, :, 2] >= visibility_floor
    step = np.linalg.norm(np.diff(xy, axis=1), axis=2)
    ok = visible[:, 1:] & visible[:, :-1]
    speed = np.where(ok, step, 0.0) * fr * pixel_scale_factor(track.interpupillary_px)
    if speed.shape[1] > 1:
        speed = lowpass(speed, lowpass_cutoff_hz, fr)
    return SpeedProfile(fr, np.clip(speed, 0.0, None))


def _burst_envelope(n, ramp):
    """Unit-peak plateau with raised-cosine ramps of ``ramp`` samples, positive on all n samples."""
    k = np.arange(n) + 0.5
    ramp = max(min(ramp, n / 2), 0.5)
    rise = np.sin(np.pi / 2 * np.minimum(k, n - k) / ramp) ** 2
    return np.where(np.minimum(k, n - k) < ramp, rise, 1.0)


def _fidget_channel(rng, params, n_samples, sample_rate):
    out = np.zeros(n_samples)
    v_lo, v_hi = params.peak_speed_range
    if v_hi <= 0:
        return out
    # ramp length sets the envelope's spectral extent
    ramp = 0.5 * sample_rate / params.envelope_smoothness_hz
    # shifted exponentials: no burst or pause shorter than m0, means unchanged
    m0 = params.min_duration_s
    # start in the stationary state distribution
    fidgeting = rng.random() < params.duty_cycle
    t = 0.0
    duration = n_samples / sample_rate
    while t < duration:
        if fidgeting:
            d = m0 + rng.exponential(params.fidget_mean_s - m0)
            peak = rng.uniform(v_lo, v_hi)
            a = int(round(t * sample_rate))
            b = int(round((t + d) * sample_rate))
            if b > a:
                bump = peak * _burst_envelope(b - a, ramp)
                stop = min(b, n_samples)
                out[a:stop] = bump[:stop - a]
        else:
            d = m0 + rng.exponential(params.silent_mean_s - m0)
        t += d
        fidgeting = not fidgeting
    return out


def synth_fidget_profile(params: FidgetProcessParams, duration_s: float,
                         sample_rate: float = 100.0) -> SpeedProfile:
    """Alternating silent/fidget renewal process per body part.

    Each channel draws its own stream from ``params.seed`` so adding parts
    does not perturb existing ones.
    """
    if duration_s <= 0 or sample_rate <= 0:
        raise InvalidInput("duration_s and sample_rate must be positive")
    n = int(round(duration_s * sample_rate))
    if n < 1:
        raise InvalidInput("profile would have no samples")
    seeds = np.random.SeedSequence(params.seed).spawn(params.n_body_parts)
    chans = np.vstack([_fidget_channel(np.random.default_rng(s), params, n, sample_rate)
                       for s in seeds])
    return SpeedProfile(sample_rate, chans)


def read_landmark_csv(csv_path, meta: dict) -> LandmarkTrack:
    """Load ``frame,joint,x_px,y_px,visibility`` rows plus sidecar metadata."""
    import csv

    need = {"frame_rate", "interpupillary_px"} - set(meta or {})
    if need:
        raise InvalidInput(f"landmark metadata missing {sorted(need)}")

    rows = {}
    joints = []
    with open(csv_path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"frame", "joint", "x_px", "y_px", "visibility"} - set(reader.fieldnames or ())
        if missing:
            raise InvalidInput(f"landmark CSV missing columns: {sorted(missing)}")
        for r in reader:
            j = r["joint"]
            if j not in rows:
                rows[j] = {}
                joints.append(j)
            rows[j][int(r["frame"])] = (float(r["x_px"]), float(r["y_px"]), float(r["visibility"]))
    if not joints:
        raise InvalidInput("landmark CSV has no rows")
    frames = sorted(rows[joints[0]])
    arr = np.zeros((len(joints), len(frames), 3))
    for i, j in enumerate(joints):
        if sorted(rows[j]) != frames:
            raise InvalidInput(f"joint {j!r} does not cover the same frames")
        arr[i] = [rows[j][f] for f in frames]
    return LandmarkTrack(float(meta["frame_rate"]), arr, float(meta["interpupillary_px"]),
                         names=tuple(joints))


def write_landmark_csv(track: LandmarkTrack, csv_path):
    import csv

    names = track.names or tuple(f"j{i}" for i in range(track.joints.shape[0]))
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["frame", "joint", "x_px", "y_px", "visibility"])
        for f in range(track.n_frames):
            for i, name in enumerate(names):
                x, y, v = track.joints[i, f]
                w.writerow([f, name, repr(float(x)), repr(float(y)), repr(float(v))])
    return {"frame_rate": track.frame_rate, "interpupillary_px": track.interpupillary_px}


def write_profile_csv(profile: SpeedProfile, path):
    cols = ",".join(f"part_{m}" for m in range(profile.n_parts))
    data = np.column_stack([profile.times, profile.channels.T])
    np.savetxt(path, data, delimiter=",", header="t_s," + cols, comments="", fmt="%.10g")


def read_profile_csv(path) -> SpeedProfile:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    t = data[:, 0]
    if t.size < 2:
        raise InvalidInput("profile CSV needs at least two rows")
    rate = 1.0 / float(np.median(np.diff(t)))
    return SpeedProfile(rate, data[:, 1:].T)
