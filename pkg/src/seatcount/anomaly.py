"""Reconstruction-error filter for non-fidget motion.

A one-hidden-layer autoencoder is fitted to synthetic crowd bandwidth
windows. At inference, windows it reconstructs poorly relative to its mean
training error are marked, and every sample under a marked window is
excluded from counting.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .carson import BandwidthSeries
from .errors import InvalidInput, TrainingDiverged

log = logging.getLogger(__name__)

NYQUIST_HZ = 100.0


@dataclass(frozen=True)
class AnomalyConfig:
    window_s: float = 2.0
    threshold_ratio: float = 1.5
    l2_weight: float = 1e-4
    sparsity_weight: float = 1e-3
    sparsity_target: float = 0.05
    epochs: int = 50
    learning_rate: float = 0.05
    batch_size: int = 128
    hidden_dim: int = 32
    input_scale_hz: float = NYQUIST_HZ
    seed: int = 0

    def __post_init__(self):
        if self.window_s <= 0:
            raise InvalidInput("window_s must be positive")
        if self.threshold_ratio <= 1:
            raise InvalidInput("threshold_ratio must exceed 1")
        if self.epochs < 1 or self.batch_size < 1 or self.hidden_dim < 1:
            raise InvalidInput("epochs, batch_size and hidden_dim must be >= 1")
        if not 0 < self.sparsity_target < 1:
            raise InvalidInput("sparsity_target must lie in (0, 1)")
        if self.l2_weight < 0 or self.sparsity_weight < 0 or self.learning_rate <= 0:
            raise InvalidInput("weights must be >= 0 and learning_rate > 0")

    def window_len(self, sample_period_s=0.01):
        return int(round(self.window_s / sample_period_s))


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass
class AutoencoderModel:
    w_enc: np.ndarray  # (hidden, input)
    b_enc: np.ndarray
    w_dec: np.ndarray  # (input, hidden)
    b_dec: np.ndarray
    input_scale: float = NYQUIST_HZ
    activation: str = "sigmoid"
    train_error_mean: float = float("nan")
    loss_history: List[float] = field(default_factory=list)

    @property
    def input_dim(self):
        return self.w_enc.shape[1]

    @property
    def hidden_dim(self):
        return self.w_enc.shape[0]

    def encode(self, x):
        return _sigmoid(x @ self.w_enc.T + self.b_enc)

    def reconstruct(self, windows_hz):
        """Reconstructions of raw (Hz) windows, returned in normalised units."""
        x = np.atleast_2d(windows_hz) / self.input_scale
        return self.encode(x) @ self.w_dec.T + self.b_dec

    def errors(self, windows_hz, chunk=8192):
        """Mean squared reconstruction error per window, in normalised units."""
        w = np.atleast_2d(np.asarray(windows_hz, dtype=float))
        if w.shape[1] != self.input_dim:
            raise InvalidInput(f"windows have {w.shape[1]} samples, model expects {self.input_dim}")
        out = np.empty(w.shape[0])
        for a in range(0, w.shape[0], chunk):
            x = w[a:a + chunk] / self.input_scale
            r = self.encode(x) @ self.w_dec.T + self.b_dec
            out[a:a + chunk] = np.mean((r - x) ** 2, axis=1)
        return out

    def to_dict(self):
        return {
            "input_dim": self.input_dim,
            "hidden_dim": self.hidden_dim,
            "activation": self.activation,
            "w_enc": self.w_enc.ravel().tolist(),
            "b_enc": self.b_enc.tolist(),
            "w_dec": self.w_dec.ravel().tolist(),
            "b_dec": self.b_dec.tolist(),
            "input_scale": self.input_scale,
            "train_error_mean": self.train_error_mean,
        }

    @classmethod
    def from_dict(cls, d):
        n_in, n_h = int(d["input_dim"]), int(d["hidden_dim"])
        if d.get("activation", "sigmoid") != "sigmoid":
            raise InvalidInput(f"unsupported activation {d['activation']!r}")
        return cls(np.asarray(d["w_enc"], dtype=float).reshape(n_h, n_in),
                   np.asarray(d["b_enc"], dtype=float),
                   np.asarray(d["w_dec"], dtype=float).reshape(n_in, n_h),
                   np.asarray(d["b_dec"], dtype=float),
                   float(d["input_scale"]), "sigmoid", float(d["train_error_mean"]))

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class AnomalyMask:
    flags: np.ndarray
    sample_period_s: float = 0.01
    t0_s: float = 0.0
    window_errors: Optional[np.ndarray] = None

    def __len__(self):
        return self.flags.size

    @property
    def rate(self):
        return float(self.flags.mean()) if self.flags.size else 0.0

    @property
    def times(self):
        return self.t0_s + np.arange(self.flags.size) * self.sample_period_s

    def write_csv(self, path):
        np.savetxt(path, np.column_stack([self.times, self.flags.astype(int)]), delimiter=",",
                   header="t_s,anomalous", comments="", fmt=["%.10g", "%d"])

    @classmethod
    def read_csv(cls, path):
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        period = float(np.median(np.diff(data[:, 0]))) if data.shape[0] > 1 else 0.01
        return cls(data[:, 1].astype(bool), round(period, 12), float(data[0, 0]))


def _values(seg):
    return seg.values if isinstance(seg, BandwidthSeries) else np.asarray(seg, dtype=float)


def build_training_set(segment_pool: Sequence, n_range=(1, 20), count: int = 60_000,
                       seed=0, window_len: int = 200) -> np.ndarray:
    """Crowd-like windows: max over N circularly shifted single-person segments, cropped.

    Cropping each shifted segment at a common offset is the same as shifting
    independently by a uniform amount, so each segment is read at its own
    uniform circular offset.
    """
    usable = []
    for k, seg in enumerate(segment_pool):
        v = _values(seg)
        if v.size < window_len:
            log.warning("segment %d has %d samples, shorter than the %d-sample window; skipped",
                        k, v.size, window_len)
            continue
        usable.append(v)
    if not usable:
        raise InvalidInput("no pool segment is at least one window long")
    lo, hi = n_range
    if not 1 <= lo <= hi:
        raise InvalidInput("n_range must satisfy 1 <= lo <= hi")
    rng = np.random.default_rng(seed)
    lengths = np.array([v.size for v in usable])
    offs = np.arange(window_len)
    out = np.zeros((count, window_len))
    ns = rng.integers(lo, hi + 1, size=count)
    for i in range(count):
        picks = rng.integers(len(usable), size=ns[i])
        starts = rng.integers(0, lengths[picks])
        w = out[i]
        for p, s in zip(picks, starts):
            np.maximum(w, usable[p][(s + offs) % lengths[p]], out=w)
    return out


def _loss_and_grads(params, x, cfg: AnomalyConfig):
    w1, b1, w2, b2 = params
    n = x.shape[0]
    h = _sigmoid(x @ w1.T + b1)
    r = h @ w2.T + b2
    diff = r - x
    recon = 0.5 * np.sum(diff ** 2) / n
    rho = cfg.sparsity_target
    rho_hat = np.clip(h.mean(axis=0), 1e-8, 1 - 1e-8)
    kl = np.sum(rho * np.log(rho / rho_hat) + (1 - rho) * np.log((1 - rho) / (1 - rho_hat)))
    l2 = 0.5 * cfg.l2_weight * (np.sum(w1 ** 2) + np.sum(w2 ** 2))
    loss = recon + l2 + cfg.sparsity_weight * kl

    d_r = diff / n
    g_w2 = d_r.T @ h + cfg.l2_weight * w2
    g_b2 = d_r.sum(axis=0)
    d_h = d_r @ w2 + cfg.sparsity_weight * (-rho / rho_hat + (1 - rho) / (1 - rho_hat)) / n
    d_z = d_h * h * (1 - h)
    g_w1 = d_z.T @ x + cfg.l2_weight * w1
    g_b1 = d_z.sum(axis=0)
    return loss, (g_w1, g_b1, g_w2, g_b2)


def init_params(input_dim, hidden_dim, rng):
    lim = np.sqrt(6.0 / (input_dim + hidden_dim))
    return [rng.uniform(-lim, lim, (hidden_dim, input_dim)), np.zeros(hidden_dim),
            rng.uniform(-lim, lim, (input_dim, hidden_dim)), np.zeros(input_dim)]


def train_autoencoder(windows, config: AnomalyConfig = AnomalyConfig()) -> AutoencoderModel:
    """Mini-batch gradient descent on reconstruction + L2 + sparsity (KL) penalties."""
    w = np.atleast_2d(np.asarray(windows, dtype=float))
    if w.shape[0] < 1 or w.shape[1] < 1:
        raise InvalidInput("need at least one non-empty window")
    x = w / config.input_scale_hz
    rng = np.random.default_rng(config.seed)
    params = init_params(x.shape[1], config.hidden_dim, rng)
    history = []
    lr = config.learning_rate
    for epoch in range(config.epochs):
        order = rng.permutation(x.shape[0])
        total, seen = 0.0, 0
        for b, a in enumerate(range(0, x.shape[0], config.batch_size)):
            batch = x[order[a:a + config.batch_size]]
            # overflow is caught below as divergence
            with np.errstate(over="ignore", invalid="ignore"):
                loss, grads = _loss_and_grads(params, batch, config)
            if not np.isfinite(loss):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}, batch {b} (lr={lr})",
                    epoch=epoch, batch=b, last_loss=history[-1] if history else None)
            for p, g in zip(params, grads):
                p -= lr * g
            total += loss * batch.shape[0]
            seen += batch.shape[0]
        history.append(total / seen)
    model = AutoencoderModel(params[0], params[1], params[2], params[3],
                             config.input_scale_hz, "sigmoid", loss_history=history)
    model.train_error_mean = float(np.mean(model.errors(w)))
    if not np.isfinite(model.train_error_mean):
        raise TrainingDiverged("non-finite training error", epoch=config.epochs)
    return model


def window_errors(bw: BandwidthSeries, model: AutoencoderModel) -> np.ndarray:
    v = bw.values
    if v.size < model.input_dim:
        raise InvalidInput(f"series has {v.size} samples, fewer than one {model.input_dim}-sample window")
    return model.errors(sliding_window_view(v, model.input_dim))


def flag_anomalies(bw: BandwidthSeries, model: AutoencoderModel,
                   config: AnomalyConfig = AnomalyConfig(), errors=None) -> AnomalyMask:
    """Mark every sample covered by at least one window whose error exceeds the threshold."""
    err = window_errors(bw, model) if errors is None else np.asarray(errors)
    win = model.input_dim
    bad = err > config.threshold_ratio * model.train_error_mean
    n = bw.values.size
    csum = np.concatenate([[0], np.cumsum(bad)])
    i = np.arange(n)
    hi = np.minimum(i, bad.size - 1) + 1
    lo = np.maximum(i - win + 1, 0)
    covered = csum[hi] - csum[np.minimum(lo, hi)] > 0
    return AnomalyMask(covered, bw.sample_period_s, bw.t0_s, err)
