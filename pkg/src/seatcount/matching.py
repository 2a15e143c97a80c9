"""Distribution matching of observed bandwidth against crowd priors, plus scoring."""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .carson import BandwidthSeries
from .crowd import FLOOR, BandwidthHistogram, CrowdPriorSet, bin_index, floor_smooth
from .errors import InvalidInput


class DistanceMetric(str, enum.Enum):
    KL = "kl"
    JS = "js"
    TV = "tv"
    BHATTACHARYYA = "bhat"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        v = str(value).strip().lower()
        aliases = {"bhattacharyya": "bhat", "kullback-leibler": "kl", "jensen-shannon": "js"}
        try:
            return cls(aliases.get(v, v))
        except ValueError:
            raise InvalidInput(f"unknown metric {value!r}; choose kl, js, tv or bhat") from None


def _kl_rows(p, q):
    # sum p ln(p/q) with 0 ln 0 = 0
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(p > 0, p * (np.log(p) - np.log(q)), 0.0)
    return t.sum(axis=-1)


def distances(p, Q, metric) -> np.ndarray:
    """Distance from pdf ``p`` to each row of ``Q``; ``p`` is always the first argument."""
    metric = DistanceMetric.parse(metric)
    p = np.asarray(p, dtype=float)
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    if metric is DistanceMetric.KL:
        d = _kl_rows(p, Q)
    elif metric is DistanceMetric.JS:
        m = 0.5 * (p + Q)
        d = 0.5 * _kl_rows(p, m) + 0.5 * _kl_rows(Q, m)
    elif metric is DistanceMetric.TV:
        d = 0.5 * np.abs(p - Q).sum(axis=-1)
    else:
        bc = np.sqrt(p * Q).sum(axis=-1)
        d = -np.log(np.minimum(bc, 1.0))
    # rounding can leave tiny negatives for identical inputs
    return np.maximum(d, 0.0)


def distance(p: BandwidthHistogram, q: BandwidthHistogram, metric="kl") -> float:
    if not p.same_grid(q):
        raise InvalidInput("histograms use different bin grids")
    return float(distances(p.pdf, q.pdf, metric)[0])


def estimate_count(observed: BandwidthHistogram, priors: CrowdPriorSet, metric="kl"):
    """Crowd size whose prior is closest to ``observed``; ties go to the smaller size.

    Returns ``(n_hat, {N: distance})``.
    """
    if not priors.priors:
        raise InvalidInput("empty prior set")
    if not observed.same_grid(priors.priors[1]):
        raise InvalidInput("observed histogram and priors use different bin grids")
    d = distances(observed.pdf, priors.matrix(), metric)
    n_hat = int(np.argmin(d)) + 1  # argmin returns the first minimum
    return n_hat, {n: float(d[n - 1]) for n in range(1, priors.n_max + 1)}


@dataclass
class EstimateTrace:
    times: np.ndarray
    estimates: np.ndarray
    distances: np.ndarray  # (n_updates, n_max)
    status: str = "ok"
    duration_s: float = 0.0

    @property
    def final_estimate(self) -> Optional[int]:
        return int(self.estimates[-1]) if self.estimates.size else None

    @property
    def n_max(self):
        return self.distances.shape[1] if self.distances.ndim == 2 else 0

    def __len__(self):
        return self.estimates.size

    def write_csv(self, path):
        n_max = self.n_max
        header = "t_s,n_hat," + ",".join(f"dist_{n}" for n in range(1, n_max + 1))
        data = np.column_stack([self.times, self.estimates, self.distances]) if len(self) else \
            np.zeros((0, 2 + n_max))
        np.savetxt(path, data, delimiter=",", header=header, comments="",
                   fmt=["%.10g", "%d"] + ["%.10g"] * n_max)

    @classmethod
    def read_csv(cls, path):
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        if data.size == 0:
            return cls(np.zeros(0), np.zeros(0, dtype=int), np.zeros((0, 0)), status="no-estimate")
        return cls(data[:, 0], data[:, 1].astype(int), data[:, 2:])


def _update_times(duration, update_every_s):
    k = np.arange(1, int(np.floor(duration / update_every_s + 1e-9)) + 1)
    times = k * update_every_s
    if times.size == 0 or times[-1] < duration - 1e-9:
        times = np.append(times, duration)
    return times


def streaming_estimate(bw: BandwidthSeries, priors: CrowdPriorSet, metric="kl",
                       mask=None, update_every_s: float = 1.0, floor=FLOOR) -> EstimateTrace:
    """Running estimate over the unmasked samples in a growing window ``[0, t]``.

    Updates fall every ``update_every_s`` seconds after the start, with one
    more at the end of the series if that is not already an update time.
    Update times before any unmasked sample exists are skipped.
    """
    if len(bw) == 0:
        raise InvalidInput("empty bandwidth series")
    if update_every_s <= 0:
        raise InvalidInput("update_every_s must be positive")
    edges = priors.bin_edges
    keep = np.ones(len(bw), dtype=bool)
    if mask is not None:
        m = mask if isinstance(mask, np.ndarray) else getattr(mask, "flags", mask)
        m = np.asarray(m, dtype=bool)
        if m.size != len(bw):
            raise InvalidInput("mask length differs from the series")
        keep = ~m
    idx = bin_index(bw.values, edges)
    rel = np.arange(len(bw)) * bw.sample_period_s
    times = _update_times(bw.duration_s, update_every_s)
    Q = priors.matrix()
    counts = np.zeros(edges.size - 1)
    out_t, out_n, out_d = [], [], []
    start = 0
    for t in times:
        stop = int(np.searchsorted(rel, t + 1e-9, side="right"))
        sel = idx[start:stop][keep[start:stop]]
        counts += np.bincount(sel, minlength=counts.size)
        start = stop
        if counts.sum() == 0:
            continue
        d = distances(floor_smooth(counts, floor), Q, metric)
        out_t.append(t)
        out_n.append(int(np.argmin(d)) + 1)
        out_d.append(d)
    if not out_t:
        return EstimateTrace(np.zeros(0), np.zeros(0, dtype=int), np.zeros((0, priors.n_max)),
                             status="no-estimate", duration_s=bw.duration_s)
    return EstimateTrace(np.array(out_t), np.array(out_n, dtype=int), np.vstack(out_d),
                         duration_s=bw.duration_s)


def convergence_time(trace: EstimateTrace) -> float:
    """Latest update time whose estimate is more than 1 away from the final one (0 if none).

    The final update itself is excluded, matching a half-open observation
    interval ``[0, T)``.
    """
    if len(trace) == 0:
        raise InvalidInput("empty trace")
    final = trace.estimates[-1]
    times = np.asarray(trace.times)
    dev = np.abs(trace.estimates - final) > 1
    dev[-1] = False
    if not dev.any():
        return 0.0
    return float(times[dev].max())


def score(true_counts, estimates):
    """Mean absolute error and normalised mean square error of count estimates."""
    t = np.asarray(true_counts, dtype=float)
    e = np.asarray(estimates, dtype=float)
    if t.shape != e.shape or t.size == 0:
        raise InvalidInput("need equal-length, non-empty count lists")
    if np.any(t < 1):
        raise InvalidInput("true counts must be >= 1")
    err = np.abs(e - t)
    return float(err.mean()), float(np.mean(err ** 2 / t ** 2))
