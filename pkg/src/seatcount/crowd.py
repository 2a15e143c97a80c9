"""Bandwidth histograms and the max-of-N crowd distributions built from them."""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Dict

import numpy as np

from .errors import InvalidInput

FLOOR = 1e-6
# 1 Hz bins up to the 100 Hz Nyquist limit of a 200 Hz packet rate
DEFAULT_EDGES = np.arange(0.0, 101.0, 1.0)


def floor_smooth(pdf, floor=FLOOR):
    """Mix in a uniform floor so every bin holds at least ``floor`` and the total stays 1."""
    pdf = np.asarray(pdf, dtype=float)
    k = pdf.size
    if floor * k >= 1:
        raise InvalidInput(f"floor {floor} too large for {k} bins")
    total = pdf.sum()
    if total <= 0:
        raise InvalidInput("pdf has no mass")
    return (1.0 - k * floor) * (pdf / total) + floor


@dataclass(frozen=True)
class BandwidthHistogram:
    bin_edges: np.ndarray
    pdf: np.ndarray

    def __post_init__(self):
        edges = np.asarray(self.bin_edges, dtype=float)
        pdf = np.asarray(self.pdf, dtype=float)
        if edges.ndim != 1 or edges.size < 2 or np.any(np.diff(edges) <= 0):
            raise InvalidInput("bin_edges must be strictly increasing with >= 2 entries")
        if pdf.shape != (edges.size - 1,):
            raise InvalidInput("pdf needs one entry per bin")
        if np.any(pdf < 0) or abs(pdf.sum() - 1.0) > 1e-9:
            raise InvalidInput("pdf must be non-negative and sum to 1")
        object.__setattr__(self, "bin_edges", edges)
        object.__setattr__(self, "pdf", pdf)

    @property
    def cdf(self):
        return np.cumsum(self.pdf)

    @property
    def centers(self):
        return 0.5 * (self.bin_edges[1:] + self.bin_edges[:-1])

    @property
    def f_max(self):
        return float(self.bin_edges[-1])

    def mean(self):
        return float(np.dot(self.centers, self.pdf))

    def same_grid(self, other):
        return self.bin_edges.shape == other.bin_edges.shape and np.allclose(
            self.bin_edges, other.bin_edges)

    def to_dict(self):
        return {"bin_edges": self.bin_edges.tolist(), "pdf": self.pdf.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["bin_edges"]), np.asarray(d["pdf"]))


def bin_index(samples, bin_edges):
    """Bin of each sample; values at or beyond the last edge land in the last bin."""
    samples = np.asarray(samples, dtype=float)
    edges = np.asarray(bin_edges, dtype=float)
    if np.any(samples < edges[0]) or not np.all(np.isfinite(samples)):
        raise InvalidInput("bandwidth samples must be finite and >= the first bin edge")
    idx = np.searchsorted(edges, samples, side="right") - 1
    return np.minimum(idx, edges.size - 2)


def estimate_pdf(samples, bin_edges=DEFAULT_EDGES, floor=FLOOR) -> BandwidthHistogram:
    samples = np.asarray(samples, dtype=float).ravel()
    if samples.size == 0:
        raise InvalidInput("no samples")
    edges = np.asarray(bin_edges, dtype=float)
    counts = np.bincount(bin_index(samples, edges), minlength=edges.size - 1)
    return BandwidthHistogram(edges, floor_smooth(counts, floor))


def crowd_cdf(base: BandwidthHistogram, n: int) -> np.ndarray:
    """CDF of the maximum of ``n`` independent draws from ``base``."""
    if n < 1:
        raise InvalidInput("crowd size must be >= 1")
    return np.clip(base.cdf, 0.0, 1.0) ** n


def crowd_pdf(base: BandwidthHistogram, n: int, floor=FLOOR) -> BandwidthHistogram:
    """Bin masses of the max-of-``n`` distribution, from differences of its CDF."""
    if n < 1:
        raise InvalidInput("crowd size must be >= 1")
    if n == 1:
        return base
    cdf_n = crowd_cdf(base, n)
    cdf_n[-1] = 1.0
    pdf = np.diff(cdf_n, prepend=0.0)
    pdf = np.clip(pdf, 0.0, None)
    if floor > 0:
        pdf = floor_smooth(pdf, floor)
    else:
        pdf = pdf / pdf.sum()
    return BandwidthHistogram(base.bin_edges, pdf)


@dataclass(frozen=True)
class CrowdPriorSet:
    priors: Dict[int, BandwidthHistogram]

    def __post_init__(self):
        if not self.priors:
            raise InvalidInput("empty prior set")
        keys = sorted(self.priors)
        if keys != list(range(1, len(keys) + 1)):
            raise InvalidInput("priors must cover N = 1..n_max")

    @property
    def n_max(self):
        return len(self.priors)

    @property
    def bin_edges(self):
        return self.priors[1].bin_edges

    def matrix(self):
        """Prior pdfs stacked as rows, N = 1 first."""
        return np.vstack([self.priors[n].pdf for n in range(1, self.n_max + 1)])

    def to_dict(self):
        return {str(n): h.to_dict() for n, h in self.priors.items()}

    @classmethod
    def from_dict(cls, d):
        return cls({int(k): BandwidthHistogram.from_dict(v) for k, v in d.items()})

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def build_prior_set(base: BandwidthHistogram, n_max: int, floor=FLOOR) -> CrowdPriorSet:
    if n_max < 1:
        raise InvalidInput("n_max must be >= 1")
    return CrowdPriorSet({n: crowd_pdf(base, n, floor) for n in range(1, n_max + 1)})
