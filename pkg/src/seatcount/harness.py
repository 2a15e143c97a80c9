"""Desk-scale evaluation: segment pools, synthetic crowds, cross-validation, end-to-end runs.

Every random choice is drawn from ``np.random.SeedSequence([root, stage, *keys])``
so that each stage (population, fold split, crowd draws, walker injection,
autoencoder training, RF noise) has its own stream and toggling one stage
never shifts the draws of another.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from .anomaly import AnomalyConfig, build_training_set, flag_anomalies, train_autoencoder
from .carson import BandwidthSeries, CarsonConfig, carson_bandwidth, max_combine, write_bandwidth_csv
from .crowd import DEFAULT_EDGES, FLOOR, build_prior_set, estimate_pdf
from .errors import InvalidInput, StageError
from .matching import DistanceMetric, convergence_time, score, streaming_estimate
from .motion import FidgetProcessParams, SpeedProfile, synth_fidget_profile
from .rfsim import extract_bandwidth, pca_average_spectrogram, synth_streams

log = logging.getLogger(__name__)

# stage codes for the seed split
POPULATION, FOLDS, CROWD, WALKERS, ANOMALY, RF, E2E = range(1, 8)


def stage_rng(root: int, stage: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(root), stage, *map(int, keys)]))


def _stage_seed(root, stage, *keys) -> int:
    return int(stage_rng(root, stage, *keys).integers(2**31))


@dataclass(frozen=True)
class PopulationConfig:
    """Synthetic seated individuals. ``spread`` scales per-source jitter of the fidget rates."""

    n_sources: int = 32
    segments_per_source: int = 6
    segment_duration_s: float = 180.0
    sample_rate: float = 100.0
    silent_mean_s: float = 15.0
    fidget_mean_s: float = 3.0
    peak_speed_range: Tuple[float, float] = (0.05, 0.35)
    n_body_parts: int = 3
    spread: float = 0.0

    def __post_init__(self):
        if self.n_sources < 1 or self.segments_per_source < 1:
            raise InvalidInput("need at least one source and one segment per source")
        if self.segment_duration_s <= 0:
            raise InvalidInput("segment_duration_s must be positive")
        if not 0 <= self.spread < 1:
            raise InvalidInput("spread must lie in [0, 1)")
        object.__setattr__(self, "peak_speed_range", tuple(self.peak_speed_range))

    def source_params(self, source: int, root_seed: int) -> FidgetProcessParams:
        rng = stage_rng(root_seed, POPULATION, source)
        jit = 1 + self.spread * rng.uniform(-1, 1, size=3)
        lo, hi = self.peak_speed_range
        return FidgetProcessParams(silent_mean_s=self.silent_mean_s * jit[0],
                                   fidget_mean_s=self.fidget_mean_s * jit[1],
                                   peak_speed_range=(lo, max(lo, hi * jit[2])),
                                   n_body_parts=self.n_body_parts,
                                   seed=int(rng.integers(2**31)))


@dataclass
class SegmentPool:
    segments: List[Tuple[str, BandwidthSeries]]
    segment_duration_s: float = 180.0

    def __post_init__(self):
        if self.segments:
            n0, p0 = len(self.segments[0][1]), self.segments[0][1].sample_period_s
            for sid, s in self.segments:
                if len(s) != n0 or not math.isclose(s.sample_period_s, p0):
                    raise InvalidInput(f"segment from {sid!r} differs in length or sample period")

    def __len__(self):
        return len(self.segments)

    @property
    def sources(self) -> List[str]:
        return sorted({sid for sid, _ in self.segments})

    def subset(self, source_ids) -> "SegmentPool":
        keep = set(source_ids)
        return SegmentPool([(sid, s) for sid, s in self.segments if sid in keep],
                           self.segment_duration_s)

    def series(self) -> List[BandwidthSeries]:
        return [s for _, s in self.segments]


def split_segments(source_id: str, bw: BandwidthSeries, segment_duration_s: float):
    """Non-overlapping segments; a short tail is dropped."""
    n = int(round(segment_duration_s / bw.sample_period_s))
    return [(source_id, bw.slice(a, a + n)) for a in range(0, len(bw) - n + 1, n)]


def _source_segments(args):
    k, pop, carson_cfg, seed = args
    prm = pop.source_params(k, seed)
    prof = synth_fidget_profile(prm, pop.segment_duration_s * pop.segments_per_source,
                                pop.sample_rate)
    return split_segments(f"synth-{k:03d}", carson_bandwidth(prof, carson_cfg),
                          pop.segment_duration_s)


def build_segment_pool(pop: PopulationConfig = PopulationConfig(),
                       carson_cfg: CarsonConfig = CarsonConfig(), seed: int = 0,
                       workers: int = 1) -> SegmentPool:
    """Single-person bandwidth segments for ``pop.n_sources`` synthetic individuals."""
    jobs = [(k, pop, carson_cfg, seed) for k in range(pop.n_sources)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            parts = list(ex.map(_source_segments, jobs))
    else:
        parts = [_source_segments(j) for j in jobs]
    return SegmentPool([s for p in parts for s in p], pop.segment_duration_s)


def pool_from_profiles(profiles: Dict[str, SpeedProfile], carson_cfg: CarsonConfig = CarsonConfig(),
                       segment_duration_s: float = 180.0) -> SegmentPool:
    """Landmark path: one source per ingested video."""
    segs = []
    for sid, prof in profiles.items():
        got = split_segments(sid, carson_bandwidth(prof, carson_cfg), segment_duration_s)
        if not got:
            log.warning("source %s is shorter than one %.0f s segment; skipped", sid, segment_duration_s)
        segs.extend(got)
    return SegmentPool(segs, segment_duration_s)


def synth_crowd_sample(pool: SegmentPool, n: int, seed=0) -> BandwidthSeries:
    """Max over ``n`` pool segments drawn uniformly.

    Distinct segments are drawn while the pool has enough of them; two picks
    may still come from the same source.
    """
    if len(pool) == 0:
        raise InvalidInput("empty segment pool")
    if n < 1:
        raise InvalidInput("n must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    pick = rng.choice(len(pool), size=n, replace=n > len(pool))
    segs = [pool.segments[i][1] for i in pick]
    if n == 1:
        return segs[0]
    return max_combine(segs)


@dataclass(frozen=True)
class WalkerConfig:
    """Walking-passer-by bursts: a ramped plateau well above fidget bandwidths."""

    coverage: Tuple[float, float] = (0.10, 0.20)
    plateau_fraction: Tuple[float, float] = (0.6, 0.9)
    duration_s: Tuple[float, float] = (5.0, 15.0)
    ramp_s: Tuple[float, float] = (1.0, 2.0)
    nyquist_hz: float = 100.0


def inject_walkers(bw: BandwidthSeries, config: WalkerConfig = WalkerConfig(), seed=0):
    """Max-combine non-overlapping walker bursts into ``bw``.

    Returns the new series and a boolean mask of the samples inside bursts
    (ramps included). Bursts are added until the drawn coverage is reached.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    n = len(bw)
    dt = bw.sample_period_s
    target = rng.uniform(*config.coverage) * n
    out = bw.values.copy()
    mask = np.zeros(n, dtype=bool)
    tries = 0
    while mask.sum() < target and tries < 1000:
        tries += 1
        plateau = int(round(rng.uniform(*config.duration_s) / dt))
        ramp = int(round(rng.uniform(*config.ramp_s) / dt))
        # the last burst is trimmed so coverage lands on the target
        length = min(plateau + 2 * ramp, int(math.ceil(target - mask.sum())), n)
        ramp = min(ramp, length // 3)
        a = int(rng.integers(0, n - length + 1))
        # keep a gap so bursts stay separate events
        lo, hi = max(a - ramp - 1, 0), min(a + length + ramp + 1, n)
        if mask[lo:hi].any():
            continue
        level = rng.uniform(*config.plateau_fraction) * config.nyquist_hz
        k = np.arange(length)
        shape = np.minimum(1.0, np.minimum(k + 1, length - k) / max(ramp, 1))
        np.maximum(out[a:a + length], level * shape, out=out[a:a + length])
        mask[a:a + length] = True
    return BandwidthSeries(out, dt, bw.t0_s), mask


@dataclass
class ExperimentReport:
    records: List[dict]
    config: dict
    seed: int
    seconds_processed: float = 0.0
    wall_time_s: float = 0.0

    def _scored(self, records=None):
        recs = [r for r in (self.records if records is None else records) if r["n_hat"] is not None]
        return [r["n_true"] for r in recs], [r["n_hat"] for r in recs]

    def aggregates(self) -> dict:
        t, e = self._scored()
        mae, nmse = score(t, e) if t else (float("nan"), float("nan"))
        conv = [r["convergence_s"] for r in self.records if r["convergence_s"] is not None]
        per_n = {}
        for n in sorted({r["n_true"] for r in self.records}):
            tn, en = self._scored([r for r in self.records if r["n_true"] == n])
            per_n[n] = score(tn, en)[0] if tn else float("nan")
        return {
            "mae": mae, "nmse": nmse,
            "mean_convergence_s": float(np.mean(conv)) if conv else float("nan"),
            "median_convergence_s": float(np.median(conv)) if conv else float("nan"),
            "per_n_mae": per_n,
            "n_runs": len(self.records),
            "n_no_estimate": sum(r["n_hat"] is None for r in self.records),
            "ms_per_second_of_data": (1000 * self.wall_time_s / self.seconds_processed
                                      if self.seconds_processed else float("nan")),
        }

    def subset(self, n_values) -> "ExperimentReport":
        keep = set(n_values)
        return ExperimentReport([r for r in self.records if r["n_true"] in keep], self.config,
                                self.seed, self.seconds_processed, self.wall_time_s)

    def to_dict(self):
        agg = _nan_to_none(self.aggregates())
        agg["per_n_mae"] = {str(k): v for k, v in agg["per_n_mae"].items()}
        return {"seed": self.seed, "config": self.config, "aggregates": agg,
                "seconds_processed": self.seconds_processed, "wall_time_s": self.wall_time_s,
                "records": self.records}

    @classmethod
    def from_dict(cls, d):
        return cls(list(d["records"]), d["config"], int(d["seed"]),
                   float(d.get("seconds_processed", 0)), float(d.get("wall_time_s", 0)))

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _nan_to_none(obj):
    if isinstance(obj, dict):
        return {k: _nan_to_none(v) for k, v in obj.items()}
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def _jsonable(obj):
    if hasattr(obj, "__dataclass_fields__"):
        return {f.name: _jsonable(getattr(obj, f.name)) for f in fields(obj)}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _run_record(bw, priors, metric, n, mask=None, **extra):
    tr = streaming_estimate(bw, priors, metric, mask=mask)
    ok = tr.status == "ok"
    rec = {"n_true": int(n), "n_hat": tr.final_estimate if ok else None,
           "metric": DistanceMetric.parse(metric).value,
           "convergence_s": convergence_time(tr) if ok else None,
           "flag_rate": float(np.mean(mask)) if mask is not None else 0.0,
           "status": tr.status}
    rec.update(extra)
    return rec, tr


def train_filter(pool: SegmentPool, config: AnomalyConfig, n_range=(1, 20), count=60_000, seed=0):
    win = config.window_len(pool.segments[0][1].sample_period_s)
    windows = build_training_set(pool.series(), n_range, count, seed, win)
    return train_autoencoder(windows, config)


def fold_splits(sources, k_folds: int, repeat: int, seed: int):
    """(prior_sources, test_sources) pairs for one repeat; folds are near-equal and disjoint."""
    sources = sorted(sources)
    order = [str(s) for s in stage_rng(seed, FOLDS, repeat).permutation(sources)]
    if k_folds == 1:
        return [(order, order)]
    folds = [list(f) for f in np.array_split(order, k_folds)]
    return [([s for s in order if s not in set(f)], f) for f in folds]


def cross_validate(pool: SegmentPool, k_folds: int = 3, repeats: int = 5, n_range=(1, 20),
                   metric="kl", seed: int = 0, samples_per_n: int = 50,
                   prior_n_max: Optional[int] = None, floor: float = FLOOR,
                   anomaly: Optional[AnomalyConfig] = None, anomaly_train_count: int = 60_000,
                   walkers: Optional[WalkerConfig] = None) -> ExperimentReport:
    """Held-out-source evaluation.

    Per repeat the sources are shuffled into ``k_folds`` near-equal folds. Each
    fold in turn supplies the test crowds while the rest build the priors (and
    train the filter, when one is configured). ``samples_per_n`` crowds per N
    are spread over the folds of each repeat.
    """
    sources = pool.sources
    if len(sources) < k_folds:
        raise InvalidInput(f"{len(sources)} sources cannot fill {k_folds} folds")
    if k_folds < 1 or (k_folds == 1 and len(sources) > 1):
        raise InvalidInput("k_folds must be >= 2 unless the pool has a single source")
    lo, hi = n_range
    if not 1 <= lo <= hi:
        raise InvalidInput("n_range must satisfy 1 <= lo <= hi")
    n_max = prior_n_max or hi
    if n_max < hi:
        raise InvalidInput("prior_n_max must cover n_range")
    metric = DistanceMetric.parse(metric)
    per_fold = math.ceil(samples_per_n / k_folds)
    records = []
    seconds = 0.0
    t_start = time.perf_counter()
    for rep in range(repeats):
        for f, (prior_src, test_src) in enumerate(fold_splits(sources, k_folds, rep, seed)):
            prior_pool, test_pool = pool.subset(prior_src), pool.subset(test_src)
            base = estimate_pdf(np.concatenate([s.values for s in prior_pool.series()]),
                                DEFAULT_EDGES, floor)
            priors = build_prior_set(base, n_max, floor)
            model = None
            if anomaly is not None:
                model = train_filter(prior_pool, anomaly, (1, hi), anomaly_train_count,
                                     _stage_seed(seed, ANOMALY, rep, f))
            for n in range(lo, hi + 1):
                crowd_rng = stage_rng(seed, CROWD, rep, f, n)
                walk_rng = stage_rng(seed, WALKERS, rep, f, n)
                for i in range(per_fold):
                    bw = synth_crowd_sample(test_pool, n, crowd_rng)
                    burst = None
                    if walkers is not None:
                        bw, burst = inject_walkers(bw, walkers, walk_rng)
                    mask = flag_anomalies(bw, model, anomaly).flags if model is not None else None
                    rec, _ = _run_record(bw, priors, metric, n, mask, repeat=rep, fold=f)
                    if burst is not None:
                        rec["burst_fraction"] = float(burst.mean())
                        if mask is not None:
                            rec["burst_recall"] = float(mask[burst].mean()) if burst.any() else None
                    records.append(rec)
                    seconds += bw.duration_s
    cfg = {"k_folds": k_folds, "repeats": repeats, "n_range": [lo, hi], "metric": metric.value,
           "samples_per_n": samples_per_n, "prior_n_max": n_max, "floor": floor,
           "anomaly": _jsonable(anomaly), "walkers": _jsonable(walkers),
           "n_sources": len(sources), "n_segments": len(pool)}
    return ExperimentReport(records, cfg, seed, seconds, time.perf_counter() - t_start)


# ---------------------------------------------------------------- end to end

@dataclass(frozen=True)
class RunConfig:
    n_values: Tuple[int, ...] = (5,)
    repeats: int = 1
    duration_s: float = 180.0
    route: str = "carson"  # or "rf"
    metric: str = "kl"
    n_max: int = 20
    floor: float = FLOOR
    rf_streams: int = 30
    rf_noise_std: float = 0.0
    prior_sources: int = 21

    def __post_init__(self):
        object.__setattr__(self, "n_values", tuple(int(n) for n in np.atleast_1d(self.n_values)))
        if not self.n_values or min(self.n_values) < 1:
            raise InvalidInput("crowd sizes must be >= 1")
        if max(self.n_values) > self.n_max:
            raise InvalidInput("n_max must cover every crowd size")
        if self.route not in ("carson", "rf"):
            raise InvalidInput("route must be 'carson' or 'rf'")
        if self.duration_s <= 1.0 or self.repeats < 1:
            raise InvalidInput("duration_s must exceed one window and repeats must be >= 1")
        DistanceMetric.parse(self.metric)


def _build(cls, section):
    section = dict(section or {})
    known = {f.name for f in fields(cls)}
    extra = set(section) - known
    if extra:
        raise InvalidInput(f"unknown {cls.__name__} keys: {sorted(extra)}")
    return cls(**section)


def parse_config(cfg: dict):
    """Validate an end-to-end config dict; returns the typed sections."""
    if "seed" not in cfg:
        raise InvalidInput("config needs a seed")
    try:
        seed = int(cfg["seed"])
    except (TypeError, ValueError):
        raise InvalidInput("seed must be an integer")
    anomaly_sec = cfg.get("anomaly") or {}
    enabled = bool(anomaly_sec.get("enabled", False))
    train_count = int(anomaly_sec.get("train_count", 60_000))
    a_cfg = _build(AnomalyConfig, {k: v for k, v in anomaly_sec.items()
                                   if k not in ("enabled", "train_count")})
    walkers = cfg.get("walkers")
    return {
        "seed": seed,
        "population": _build(PopulationConfig, cfg.get("population")),
        "carson": _build(CarsonConfig, cfg.get("carson")),
        "run": _build(RunConfig, cfg.get("run")),
        "anomaly": a_cfg if enabled else None,
        "anomaly_train_count": train_count,
        "walkers": _build(WalkerConfig, walkers) if walkers else None,
    }


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _crowd_profile(pop: PopulationConfig, n, duration_s, seed, rep):
    """Fresh individuals (not pool segments) for an end-to-end run."""
    chans = []
    for k in range(n):
        prm = pop.source_params(10_000 + k, _stage_seed(seed, E2E, rep, k))
        chans.append(synth_fidget_profile(prm, duration_s, pop.sample_rate).channels)
    return SpeedProfile(pop.sample_rate, np.vstack(chans))


def _crowd_bandwidth(run: RunConfig, carson_cfg, profile: SpeedProfile, n_parts, seed, key):
    if run.route == "carson":
        per_person = [carson_bandwidth(SpeedProfile(profile.sample_rate, profile.channels[a:a + n_parts]),
                                       carson_cfg)
                      for a in range(0, profile.n_parts, n_parts)]
        return max_combine(per_person)
    traces = synth_streams(profile, run.rf_streams, carson_cfg.wavelength_m,
                           noise_std=run.rf_noise_std, seed=_stage_seed(seed, RF, *key))
    spec = pca_average_spectrogram(traces)
    return extract_bandwidth(spec)


def run_end_to_end(config: dict, out_dir, seed: Optional[int] = None) -> ExperimentReport:
    """Synthesize, extract bandwidth, optionally filter, estimate; write a run directory.

    Artifacts: ``report.json``, ``base_histogram.json``, ``priors.json``, per-run
    ``trace_*.csv``, ``observed_*.json`` and ``bandwidth_*.csv``, plus
    ``manifest.json`` with sha256 hashes. If a stage fails, the manifest is
    written with ``"complete": false`` and a ``StageError`` is raised.
    """
    cfg = dict(config)
    if seed is not None:
        cfg["seed"] = seed
    parsed = parse_config(cfg)
    seed, pop, carson_cfg, run = parsed["seed"], parsed["population"], parsed["carson"], parsed["run"]
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    artifacts = []
    t_start = time.perf_counter()

    def emit(name):
        artifacts.append(name)
        return out / name

    def manifest(complete, error=None):
        m = {"complete": complete, "seed": seed, "config": _jsonable(cfg),
             "artifacts": [{"path": a, "sha256": _sha256(out / a)} for a in artifacts]}
        if error:
            m["error"] = error
        with open(out / "manifest.json", "w") as fh:
            json.dump(m, fh, indent=1)

    stage = "synth"
    try:
        prior_pop = PopulationConfig(**{**asdict(pop), "n_sources": run.prior_sources})
        pool = build_segment_pool(prior_pop, carson_cfg, seed)
        stage = "prior-build"
        base = estimate_pdf(np.concatenate([s.values for s in pool.series()]), DEFAULT_EDGES, run.floor)
        with open(emit("base_histogram.json"), "w") as fh:
            json.dump(base.to_dict(), fh)
        priors = build_prior_set(base, run.n_max, run.floor)
        priors.save(emit("priors.json"))
        model = None
        if parsed["anomaly"] is not None:
            stage = "anomaly-train"
            model = train_filter(pool, parsed["anomaly"], (1, run.n_max), parsed["anomaly_train_count"],
                                 _stage_seed(seed, ANOMALY))
            model.save(emit("anomaly_model.json"))
        records = []
        seconds = 0.0
        for n in run.n_values:
            for rep in range(run.repeats):
                tag = f"n{n:02d}_r{rep}"
                stage = "rf-sim" if run.route == "rf" else "carson"
                prof = _crowd_profile(pop, n, run.duration_s, seed, rep * 1000 + n)
                bw = _crowd_bandwidth(run, carson_cfg, prof, pop.n_body_parts, seed, (n, rep))
                burst = None
                if parsed["walkers"] is not None:
                    bw, burst = inject_walkers(bw, parsed["walkers"], stage_rng(seed, WALKERS, n, rep))
                write_bandwidth_csv(bw, emit(f"bandwidth_{tag}.csv"))
                mask = None
                if model is not None:
                    stage = "anomaly-flag"
                    mask = flag_anomalies(bw, model, parsed["anomaly"]).flags
                stage = "estimate"
                rec, tr = _run_record(bw, priors, run.metric, n, mask, repeat=rep, tag=tag)
                if burst is not None:
                    rec["burst_fraction"] = float(burst.mean())
                tr.write_csv(emit(f"trace_{tag}.csv"))
                keep = bw.values if mask is None else bw.values[~mask]
                if keep.size:
                    with open(emit(f"observed_{tag}.json"), "w") as fh:
                        json.dump(estimate_pdf(keep, DEFAULT_EDGES, run.floor).to_dict(), fh)
                records.append(rec)
                seconds += bw.duration_s
        stage = "report"
        report = ExperimentReport(records, _jsonable(cfg), seed, seconds, time.perf_counter() - t_start)
        report.save(emit("report.json"))
    except StageError:
        manifest(False, stage)
        raise
    except Exception as exc:
        manifest(False, f"{stage}: {exc}")
        raise StageError(stage, str(exc)) from exc
    manifest(True)
    return report
