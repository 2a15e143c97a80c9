"""HTTP front end: one POST route per pipeline step, plus ``/health``."""
from __future__ import annotations

import json
import logging
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import anomaly, carson, crowd, harness, matching, motion, rfsim
from ..errors import InvalidInput, StageError, TrainingDiverged
from . import schemas as S

log = logging.getLogger(__name__)

try:
    __version__ = version("artifact")
except PackageNotFoundError:
    __version__ = "0.1.0"

app = FastAPI(title="seatcount", version=__version__)


@app.exception_handler(InvalidInput)
async def _invalid(request: Request, exc: InvalidInput):
    return JSONResponse(status_code=422, content={"error": "invalid-input", "detail": str(exc)})


@app.exception_handler(FileNotFoundError)
async def _missing(request: Request, exc: FileNotFoundError):
    return JSONResponse(status_code=404, content={"error": "not-found", "detail": str(exc)})


@app.exception_handler(StageError)
async def _stage(request: Request, exc: StageError):
    return JSONResponse(status_code=500, content={"error": "stage-failed", "stage": exc.stage,
                                                  "detail": str(exc)})


@app.exception_handler(TrainingDiverged)
async def _diverged(request: Request, exc: TrainingDiverged):
    return JSONResponse(status_code=500, content={"error": "training-diverged", "detail": str(exc),
                                                  "epoch": exc.epoch, "batch": exc.batch})


def _parent(path) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def _bw_summary(bw: carson.BandwidthSeries, path) -> S.BandwidthResponse:
    return S.BandwidthResponse(path=str(path), n_samples=len(bw), sample_period_s=bw.sample_period_s,
                               mean_hz=float(bw.values.mean()), max_hz=float(bw.values.max()))


@app.get("/health", response_model=S.Health)
def health():
    return S.Health(version=__version__)


@app.post("/synth-profiles", response_model=S.SynthProfilesResponse)
def synth_profiles(req: S.SynthProfilesRequest):
    out = Path(req.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    children = np.random.SeedSequence(req.seed).generate_state(req.n_sources)
    paths = []
    prof = None
    for k, child in enumerate(children):
        prm = motion.FidgetProcessParams(
            silent_mean_s=req.silent_mean_s, fidget_mean_s=req.fidget_mean_s,
            peak_speed_range=tuple(req.peak_speed_range), n_body_parts=req.n_body_parts,
            envelope_smoothness_hz=req.envelope_smoothness_hz, min_duration_s=req.min_duration_s,
            seed=int(child))
        prof = motion.synth_fidget_profile(prm, req.duration_s, req.sample_rate)
        path = out / f"profile_{k:03d}.csv"
        motion.write_profile_csv(prof, path)
        paths.append(str(path))
    return S.SynthProfilesResponse(paths=paths, n_samples=prof.n_samples, sample_rate=prof.sample_rate)


@app.post("/landmarks-ingest", response_model=S.ProfileResponse)
def landmarks_ingest(req: S.LandmarksIngestRequest):
    meta = req.meta
    if meta is None:
        if req.meta_path is None:
            raise InvalidInput("give meta or meta_path")
        with open(req.meta_path) as fh:
            meta = json.load(fh)
    track = motion.read_landmark_csv(req.csv_path, meta)
    prof = motion.landmarks_to_speeds(track, req.lowpass_cutoff_hz, req.visibility_floor)
    motion.write_profile_csv(prof, _parent(req.out_path))
    return S.ProfileResponse(path=req.out_path, n_parts=prof.n_parts, n_samples=prof.n_samples,
                             sample_rate=prof.sample_rate)


@app.post("/carson", response_model=S.BandwidthResponse)
def carson_route(req: S.CarsonRequest):
    prof = motion.read_profile_csv(req.profile_path)
    cfg = carson.CarsonConfig(req.wavelength_m, req.psi, req.window_s, req.shift_s,
                              req.speed_band_power_fraction)
    bw = carson.carson_bandwidth(prof, cfg)
    carson.write_bandwidth_csv(bw, _parent(req.out_path))
    return _bw_summary(bw, req.out_path)


@app.post("/rf-sim", response_model=S.RfSimResponse)
def rf_sim(req: S.RfSimRequest):
    prof = motion.read_profile_csv(req.profile_path)
    out = Path(req.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    traces = rfsim.synth_streams(prof, req.n_streams, req.wavelength_m, req.sample_rate,
                                 req.noise_std, seed=req.seed)
    rfsim.write_trace_csv(traces, out / "traces.csv")
    spec = rfsim.pca_average_spectrogram(traces, req.n_components)
    rfsim.write_spectrogram(spec, out / "spectrogram.json", out / "spectrogram_power.csv")
    bw = rfsim.extract_bandwidth(spec, req.power_fraction)
    carson.write_bandwidth_csv(bw, out / "bandwidth.csv")
    return S.RfSimResponse(traces_path=str(out / "traces.csv"),
                           spectrogram_path=str(out / "spectrogram.json"),
                           bandwidth=_bw_summary(bw, out / "bandwidth.csv"))


@app.post("/prior-build", response_model=S.PriorBuildResponse)
def prior_build(req: S.PriorBuildRequest):
    samples = np.concatenate([carson.read_bandwidth_csv(p).values for p in req.bandwidth_paths])
    base = crowd.estimate_pdf(samples, crowd.DEFAULT_EDGES, req.floor)
    priors = crowd.build_prior_set(base, req.n_max, req.floor)
    out = _parent(req.out_path)
    priors.save(out)
    base_path = out.with_name(out.stem + "_base.json")
    with open(base_path, "w") as fh:
        json.dump(base.to_dict(), fh)
    return S.PriorBuildResponse(path=str(out), base_histogram_path=str(base_path), n_max=req.n_max,
                                n_samples=int(samples.size),
                                prior_means_hz=[priors.priors[n].mean() for n in range(1, req.n_max + 1)])


@app.post("/anomaly-train", response_model=S.AnomalyTrainResponse)
def anomaly_train(req: S.AnomalyTrainRequest):
    cfg = harness._build(anomaly.AnomalyConfig, {**req.config, "seed": req.config.get("seed", req.seed)})
    series = [carson.read_bandwidth_csv(p) for p in req.bandwidth_paths]
    win = cfg.window_len(series[0].sample_period_s)
    windows = anomaly.build_training_set(series, tuple(req.n_range), req.count, req.seed, win)
    model = anomaly.train_autoencoder(windows, cfg)
    model.save(_parent(req.out_path))
    return S.AnomalyTrainResponse(path=req.out_path, train_error_mean=model.train_error_mean,
                                  loss_history=model.loss_history)


@app.post("/anomaly-flag", response_model=S.AnomalyFlagResponse)
def anomaly_flag(req: S.AnomalyFlagRequest):
    bw = carson.read_bandwidth_csv(req.bandwidth_path)
    model = anomaly.AutoencoderModel.load(req.model_path)
    cfg = anomaly.AnomalyConfig(window_s=model.input_dim * bw.sample_period_s,
                                threshold_ratio=req.threshold_ratio)
    mask = anomaly.flag_anomalies(bw, model, cfg)
    mask.write_csv(_parent(req.out_path))
    return S.AnomalyFlagResponse(path=req.out_path, flag_rate=mask.rate, n_samples=len(mask))


@app.post("/estimate", response_model=S.EstimateResponse)
def estimate(req: S.EstimateRequest):
    bw = carson.read_bandwidth_csv(req.bandwidth_path)
    priors = crowd.CrowdPriorSet.load(req.priors_path)
    mask = anomaly.AnomalyMask.read_csv(req.mask_path) if req.mask_path else None
    tr = matching.streaming_estimate(bw, priors, req.metric, mask=mask,
                                     update_every_s=req.update_every_s)
    tr.write_csv(_parent(req.out_path))
    ok = tr.status == "ok"
    return S.EstimateResponse(path=req.out_path, status=tr.status, final_estimate=tr.final_estimate,
                              convergence_s=matching.convergence_time(tr) if ok else None,
                              n_updates=len(tr))


@app.post("/simulate", response_model=S.ReportResponse)
def simulate(req: S.SimulateRequest):
    cfg = req.config
    if cfg is None:
        if req.config_path is None:
            raise InvalidInput("give config or config_path")
        with open(req.config_path) as fh:
            cfg = json.load(fh)
    rep = harness.run_end_to_end(cfg, req.out_dir, seed=req.seed)
    agg = rep.to_dict()["aggregates"]
    return S.ReportResponse(seed=rep.seed, aggregates=agg, n_records=len(rep.records),
                            path=str(Path(req.out_dir) / "report.json"),
                            manifest_path=str(Path(req.out_dir) / "manifest.json"))


@app.post("/report", response_model=S.ReportResponse)
def report(req: S.ReportRequest):
    path = Path(req.report_path)
    if path.is_dir():
        path = path / "report.json"
    rep = harness.ExperimentReport.load(path)
    return S.ReportResponse(seed=rep.seed, aggregates=rep.to_dict()["aggregates"],
                            n_records=len(rep.records), path=str(path))
