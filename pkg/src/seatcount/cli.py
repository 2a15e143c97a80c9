"""Command-line client.

Each subcommand turns its flags into a request for the matching service
route. Without ``--url`` the service runs in-process; with it, requests go
to a running server (``seatcount serve``) that shares this filesystem.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

METRICS = ("kl", "js", "tv", "bhat")


def _abs(p):
    return None if p is None else os.path.abspath(p)


def _add_common(sp):
    sp.add_argument("--url", help="service base URL; default runs the service in-process")
    sp.add_argument("--seed", type=int, help="override the random seed")


def build_parser():
    ap = argparse.ArgumentParser(prog="seatcount", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("synth-profiles", help="synthesize single-person fidget speed profiles")
    sp.add_argument("--out-dir", required=True)
    sp.add_argument("--n-sources", type=int, default=1)
    sp.add_argument("--duration", type=float, default=180.0)
    sp.add_argument("--sample-rate", type=float, default=100.0)
    sp.add_argument("--silent-mean", type=float, default=15.0)
    sp.add_argument("--fidget-mean", type=float, default=3.0)
    sp.add_argument("--peak-speed", type=float, nargs=2, default=(0.05, 0.35), metavar=("LO", "HI"))
    sp.add_argument("--body-parts", type=int, default=3)
    _add_common(sp)

    sp = sub.add_parser("landmarks-ingest", help="convert a pose-landmark CSV into a speed profile")
    sp.add_argument("--csv", required=True)
    sp.add_argument("--meta", required=True, help="JSON with frame_rate and interpupillary_px")
    sp.add_argument("--out", required=True)
    sp.add_argument("--cutoff", type=float, default=6.0)
    sp.add_argument("--visibility-floor", type=float, default=0.5)
    _add_common(sp)

    sp = sub.add_parser("carson", help="speed profile -> bandwidth series")
    sp.add_argument("--profile", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--wavelength", type=float)
    sp.add_argument("--psi", type=float, default=2.0)
    _add_common(sp)

    sp = sub.add_parser("rf-sim", help="speed profile -> received traces, spectrogram, bandwidth")
    sp.add_argument("--profile", required=True)
    sp.add_argument("--out-dir", required=True)
    sp.add_argument("--streams", type=int, default=30)
    sp.add_argument("--noise", type=float, default=0.0)
    sp.add_argument("--wavelength", type=float)
    _add_common(sp)

    sp = sub.add_parser("prior-build", help="single-person bandwidth series -> crowd priors")
    sp.add_argument("--bandwidth", nargs="+", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--n-max", type=int, default=20)
    sp.add_argument("--floor", type=float)
    _add_common(sp)

    sp = sub.add_parser("anomaly-train", help="train the reconstruction filter")
    sp.add_argument("--bandwidth", nargs="+", required=True, help="single-person bandwidth series")
    sp.add_argument("--out", required=True)
    sp.add_argument("--count", type=int, default=60_000)
    sp.add_argument("--n-range", type=int, nargs=2, default=(1, 20), metavar=("LO", "HI"))
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--l2", type=float)
    sp.add_argument("--sparsity", type=float)
    _add_common(sp)

    sp = sub.add_parser("anomaly-flag", help="mark anomalous samples of a bandwidth series")
    sp.add_argument("--bandwidth", required=True)
    sp.add_argument("--model", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--threshold-ratio", type=float, default=1.5)
    _add_common(sp)

    sp = sub.add_parser("estimate", help="streaming crowd-size estimate")
    sp.add_argument("--bandwidth", required=True)
    sp.add_argument("--priors", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--metric", choices=METRICS, default="kl")
    sp.add_argument("--mask")
    sp.add_argument("--every", type=float, default=1.0, help="update period in seconds")
    _add_common(sp)

    sp = sub.add_parser("simulate", help="end-to-end run from a JSON config")
    sp.add_argument("--config", required=True)
    sp.add_argument("--out-dir", required=True)
    sp.add_argument("--metric", choices=METRICS)
    _add_common(sp)

    sp = sub.add_parser("report", help="summarize a run directory or report JSON")
    sp.add_argument("path")
    _add_common(sp)

    sp = sub.add_parser("serve", help="run the HTTP service")
    sp.add_argument("--host", default="127.0.0.1")
    sp.add_argument("--port", type=int, default=8000)
    return ap


def to_request(args):
    """(route, body) for a parsed command line."""
    c = args.command
    seed = args.seed
    if c == "synth-profiles":
        return "/synth-profiles", {
            "out_dir": _abs(args.out_dir), "n_sources": args.n_sources, "duration_s": args.duration,
            "sample_rate": args.sample_rate, "silent_mean_s": args.silent_mean,
            "fidget_mean_s": args.fidget_mean, "peak_speed_range": list(args.peak_speed),
            "n_body_parts": args.body_parts, "seed": seed or 0}
    if c == "landmarks-ingest":
        return "/landmarks-ingest", {
            "csv_path": _abs(args.csv), "meta_path": _abs(args.meta), "out_path": _abs(args.out),
            "lowpass_cutoff_hz": args.cutoff, "visibility_floor": args.visibility_floor}
    if c == "carson":
        body = {"profile_path": _abs(args.profile), "out_path": _abs(args.out), "psi": args.psi}
        if args.wavelength:
            body["wavelength_m"] = args.wavelength
        return "/carson", body
    if c == "rf-sim":
        body = {"profile_path": _abs(args.profile), "out_dir": _abs(args.out_dir),
                "n_streams": args.streams, "noise_std": args.noise, "seed": seed or 0}
        if args.wavelength:
            body["wavelength_m"] = args.wavelength
        return "/rf-sim", body
    if c == "prior-build":
        body = {"bandwidth_paths": [_abs(p) for p in args.bandwidth], "out_path": _abs(args.out),
                "n_max": args.n_max}
        if args.floor is not None:
            body["floor"] = args.floor
        return "/prior-build", body
    if c == "anomaly-train":
        cfg = {k: v for k, v in (("epochs", args.epochs), ("l2_weight", args.l2),
                                 ("sparsity_weight", args.sparsity)) if v is not None}
        return "/anomaly-train", {
            "bandwidth_paths": [_abs(p) for p in args.bandwidth], "out_path": _abs(args.out),
            "count": args.count, "n_range": list(args.n_range), "seed": seed or 0, "config": cfg}
    if c == "anomaly-flag":
        return "/anomaly-flag", {"bandwidth_path": _abs(args.bandwidth), "model_path": _abs(args.model),
                                 "out_path": _abs(args.out), "threshold_ratio": args.threshold_ratio}
    if c == "estimate":
        return "/estimate", {"bandwidth_path": _abs(args.bandwidth), "priors_path": _abs(args.priors),
                             "out_path": _abs(args.out), "metric": args.metric,
                             "mask_path": _abs(args.mask), "update_every_s": args.every}
    if c == "simulate":
        with open(args.config) as fh:
            cfg = json.load(fh)
        if args.metric:
            cfg.setdefault("run", {})["metric"] = args.metric
        return "/simulate", {"config": cfg, "out_dir": _abs(args.out_dir), "seed": seed}
    if c == "report":
        return "/report", {"report_path": _abs(args.path)}
    raise ValueError(c)


def _client(url):
    if url:
        import httpx
        return httpx.Client(base_url=url, timeout=None)
    import warnings
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # httpx-backed test client is deprecated upstream
        from fastapi.testclient import TestClient
    from .service.app import app
    return TestClient(app, raise_server_exceptions=False)


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "serve":
        import uvicorn
        uvicorn.run("seatcount.service.app:app", host=args.host, port=args.port)
        return 0
    route, body = to_request(args)
    with _client(args.url) as client:
        resp = client.post(route, json=body)
    try:
        payload = resp.json()
    except ValueError:
        payload = {"error": "http", "detail": resp.text}
    out = json.dumps(payload, indent=2)
    if resp.status_code >= 400:
        print(out, file=sys.stderr)
        return 1 if resp.status_code < 500 else 2
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
