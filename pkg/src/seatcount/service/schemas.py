"""Request and response bodies for the HTTP service.

Paths are read and written by the service process, so client and service
must share a filesystem.
"""
from typing import Any, Dict, List, Optional, Tuple, Union

from pydantic import BaseModel, Field

from ..carson import WAVELENGTH_M
from ..crowd import FLOOR


class SynthProfilesRequest(BaseModel):
    out_dir: str
    n_sources: int = Field(1, ge=1)
    duration_s: float = Field(180.0, gt=0)
    sample_rate: float = Field(100.0, gt=0)
    silent_mean_s: float = 15.0
    fidget_mean_s: float = 3.0
    peak_speed_range: Tuple[float, float] = (0.05, 0.35)
    n_body_parts: int = 3
    envelope_smoothness_hz: float = 2.0
    min_duration_s: float = 0.5
    seed: int = 0


class SynthProfilesResponse(BaseModel):
    paths: List[str]
    n_samples: int
    sample_rate: float


class LandmarksIngestRequest(BaseModel):
    csv_path: str
    out_path: str
    meta: Optional[Dict[str, Any]] = None
    meta_path: Optional[str] = None
    lowpass_cutoff_hz: float = 6.0
    visibility_floor: float = 0.5


class ProfileResponse(BaseModel):
    path: str
    n_parts: int
    n_samples: int
    sample_rate: float


class CarsonRequest(BaseModel):
    profile_path: str
    out_path: str
    wavelength_m: float = WAVELENGTH_M
    psi: Union[float, List[float]] = 2.0
    window_s: float = 1.0
    shift_s: float = 0.01
    speed_band_power_fraction: float = 0.95


class BandwidthResponse(BaseModel):
    path: str
    n_samples: int
    sample_period_s: float
    mean_hz: float
    max_hz: float


class RfSimRequest(BaseModel):
    profile_path: str
    out_dir: str
    n_streams: int = Field(30, ge=1)
    n_components: int = Field(5, ge=1)
    sample_rate: float = 200.0
    noise_std: float = Field(0.0, ge=0)
    wavelength_m: float = WAVELENGTH_M
    power_fraction: float = 0.95
    seed: int = 0


class RfSimResponse(BaseModel):
    traces_path: str
    spectrogram_path: str
    bandwidth: BandwidthResponse


class PriorBuildRequest(BaseModel):
    bandwidth_paths: List[str] = Field(..., min_length=1)
    out_path: str
    n_max: int = Field(20, ge=1)
    floor: float = Field(FLOOR, ge=0)


class PriorBuildResponse(BaseModel):
    path: str
    base_histogram_path: str
    n_max: int
    n_samples: int
    prior_means_hz: List[float]


class AnomalyTrainRequest(BaseModel):
    bandwidth_paths: List[str] = Field(..., min_length=1)
    out_path: str
    count: int = Field(60_000, ge=1)
    n_range: Tuple[int, int] = (1, 20)
    seed: int = 0
    config: Dict[str, Any] = Field(default_factory=dict)


class AnomalyTrainResponse(BaseModel):
    path: str
    train_error_mean: float
    loss_history: List[float]


class AnomalyFlagRequest(BaseModel):
    bandwidth_path: str
    model_path: str
    out_path: str
    threshold_ratio: float = 1.5


class AnomalyFlagResponse(BaseModel):
    path: str
    flag_rate: float
    n_samples: int


class EstimateRequest(BaseModel):
    bandwidth_path: str
    priors_path: str
    out_path: str
    metric: str = "kl"
    mask_path: Optional[str] = None
    update_every_s: float = Field(1.0, gt=0)


class EstimateResponse(BaseModel):
    path: str
    status: str
    final_estimate: Optional[int]
    convergence_s: Optional[float]
    n_updates: int


class SimulateRequest(BaseModel):
    out_dir: str
    config: Optional[Dict[str, Any]] = None
    config_path: Optional[str] = None
    seed: Optional[int] = None


class ReportRequest(BaseModel):
    report_path: str


class ReportResponse(BaseModel):
    seed: int
    aggregates: Dict[str, Any]
    n_records: int
    path: Optional[str] = None
    manifest_path: Optional[str] = None


class Health(BaseModel):
    status: str = "ok"
    version: str
