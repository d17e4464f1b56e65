"""Request/response models for the pipeline service.

Paths are interpreted on the host running the service; the endpoints wrap
the same stage functions the CLI calls.
"""
from __future__ import annotations

from typing import Optional

from pydantic import BaseModel, Field


class SynthParams(BaseModel):
    n_subjects: int = 8
    epochs_per_subject: int = 200
    sample_rate_hz: float = 100.0
    snr_scalp_db: float = 10.0
    snr_ear_db: float = -5.0
    ear_attenuation: float = 0.5
    amplitude_uv: float = 30.0


class SynthRequest(BaseModel):
    out_dir: str
    seed: int = 0
    config: Optional[SynthParams] = None


class SynthResponse(BaseModel):
    out_dir: str
    subjects: list[str]
    manifest: str


class PreprocessRequest(BaseModel):
    in_dir: str
    out_dir: str


class RejectedRecording(BaseModel):
    subject: str
    reason: str


class PreprocessResponse(BaseModel):
    out_dir: str
    subjects: list[str]
    rejected_recordings: list[RejectedRecording]
    manifest: str


class TrainParams(BaseModel):
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epochs: int = 100
    batch_size: int = 32
    kd_weight: float = 1.0


class TrainRequest(BaseModel):
    strategy: str
    data_dir: str
    fold: int
    out_dir: str
    arch: str = "cnn"
    seed: int = 0
    teacher_checkpoint: Optional[str] = None
    train: Optional[TrainParams] = None


class TrainResponse(BaseModel):
    checkpoint: str
    loss_csv: str
    final_loss: Optional[float]
    test_subject: str
    manifest: str


class EvaluateRequest(BaseModel):
    checkpoint: str
    data_dir: str
    fold: int
    out_dir: str
    embed: Optional[str] = Field(default=None, pattern="^(pca|sne)$")
    seed: int = 0


class EvaluateResponse(BaseModel):
    accuracy: float
    kappa: float
    kappa_degenerate: bool
    f1_per_class: list[Optional[float]]
    macro_f1: Optional[float]
    n_epochs: int
    strategy: Optional[str]
    fold: int
    test_subject: str
    metrics_json: str
    confusion_csv: str
    manifest: str


class ReportRequest(BaseModel):
    run_dirs: list[str]
    out_path: str


class ReportRow(BaseModel):
    run: str
    strategy: str
    modality: str
    accuracy: float
    kappa: float
    macro_f1: Optional[float]
    fold: Optional[int]


class ReportResponse(BaseModel):
    table_markdown: str
    table_csv: str
    rows: list[ReportRow]
    embeddings_svg: list[str]
    manifest: str


class HealthResponse(BaseModel):
    status: str
    version: str
