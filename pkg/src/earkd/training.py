"""Training strategies: supervised, transfer, offline and online distillation.

All strategies share the same optimizer protocol (Adam, lr 1e-3, betas
0.9/0.999, 100 epochs, batch size 32 by default) and a per-epoch shuffle
reseeded from the config seed, so runs are bit-reproducible on one
platform. Distillation trains the student on ear epochs with

    loss = cross_entropy(student_logits, y)
           + kd_weight * mean_i ||student_feat_i - teacher_feat_i||^2

where teacher features are computed on the paired scalp epochs and are
constants with respect to the student objective.
"""
from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import torch

from .dataset.epochs import NUM_STAGES
from .errors import (
    ConfigNotFound,
    EmptyDataset,
    FeatureShapeMismatch,
    InvalidConfig,
    InvalidLabel,
    ShapeError,
)
from .models import ModelConfig, SleepStager, build_stager

STRATEGIES = ("supervised-scalp", "supervised-ear", "transfer", "kd-offline", "kd-online")


@dataclass
class TrainConfig:
    """Optimizer protocol and loop hyperparameters."""

    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epochs: int = 100
    batch_size: int = 32
    seed: int = 0
    kd_weight: float = 1.0

    def validate(self) -> "TrainConfig":
        if self.learning_rate <= 0:
            raise InvalidConfig("learning_rate must be positive")
        if self.batch_size < 1:
            raise InvalidConfig("batch_size must be >= 1")
        if self.epochs < 0:
            raise InvalidConfig("epochs must be >= 0")
        if self.kd_weight < 0:
            raise InvalidConfig("kd_weight must be >= 0")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise InvalidConfig(f"unknown train config keys: {sorted(unknown)}")
        return cls(**d).validate()

    @classmethod
    def from_json(cls, path: str | Path) -> "TrainConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigNotFound(f"train config not found: {path}")
        return cls.from_dict(json.loads(path.read_text()))


@dataclass
class TrainResult:
    """Trained model(s) and per-epoch loss traces."""

    model: SleepStager
    loss_trace: list[float]
    teacher: SleepStager | None = None
    teacher_loss_trace: list[float] | None = None
    extras: dict = field(default_factory=dict)


# --- losses ---

def ce_loss(logits: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """Mean categorical cross-entropy; labels are stage codes 0..4."""
    if logits.dim() != 2 or logits.shape[0] != labels.shape[0]:
        raise ShapeError(f"logits {tuple(logits.shape)} vs labels {tuple(labels.shape)}")
    if labels.numel() and (labels.min() < 0 or labels.max() >= logits.shape[1]):
        raise InvalidLabel(f"labels must be in 0..{logits.shape[1] - 1}")
    log_probs = torch.log_softmax(logits, dim=1)
    return -log_probs[torch.arange(labels.shape[0]), labels].mean()


def feature_mse(student_feat: torch.Tensor, teacher_feat: torch.Tensor) -> torch.Tensor:
    """Mean over the batch of squared L2 distance between feature rows."""
    if student_feat.shape != teacher_feat.shape:
        raise ShapeError(
            f"feature shapes differ: {tuple(student_feat.shape)} vs {tuple(teacher_feat.shape)}"
        )
    return ((student_feat - teacher_feat) ** 2).sum(dim=-1).mean()


def kd_loss(student_logits: torch.Tensor, student_feat: torch.Tensor,
            teacher_feat: torch.Tensor, labels: torch.Tensor,
            weight: float = 1.0) -> torch.Tensor:
    """Distillation objective: cross-entropy plus weighted feature MSE.

    The printed objective carries no trade-off coefficient, so the default
    weight is 1.0.
    """
    return ce_loss(student_logits, labels) + weight * feature_mse(student_feat, teacher_feat)


# --- shared loop machinery ---

def _as_tensors(x: np.ndarray, y: np.ndarray, dtype) -> tuple[torch.Tensor, torch.Tensor]:
    if x.shape[0] == 0:
        raise EmptyDataset("training dataset is empty")
    if x.shape[0] != y.shape[0]:
        raise ShapeError(f"{x.shape[0]} inputs but {y.shape[0]} labels")
    if y.size and (y.min() < 0 or y.max() >= NUM_STAGES):
        raise InvalidLabel("labels must be stage codes 0..4")
    return torch.as_tensor(x, dtype=dtype), torch.as_tensor(y, dtype=torch.long)


def _epoch_order(n: int, epoch: int, seed: int) -> np.ndarray:
    # Reseeded per epoch so the shuffle stream is independent of call order.
    return np.random.default_rng([seed, epoch]).permutation(n)


def _make_optimizer(model: SleepStager, config: TrainConfig) -> torch.optim.Adam:
    return torch.optim.Adam(
        model.parameters(), lr=config.learning_rate,
        betas=(config.beta1, config.beta2),
    )


def train_supervised(model: SleepStager, inputs: np.ndarray, labels: np.ndarray,
                     config: TrainConfig) -> TrainResult:
    """Adam training of one model on a single-modality dataset."""
    config.validate()
    dtype = next(model.parameters()).dtype
    x, y = _as_tensors(inputs, labels, dtype)
    optimizer = _make_optimizer(model, config)
    model.train()
    trace = []
    for epoch in range(config.epochs):
        order = _epoch_order(x.shape[0], epoch, config.seed)
        losses = []
        for start in range(0, x.shape[0], config.batch_size):
            idx = order[start:start + config.batch_size]
            logits, _ = model(x[idx])
            loss = ce_loss(logits, y[idx])
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            losses.append(float(loss.detach()))
        trace.append(float(np.mean(losses)))
    model.eval()
    return TrainResult(model=model, loss_trace=trace)


def train_transfer(model_config: ModelConfig, scalp_inputs: np.ndarray,
                   scalp_labels: np.ndarray, ear_inputs: np.ndarray,
                   ear_labels: np.ndarray, config: TrainConfig) -> TrainResult:
    """Pretrain on scalp epochs, then fine-tune all weights on ear epochs.

    The combined loss trace has 2 * epochs entries (pretraining then
    fine-tuning); the pretrained weights are kept in extras.
    """
    config.validate()
    model = build_stager(model_config)
    phase1 = train_supervised(model, scalp_inputs, scalp_labels, config)
    pretrained_state = copy.deepcopy(model.state_dict())
    phase2 = train_supervised(model, ear_inputs, ear_labels, config)
    return TrainResult(
        model=model,
        loss_trace=phase1.loss_trace + phase2.loss_trace,
        extras={"pretrained_state": pretrained_state},
    )


def _check_paired(x_scalp: np.ndarray, x_ear: np.ndarray) -> None:
    if x_scalp.shape != x_ear.shape:
        raise ShapeError(
            f"paired scalp {x_scalp.shape} and ear {x_ear.shape} shapes differ"
        )


def train_offline_kd(teacher: SleepStager, student_config: ModelConfig,
                     x_scalp: np.ndarray, x_ear: np.ndarray, labels: np.ndarray,
                     config: TrainConfig) -> TrainResult:
    """Distill a frozen, pretrained teacher into a freshly initialized student.

    Teacher features are computed on the scalp epochs under no_grad; the
    teacher's parameters are untouched.
    """
    config.validate()
    _check_paired(x_scalp, x_ear)
    if student_config.feature_dim != teacher.feature_dim:
        raise FeatureShapeMismatch(
            f"student D={student_config.feature_dim} vs teacher D={teacher.feature_dim}"
        )
    student = build_stager(student_config)
    dtype = next(student.parameters()).dtype
    xs, y = _as_tensors(x_scalp, labels, dtype)
    xe, _ = _as_tensors(x_ear, labels, dtype)
    teacher.eval()
    optimizer = _make_optimizer(student, config)
    student.train()
    trace = []
    for epoch in range(config.epochs):
        order = _epoch_order(xs.shape[0], epoch, config.seed)
        losses = []
        for start in range(0, xs.shape[0], config.batch_size):
            idx = order[start:start + config.batch_size]
            with torch.no_grad():
                _, t_feat = teacher(xs[idx])
            logits, s_feat = student(xe[idx])
            loss = kd_loss(logits, s_feat, t_feat, y[idx], config.kd_weight)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            losses.append(float(loss.detach()))
        trace.append(float(np.mean(losses)))
    student.eval()
    return TrainResult(model=student, loss_trace=trace, teacher=teacher)


def train_online_kd(teacher_config: ModelConfig, student_config: ModelConfig,
                    x_scalp: np.ndarray, x_ear: np.ndarray, labels: np.ndarray,
                    config: TrainConfig) -> TrainResult:
    """Train teacher and student simultaneously on the same batches.

    Per batch, the teacher takes a cross-entropy step on the scalp epochs
    first; the student then minimizes the distillation loss against the
    updated teacher's features, which are detached, so the student
    objective never updates the teacher. The teacher's trajectory is
    therefore identical to supervised scalp training at the same seed.
    """
    config.validate()
    _check_paired(x_scalp, x_ear)
    if student_config.feature_dim != teacher_config.feature_dim:
        raise FeatureShapeMismatch(
            f"student D={student_config.feature_dim} vs teacher D={teacher_config.feature_dim}"
        )
    teacher = build_stager(teacher_config)
    student = build_stager(student_config)
    dtype = next(student.parameters()).dtype
    xs, y = _as_tensors(x_scalp, labels, dtype)
    xe, _ = _as_tensors(x_ear, labels, dtype)
    t_opt = _make_optimizer(teacher, config)
    s_opt = _make_optimizer(student, config)
    teacher.train()
    student.train()
    t_trace, s_trace = [], []
    for epoch in range(config.epochs):
        order = _epoch_order(xs.shape[0], epoch, config.seed)
        t_losses, s_losses = [], []
        for start in range(0, xs.shape[0], config.batch_size):
            idx = order[start:start + config.batch_size]
            t_logits, _ = teacher(xs[idx])
            t_loss = ce_loss(t_logits, y[idx])
            t_opt.zero_grad()
            t_loss.backward()
            t_opt.step()

            with torch.no_grad():
                _, t_feat = teacher(xs[idx])
            logits, s_feat = student(xe[idx])
            s_loss = kd_loss(logits, s_feat, t_feat, y[idx], config.kd_weight)
            s_opt.zero_grad()
            s_loss.backward()
            s_opt.step()
            t_losses.append(float(t_loss.detach()))
            s_losses.append(float(s_loss.detach()))
        t_trace.append(float(np.mean(t_losses)))
        s_trace.append(float(np.mean(s_losses)))
    teacher.eval()
    student.eval()
    return TrainResult(
        model=student, loss_trace=s_trace,
        teacher=teacher, teacher_loss_trace=t_trace,
    )


def fold_train_config(config: TrainConfig, fold_index: int) -> TrainConfig:
    """Derive the per-fold seed (seed + fold_index) used by LOSO runs."""
    return replace(config, seed=config.seed + fold_index)
