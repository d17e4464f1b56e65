"""Metrics, leave-one-subject-out evaluation and feature-distribution export."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .dataset.epochs import NUM_STAGES, loso_splits
from .errors import EmptyMatrix, InvalidLabel, NotEnoughPoints, ShapeError
from .models import ModelConfig, SleepStager, build_stager, forward_batch
from .training import (
    TrainConfig,
    fold_train_config,
    train_offline_kd,
    train_online_kd,
    train_supervised,
    train_transfer,
)

# JSON schema of the metrics report emitted by evaluation commands.
METRICS_JSON_SCHEMA = {
    "type": "object",
    "required": ["accuracy", "kappa", "kappa_degenerate", "f1_per_class",
                 "macro_f1", "confusion", "n_epochs"],
    "properties": {
        "accuracy": {"type": "number", "minimum": 0.0, "maximum": 1.0},
        "kappa": {"type": "number", "minimum": -1.0, "maximum": 1.0},
        "kappa_degenerate": {"type": "boolean"},
        "f1_per_class": {
            "type": "array", "minItems": 5, "maxItems": 5,
            "items": {"type": ["number", "null"]},
        },
        "macro_f1": {"type": ["number", "null"]},
        "confusion": {
            "type": "array", "minItems": 5, "maxItems": 5,
            "items": {
                "type": "array", "minItems": 5, "maxItems": 5,
                "items": {"type": "integer", "minimum": 0},
            },
        },
        "n_epochs": {"type": "integer", "minimum": 0},
    },
    "additionalProperties": True,
}


@dataclass
class MetricsReport:
    """Headline metrics derived from one confusion matrix."""

    accuracy: float
    kappa: float
    kappa_degenerate: bool
    f1_per_class: list[float | None]
    macro_f1: float | None
    confusion: np.ndarray

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "kappa": self.kappa,
            "kappa_degenerate": self.kappa_degenerate,
            "f1_per_class": self.f1_per_class,
            "macro_f1": self.macro_f1,
            "confusion": [[int(c) for c in row] for row in self.confusion],
            "n_epochs": int(self.confusion.sum()),
        }


@dataclass
class EmbeddingExport:
    """2-D feature embedding with stage labels and modality tags."""

    points: np.ndarray       # [N, 2]
    labels: np.ndarray       # [N] stage codes
    domain_tags: list[str]   # "scalp" | "ear" per row


def confusion(preds: np.ndarray, labels: np.ndarray,
              n_classes: int = NUM_STAGES) -> np.ndarray:
    """Count matrix with rows = true stage, columns = predicted stage."""
    preds = np.asarray(preds, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if preds.shape != labels.shape:
        raise ShapeError(f"preds {preds.shape} vs labels {labels.shape}")
    if preds.size and not (
        (0 <= preds.min()) and (preds.max() < n_classes)
        and (0 <= labels.min()) and (labels.max() < n_classes)
    ):
        raise InvalidLabel(f"values must be in 0..{n_classes - 1}")
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (labels, preds), 1)
    return cm


def accuracy(cm: np.ndarray) -> float:
    cm = np.asarray(cm)
    total = cm.sum()
    if total == 0:
        raise EmptyMatrix("confusion matrix has no counts")
    return float(np.trace(cm) / total)


def cohen_kappa(cm: np.ndarray) -> float:
    """(p_o - p_e) / (1 - p_e); returns 0.0 in the degenerate p_e = 1 case."""
    cm = np.asarray(cm, dtype=np.float64)
    total = cm.sum()
    if total == 0:
        raise EmptyMatrix("confusion matrix has no counts")
    p_o = np.trace(cm) / total
    p_e = float((cm.sum(axis=1) * cm.sum(axis=0)).sum()) / total ** 2
    if p_e >= 1.0:
        return 0.0
    return float((p_o - p_e) / (1.0 - p_e))


def kappa_degenerate(cm: np.ndarray) -> bool:
    cm = np.asarray(cm, dtype=np.float64)
    total = cm.sum()
    if total == 0:
        raise EmptyMatrix("confusion matrix has no counts")
    return bool(float((cm.sum(axis=1) * cm.sum(axis=0)).sum()) / total ** 2 >= 1.0)


def per_class_f1(cm: np.ndarray) -> tuple[list[float | None], float | None]:
    """F1 per stage plus the macro mean.

    A class that never occurs and is never predicted (TP = FP = FN = 0) has
    undefined F1 (None) and is excluded from the macro mean.
    """
    cm = np.asarray(cm, dtype=np.float64)
    if cm.sum() == 0:
        raise EmptyMatrix("confusion matrix has no counts")
    f1s: list[float | None] = []
    for k in range(cm.shape[0]):
        tp = cm[k, k]
        fp = cm[:, k].sum() - tp
        fn = cm[k, :].sum() - tp
        if tp == 0 and fp == 0 and fn == 0:
            f1s.append(None)
        else:
            f1s.append(float(2 * tp / (2 * tp + fp + fn)))
    defined = [f for f in f1s if f is not None]
    macro = float(np.mean(defined)) if defined else None
    return f1s, macro


def metrics_report(cm: np.ndarray) -> MetricsReport:
    f1s, macro = per_class_f1(cm)
    return MetricsReport(
        accuracy=accuracy(cm),
        kappa=cohen_kappa(cm),
        kappa_degenerate=kappa_degenerate(cm),
        f1_per_class=f1s,
        macro_f1=macro,
        confusion=np.asarray(cm, dtype=np.int64),
    )


def predict(model: SleepStager, epochs: np.ndarray) -> np.ndarray:
    logits, _ = forward_batch(model, epochs)
    return logits.argmax(axis=1)


def extract_features(model: SleepStager, epochs: np.ndarray, labels: np.ndarray,
                     domain_tag: str) -> tuple[np.ndarray, np.ndarray, list[str]]:
    """Distillation-layer features for a set of epochs, in eval mode.

    Returns (features [N, D], labels [N], tags [N]).
    """
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape[0] != np.asarray(epochs).shape[0]:
        raise ShapeError(f"{np.asarray(epochs).shape[0]} epochs but {labels.shape[0]} labels")
    _, feats = forward_batch(model, epochs)
    return feats, labels, [domain_tag] * feats.shape[0]


def embed_2d(features: np.ndarray, labels: np.ndarray, domain_tags: list[str],
             method: str = "pca", seed: int = 0) -> EmbeddingExport:
    """Project features to 2-D for distribution plots.

    "pca" is deterministic (top-2 principal components; each component's
    largest-magnitude loading is made positive). "sne" runs a seeded
    stochastic neighbor embedding.
    """
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n = features.shape[0]
    if n < 3:
        raise NotEnoughPoints(f"need >= 3 points, got {n}")
    if labels.shape[0] != n or len(domain_tags) != n:
        raise ShapeError("features, labels and domain_tags must align")
    if method == "pca":
        centered = features - features.mean(axis=0)
        _, _, vt = np.linalg.svd(centered, full_matrices=False)
        comps = vt[:2]
        for i in range(comps.shape[0]):
            if comps[i, np.argmax(np.abs(comps[i]))] < 0:
                comps[i] = -comps[i]
        points = centered @ comps.T
    elif method == "sne":
        from sklearn.manifold import TSNE

        perplexity = min(30.0, (n - 1) / 3.0)
        tsne = TSNE(
            n_components=2, perplexity=perplexity, random_state=seed,
            init="pca", max_iter=1000,
        )
        points = tsne.fit_transform(features).astype(np.float64)
    else:
        raise ValueError(f"unknown embedding method {method!r}")
    return EmbeddingExport(points=points, labels=labels, domain_tags=list(domain_tags))


# --- leave-one-subject-out evaluation ---

@dataclass
class SubjectEpochs:
    """All paired epochs of one subject, stacked for training."""

    subject_id: str
    x_scalp: np.ndarray   # [N, T, 3] float32
    x_ear: np.ndarray     # [N, T, 3] float32
    labels: np.ndarray    # [N] int64


@dataclass
class FoldOutcome:
    fold_index: int
    test_subject: str
    report: MetricsReport
    predictions: np.ndarray
    labels: np.ndarray
    model: SleepStager
    teacher: SleepStager | None = None


@dataclass
class LosoResult:
    strategy: str
    fold_outcomes: list[FoldOutcome]
    pooled: MetricsReport

    @property
    def fold_reports(self) -> list[MetricsReport]:
        return [f.report for f in self.fold_outcomes]


def _concat_subjects(subjects: list[SubjectEpochs],
                     ids: set[str]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    chosen = [s for s in subjects if s.subject_id in ids]
    xs = np.concatenate([s.x_scalp for s in chosen])
    xe = np.concatenate([s.x_ear for s in chosen])
    y = np.concatenate([s.labels for s in chosen])
    return xs, xe, y


def train_fold(strategy: str, model_config: ModelConfig, xs: np.ndarray,
               xe: np.ndarray, y: np.ndarray, config: TrainConfig,
               teacher: SleepStager | None = None):
    """Train one LOSO fold under the given strategy.

    Returns (model used for prediction, teacher or None, TrainResult).
    """
    mc = replace(model_config, seed=config.seed)
    if strategy == "supervised-scalp":
        result = train_supervised(build_stager(mc), xs, y, config)
        return result.model, None, result
    if strategy == "supervised-ear":
        result = train_supervised(build_stager(mc), xe, y, config)
        return result.model, None, result
    if strategy == "transfer":
        result = train_transfer(mc, xs, y, xe, y, config)
        return result.model, None, result
    if strategy == "kd-offline":
        if teacher is None:
            teacher = train_supervised(build_stager(mc), xs, y, config).model
        result = train_offline_kd(teacher, mc, xs, xe, y, config)
        return result.model, teacher, result
    if strategy == "kd-online":
        result = train_online_kd(mc, mc, xs, xe, y, config)
        return result.model, result.teacher, result
    raise ValueError(f"unknown strategy {strategy!r}")


def eval_inputs(strategy: str, subject: SubjectEpochs) -> np.ndarray:
    """Scalp-supervised models are scored on scalp epochs, all others on ear."""
    return subject.x_scalp if strategy == "supervised-scalp" else subject.x_ear


def loso_evaluate(strategy: str, model_config: ModelConfig,
                  subjects: list[SubjectEpochs], train_config: TrainConfig,
                  teachers: dict[int, SleepStager] | None = None) -> LosoResult:
    """Train and score every LOSO fold; fold k holds out subject k.

    Per-fold reports are emitted alongside a pooled report computed on the
    union of all held-out (prediction, label) pairs. Fold seeds are derived
    as train_config.seed + fold_index. For kd-offline, pretrained teachers
    can be passed per fold (e.g. reusing supervised-scalp fold models);
    otherwise a teacher is trained on the fold's scalp data first.
    """
    plan = loso_splits([s.subject_id for s in subjects])
    by_id = {s.subject_id: s for s in subjects}
    outcomes = []
    for fold_index, (train_ids, test_id) in enumerate(plan.folds):
        cfg = fold_train_config(train_config, fold_index)
        xs, xe, y = _concat_subjects(subjects, train_ids)
        teacher = teachers.get(fold_index) if teachers else None
        model, teacher, _ = train_fold(strategy, model_config, xs, xe, y, cfg, teacher)
        test_subject = by_id[test_id]
        preds = predict(model, eval_inputs(strategy, test_subject))
        cm = confusion(preds, test_subject.labels)
        outcomes.append(FoldOutcome(
            fold_index=fold_index,
            test_subject=test_id,
            report=metrics_report(cm),
            predictions=preds,
            labels=test_subject.labels,
            model=model,
            teacher=teacher,
        ))
    pooled_cm = np.sum([o.report.confusion for o in outcomes], axis=0)
    return LosoResult(strategy=strategy, fold_outcomes=outcomes,
                      pooled=metrics_report(pooled_cm))
