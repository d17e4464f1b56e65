"""File-level pipeline stages shared by the CLI and the HTTP service.

Directory layout:

    synth out:        <out>/s01/{scalp,ear}/<container>, <out>/s01/hypnogram.txt
    preprocess out:   <out>/s01/{scalp,ear}/<derivation container>,
                      <out>/s01/rejection_report.json, <out>/s01/hypnogram.txt,
                      <out>/preprocess_summary.json
    train out:        <out>/model.ckpt [, teacher.ckpt], <out>/loss.csv
    evaluate out:     <out>/metrics.json, <out>/confusion.csv [, embedding.csv]
    report out:       <path>.md, <path>.csv [, <path>.svg]

Every stage writes a run_manifest.json into its output directory.
"""
from __future__ import annotations

import csv
import json
from dataclasses import replace
from pathlib import Path

import numpy as np

from .dataset.containers import (
    load_hypnogram,
    load_recording_container,
    save_hypnogram,
    save_recording_container,
)
from .dataset.epochs import STAGE_NAMES, make_paired_epochs, stack_paired_epochs
from .dataset.synth import SynthConfig, generate_subject
from .errors import CheckpointMismatch, RecordingRejected, UsageError
from .evaluation import (
    SubjectEpochs,
    confusion,
    embed_2d,
    extract_features,
    metrics_report,
    predict,
    train_fold,
)
from .manifest import RunManifest
from .models import ModelConfig, load_checkpoint, save_checkpoint
from .preprocess import DerivationSet, preprocess_pair
from .signal_core import Recording
from .training import STRATEGIES, TrainConfig, fold_train_config

SCALP_DIR = "scalp"
EAR_DIR = "ear"
HYPNOGRAM_FILE = "hypnogram.txt"


# --- synth ---

def run_synth(config: SynthConfig, out_dir: str | Path, seed: int) -> dict:
    """Generate subject containers and hypnograms under out_dir."""
    config.validate()
    out_dir = Path(out_dir)
    manifest = RunManifest("synth", {"config": config.to_dict(), "out": str(out_dir)},
                           seed=seed)
    subject_ids = []
    for index in range(config.n_subjects):
        subject = generate_subject(config, index, seed)
        subject_dir = out_dir / subject.subject_id
        save_recording_container(subject.scalp, subject_dir / SCALP_DIR)
        save_recording_container(subject.ear, subject_dir / EAR_DIR)
        save_hypnogram(subject.labels, subject_dir / HYPNOGRAM_FILE)
        subject_ids.append(subject.subject_id)
        manifest.add_output(subject_dir)
    manifest_path = manifest.write(out_dir)
    return {
        "out_dir": str(out_dir),
        "subjects": subject_ids,
        "manifest": str(manifest_path),
    }


# --- preprocess ---

def list_subject_dirs(data_dir: str | Path) -> list[Path]:
    data_dir = Path(data_dir)
    if not data_dir.is_dir():
        raise FileNotFoundError(f"no such data directory: {data_dir}")
    subject_dirs = sorted(
        p for p in data_dir.iterdir()
        if p.is_dir() and (p / HYPNOGRAM_FILE).is_file()
    )
    if not subject_dirs:
        raise FileNotFoundError(f"no subject directories under {data_dir}")
    return subject_dirs


def _derivation_container(ds: DerivationSet) -> Recording:
    return Recording(list(ds.names), ds.data, ds.sample_rate)


def run_preprocess(in_dir: str | Path, out_dir: str | Path) -> dict:
    """Filter, reject channels and derive 3-channel inputs for every subject."""
    in_dir, out_dir = Path(in_dir), Path(out_dir)
    manifest = RunManifest("preprocess", {"in": str(in_dir), "out": str(out_dir)})
    manifest.add_input(in_dir)
    processed, rejected_recordings = [], []
    for subject_dir in list_subject_dirs(in_dir):
        subject_id = subject_dir.name
        scalp = load_recording_container(subject_dir / SCALP_DIR)
        ear = load_recording_container(subject_dir / EAR_DIR)
        labels = load_hypnogram(subject_dir / HYPNOGRAM_FILE)
        target = out_dir / subject_id
        try:
            scalp_ds, ear_ds, report = preprocess_pair(scalp, ear)
        except RecordingRejected as exc:
            rejected_recordings.append({"subject": subject_id, "reason": exc.reason})
            continue
        save_recording_container(_derivation_container(scalp_ds), target / SCALP_DIR)
        save_recording_container(_derivation_container(ear_ds), target / EAR_DIR)
        save_hypnogram(labels, target / HYPNOGRAM_FILE)
        with open(target / "rejection_report.json", "w") as fh:
            json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        processed.append(subject_id)
        manifest.add_output(target)
    summary = {
        "subjects": processed,
        "rejected_recordings": rejected_recordings,
    }
    summary_path = out_dir / "preprocess_summary.json"
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(summary_path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    manifest.add_output(summary_path)
    manifest_path = manifest.write(out_dir)
    return {**summary, "out_dir": str(out_dir), "manifest": str(manifest_path)}


# --- loading preprocessed data ---

def load_subject_epochs(subject_dir: str | Path) -> SubjectEpochs:
    """Assemble paired, z-scored epochs from a preprocessed subject directory."""
    subject_dir = Path(subject_dir)
    scalp = load_recording_container(subject_dir / SCALP_DIR)
    ear = load_recording_container(subject_dir / EAR_DIR)
    labels = load_hypnogram(subject_dir / HYPNOGRAM_FILE)
    scalp_ds = DerivationSet(list(scalp.channel_ids), scalp.data, scalp.sample_rate)
    ear_ds = DerivationSet(list(ear.channel_ids), ear.data, ear.sample_rate)
    paired = make_paired_epochs(scalp_ds, ear_ds, labels, subject_dir.name)
    xs, xe, y = stack_paired_epochs(paired)
    return SubjectEpochs(subject_dir.name, xs, xe, y)


def load_cohort(data_dir: str | Path) -> list[SubjectEpochs]:
    return [load_subject_epochs(p) for p in list_subject_dirs(data_dir)]


def resolve_fold(subjects: list[SubjectEpochs], fold: int,
                 ) -> tuple[list[SubjectEpochs], SubjectEpochs]:
    if not 0 <= fold < len(subjects):
        raise UsageError(f"--fold {fold} out of range for {len(subjects)} subjects")
    test = subjects[fold]
    train = [s for s in subjects if s.subject_id != test.subject_id]
    return train, test


# --- train ---

def _write_loss_csv(path: Path, trace: list[float],
                    teacher_trace: list[float] | None) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        if teacher_trace is None:
            writer.writerow(["epoch", "loss"])
            for i, loss in enumerate(trace):
                writer.writerow([i, f"{loss:.10g}"])
        else:
            writer.writerow(["epoch", "loss", "teacher_loss"])
            for i, (loss, t_loss) in enumerate(zip(trace, teacher_trace)):
                writer.writerow([i, f"{loss:.10g}", f"{t_loss:.10g}"])


def run_train(strategy: str, arch: str, data_dir: str | Path, fold: int,
              out_dir: str | Path, seed: int,
              train_config: TrainConfig | None = None,
              model_config: ModelConfig | None = None,
              teacher_checkpoint: str | Path | None = None) -> dict:
    """Train one LOSO fold under a strategy and write checkpoint + loss trace."""
    if strategy not in STRATEGIES:
        raise UsageError(f"unknown strategy {strategy!r}; choose from {STRATEGIES}")
    if strategy == "kd-offline" and teacher_checkpoint is None:
        raise UsageError("kd-offline requires --teacher (path to a scalp checkpoint)")
    out_dir = Path(out_dir)
    data_dir = Path(data_dir)

    train_config = train_config or TrainConfig()
    model_config = model_config or ModelConfig(arch=arch)
    if model_config.arch != arch:
        model_config = replace(model_config, arch=arch)
    model_config.validate()

    subjects = load_cohort(data_dir)
    train_subjects, test_subject = resolve_fold(subjects, fold)
    # The root seed (flag or env) overrides the config seed; the fold seed
    # derives from it as seed + fold_index.
    base = replace(train_config, seed=train_config.seed if seed is None else seed)
    cfg = fold_train_config(base, fold)
    xs = np.concatenate([s.x_scalp for s in train_subjects])
    xe = np.concatenate([s.x_ear for s in train_subjects])
    y = np.concatenate([s.labels for s in train_subjects])

    teacher = None
    if teacher_checkpoint is not None:
        teacher, extra = load_checkpoint(teacher_checkpoint)
        if extra.get("fold") != fold:
            raise CheckpointMismatch(
                f"teacher checkpoint was trained for fold {extra.get('fold')}, "
                f"requested fold {fold}"
            )

    manifest = RunManifest(
        "train",
        {
            "strategy": strategy, "arch": arch, "data": str(data_dir),
            "fold": fold, "out": str(out_dir),
            "train_config": cfg.to_dict(), "model_config": model_config.to_dict(),
            "teacher": str(teacher_checkpoint) if teacher_checkpoint else None,
        },
        seed=seed,
    )
    manifest.add_input(data_dir)
    if teacher_checkpoint is not None:
        manifest.add_input(teacher_checkpoint)

    model, teacher, result = train_fold(
        strategy, model_config, xs, xe, y, cfg, teacher=teacher
    )

    extra = {
        "strategy": strategy,
        "fold": fold,
        "test_subject": test_subject.subject_id,
        "seed": seed,
        "train_config": cfg.to_dict(),
        "eval_modality": "scalp" if strategy == "supervised-scalp" else "ear",
        "samples_per_epoch": int(xs.shape[1]),
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    checkpoint_path = save_checkpoint(model, out_dir / "model.ckpt", extra=extra)
    outputs = [checkpoint_path]
    if strategy == "kd-online" and teacher is not None:
        outputs.append(save_checkpoint(
            teacher, out_dir / "teacher.ckpt",
            extra={**extra, "eval_modality": "scalp", "role": "teacher"},
        ))
    loss_csv = out_dir / "loss.csv"
    _write_loss_csv(loss_csv, result.loss_trace, result.teacher_loss_trace
                    if strategy == "kd-online" else None)
    outputs.append(loss_csv)
    manifest.add_output(*outputs)
    manifest_path = manifest.write(out_dir)
    final_loss = result.loss_trace[-1] if result.loss_trace else None
    return {
        "checkpoint": str(checkpoint_path),
        "loss_csv": str(loss_csv),
        "final_loss": final_loss,
        "test_subject": test_subject.subject_id,
        "manifest": str(manifest_path),
    }


# --- evaluate ---

def run_evaluate(checkpoint: str | Path, data_dir: str | Path, fold: int,
                 out_dir: str | Path, embed_method: str | None = None,
                 embed_seed: int = 0) -> dict:
    """Score a checkpoint on its held-out subject; write metrics and confusion."""
    checkpoint = Path(checkpoint)
    if not checkpoint.is_file():
        raise FileNotFoundError(f"no such checkpoint: {checkpoint}")
    model, extra = load_checkpoint(checkpoint)
    subjects = load_cohort(data_dir)
    _, test_subject = resolve_fold(subjects, fold)
    if extra.get("fold") is not None and extra["fold"] != fold:
        raise CheckpointMismatch(
            f"checkpoint was trained for fold {extra['fold']}, requested {fold}"
        )
    epochs = (test_subject.x_scalp if extra.get("eval_modality") == "scalp"
              else test_subject.x_ear)
    if extra.get("samples_per_epoch") not in (None, int(epochs.shape[1])):
        raise CheckpointMismatch(
            f"checkpoint expects {extra['samples_per_epoch']} samples per epoch, "
            f"data has {epochs.shape[1]}"
        )

    manifest = RunManifest(
        "evaluate",
        {"checkpoint": str(checkpoint), "data": str(data_dir), "fold": fold,
         "out": str(out_dir), "embed": embed_method},
        seed=extra.get("seed"),
    )
    manifest.add_input(checkpoint, data_dir)

    preds = predict(model, epochs)
    cm = confusion(preds, test_subject.labels)
    report = metrics_report(cm)
    payload = report.to_dict()
    payload["strategy"] = extra.get("strategy")
    payload["fold"] = fold
    payload["test_subject"] = test_subject.subject_id

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    metrics_path = out_dir / "metrics.json"
    with open(metrics_path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    confusion_path = out_dir / "confusion.csv"
    with open(confusion_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["true\\pred"] + STAGE_NAMES)
        for name, row in zip(STAGE_NAMES, cm):
            writer.writerow([name] + [int(c) for c in row])
    outputs = [metrics_path, confusion_path]

    if embed_method is not None:
        scalp_feats, scalp_labels, scalp_tags = extract_features(
            model, test_subject.x_scalp, test_subject.labels, "scalp"
        )
        ear_feats, ear_labels, ear_tags = extract_features(
            model, test_subject.x_ear, test_subject.labels, "ear"
        )
        export = embed_2d(
            np.concatenate([scalp_feats, ear_feats]),
            np.concatenate([scalp_labels, ear_labels]),
            scalp_tags + ear_tags,
            method=embed_method, seed=embed_seed,
        )
        embedding_path = out_dir / "embedding.csv"
        with open(embedding_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["x", "y", "stage", "domain"])
            for point, label, tag in zip(export.points, export.labels,
                                         export.domain_tags):
                writer.writerow([f"{point[0]:.8g}", f"{point[1]:.8g}",
                                 STAGE_NAMES[int(label)], tag])
        outputs.append(embedding_path)

    manifest.add_output(*outputs)
    manifest_path = manifest.write(out_dir)
    return {**payload, "metrics_json": str(metrics_path),
            "confusion_csv": str(confusion_path), "manifest": str(manifest_path)}


# --- report ---

def _svg_scatter(points: np.ndarray, tags: list[str], path: Path,
                 size: int = 480) -> None:
    """Minimal deterministic SVG scatter colored by domain tag."""
    colors = {"scalp": "#1f77b4", "ear": "#d62728"}
    lo = points.min(axis=0)
    hi = points.max(axis=0)
    span = np.maximum(hi - lo, 1e-12)
    margin = 30
    scale = (size - 2 * margin) / span
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}">',
        f'<rect width="{size}" height="{size}" fill="white"/>',
    ]
    for point, tag in zip(points, tags):
        x = margin + (point[0] - lo[0]) * scale[0]
        y = size - margin - (point[1] - lo[1]) * scale[1]
        lines.append(
            f'<circle cx="{x:.2f}" cy="{y:.2f}" r="3" '
            f'fill="{colors.get(tag, "#777777")}" fill-opacity="0.6"/>'
        )
    for i, (tag, color) in enumerate(colors.items()):
        y = 20 + 18 * i
        lines.append(f'<circle cx="20" cy="{y}" r="5" fill="{color}"/>')
        lines.append(
            f'<text x="32" y="{y + 4}" font-family="sans-serif" '
            f'font-size="13">{tag}</text>'
        )
    lines.append("</svg>")
    path.write_text("\n".join(lines) + "\n")


def run_report(run_dirs: list[str | Path], out_path: str | Path) -> dict:
    """Aggregate evaluation runs into one table plus optional embedding plots."""
    if not run_dirs:
        raise UsageError("report needs at least one run directory")
    rows = []
    embeddings = []
    for run_dir in run_dirs:
        run_dir = Path(run_dir)
        metrics_path = run_dir / "metrics.json"
        if not metrics_path.is_file():
            raise FileNotFoundError(f"no metrics.json in {run_dir}")
        metrics = json.loads(metrics_path.read_text())
        strategy = metrics.get("strategy") or "unknown"
        modality = "Scalp-EEG" if strategy == "supervised-scalp" else "Ear-EEG"
        rows.append({
            "run": str(run_dir),
            "strategy": strategy,
            "modality": modality,
            "accuracy": metrics["accuracy"],
            "kappa": metrics["kappa"],
            "macro_f1": metrics.get("macro_f1"),
            "fold": metrics.get("fold"),
        })
        if (run_dir / "embedding.csv").is_file():
            embeddings.append(run_dir / "embedding.csv")

    method_names = {
        "supervised-scalp": "Supervised",
        "supervised-ear": "Supervised",
        "transfer": "TL",
        "kd-offline": "KD (Offline)",
        "kd-online": "KD (Online)",
    }
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest("report", {"runs": [str(r) for r in run_dirs],
                                      "out": str(out_path)})
    manifest.add_input(*run_dirs)

    md_lines = [
        "| Modality | Method | ACC | kappa | MF1 | Fold |",
        "|---|---|---|---|---|---|",
    ]
    for row in rows:
        mf1 = f"{row['macro_f1'] * 100:.2f}" if row["macro_f1"] is not None else "-"
        md_lines.append(
            f"| {row['modality']} | {method_names.get(row['strategy'], row['strategy'])} "
            f"| {row['accuracy'] * 100:.2f} | {row['kappa']:.3f} | {mf1} "
            f"| {row['fold']} |"
        )
    out_path.write_text("\n".join(md_lines) + "\n")

    csv_path = out_path.with_suffix(".csv")
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["modality", "method", "accuracy", "kappa", "macro_f1", "fold"])
        for row in rows:
            writer.writerow([
                row["modality"], method_names.get(row["strategy"], row["strategy"]),
                f"{row['accuracy']:.6f}", f"{row['kappa']:.6f}",
                "" if row["macro_f1"] is None else f"{row['macro_f1']:.6f}",
                row["fold"],
            ])
    outputs = [out_path, csv_path]

    for embedding_csv in embeddings:
        points, tags = [], []
        with open(embedding_csv, newline="") as fh:
            for record in csv.DictReader(fh):
                points.append((float(record["x"]), float(record["y"])))
                tags.append(record["domain"])
        svg_path = out_path.parent / (embedding_csv.parent.name + "_embedding.svg")
        _svg_scatter(np.array(points), tags, svg_path)
        outputs.append(svg_path)

    manifest.add_output(*outputs)
    manifest_path = manifest.write(out_path.parent)
    return {
        "table_markdown": str(out_path),
        "table_csv": str(csv_path),
        "rows": rows,
        "embeddings_svg": [str(p) for p in outputs[2:]],
        "manifest": str(manifest_path),
    }
