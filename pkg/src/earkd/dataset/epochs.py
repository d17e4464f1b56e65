"""Paired-epoch assembly and leave-one-subject-out splitting."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import AlignmentError, LabelCountMismatch, NotEnoughSubjects
from ..preprocess import DerivationSet
from ..signal_core import EPOCH_SECONDS, segment_array

STAGE_NAMES = ["W", "N1", "N2", "N3", "REM"]
STAGE_CODES = {name: code for code, name in enumerate(STAGE_NAMES)}
NUM_STAGES = 5

_STD_FLOOR = 1e-8


@dataclass
class PairedEpoch:
    """One 30 s window seen through both modalities, plus its stage label."""

    x_scalp: np.ndarray   # [T, 3] float32, z-scored per channel
    x_ear: np.ndarray     # [T, 3] float32, z-scored per channel
    label: int            # stage code 0..4
    subject_id: str


@dataclass
class SplitPlan:
    """Leave-one-subject-out folds: (train subject set, test subject)."""

    folds: list[tuple[set[str], str]]


def zscore_epoch(epoch: np.ndarray) -> np.ndarray:
    """Per-channel z-score within one epoch.

    The standard deviation is floored at 1e-8, so a constant channel maps
    to all zeros.
    """
    x = np.asarray(epoch, dtype=np.float64)
    mean = x.mean(axis=0)
    std = np.maximum(x.std(axis=0), _STD_FLOOR)
    return ((x - mean) / std).astype(np.float32)


def make_paired_epochs(scalp: DerivationSet, ear: DerivationSet,
                       labels: list[int], subject_id: str) -> list[PairedEpoch]:
    """Segment both derivation sets into 30 s epochs and pair them with labels.

    Scalp and ear must cover the same samples; the label count must equal
    the number of whole epochs. Each epoch channel is z-scored.
    """
    if scalp.data.shape[0] != ear.data.shape[0]:
        raise AlignmentError(
            f"scalp has {scalp.data.shape[0]} samples, ear {ear.data.shape[0]}"
        )
    if scalp.sample_rate != ear.sample_rate:
        raise AlignmentError(
            f"scalp at {scalp.sample_rate} Hz, ear at {ear.sample_rate} Hz"
        )
    scalp_epochs = segment_array(scalp.data, scalp.sample_rate, EPOCH_SECONDS)
    ear_epochs = segment_array(ear.data, ear.sample_rate, EPOCH_SECONDS)
    if len(labels) != len(scalp_epochs):
        raise LabelCountMismatch(
            f"{len(labels)} labels for {len(scalp_epochs)} epochs"
        )
    out = []
    for xs, xe, y in zip(scalp_epochs, ear_epochs, labels):
        if not 0 <= int(y) < NUM_STAGES:
            raise LabelCountMismatch(f"stage code {y} outside 0..{NUM_STAGES - 1}")
        out.append(PairedEpoch(
            x_scalp=zscore_epoch(xs),
            x_ear=zscore_epoch(xe),
            label=int(y),
            subject_id=subject_id,
        ))
    return out


def stack_paired_epochs(paired: list[PairedEpoch],
                        ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Stack a paired-epoch list into (x_scalp [N,T,3], x_ear [N,T,3], y [N])."""
    xs = np.stack([p.x_scalp for p in paired])
    xe = np.stack([p.x_ear for p in paired])
    y = np.array([p.label for p in paired], dtype=np.int64)
    return xs, xe, y


def loso_splits(subject_ids: list[str]) -> SplitPlan:
    """One fold per subject: fold k tests subject k, trains on the rest."""
    if len(subject_ids) < 2:
        raise NotEnoughSubjects("leave-one-subject-out needs >= 2 subjects")
    if len(set(subject_ids)) != len(subject_ids):
        raise ValueError("duplicate subject ids")
    folds = []
    for test in subject_ids:
        train = {s for s in subject_ids if s != test}
        folds.append((train, test))
    return SplitPlan(folds=folds)
