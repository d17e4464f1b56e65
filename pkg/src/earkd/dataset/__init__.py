"""Dataset layer: containers, paired epochs, LOSO splits, synthetic generator."""

from .containers import (
    load_hypnogram,
    load_recording_container,
    save_hypnogram,
    save_recording_container,
)
from .epochs import (
    NUM_STAGES,
    STAGE_NAMES,
    PairedEpoch,
    SplitPlan,
    loso_splits,
    make_paired_epochs,
    stack_paired_epochs,
    zscore_epoch,
)
from .synth import SynthConfig, SynthSubject, synth_paired_dataset

__all__ = [
    "NUM_STAGES",
    "STAGE_NAMES",
    "PairedEpoch",
    "SplitPlan",
    "SynthConfig",
    "SynthSubject",
    "load_hypnogram",
    "load_recording_container",
    "loso_splits",
    "make_paired_epochs",
    "save_hypnogram",
    "save_recording_container",
    "stack_paired_epochs",
    "synth_paired_dataset",
    "zscore_epoch",
]
