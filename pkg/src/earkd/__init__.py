"""Cross-modal knowledge distillation pipeline for ear-EEG sleep staging."""

__version__ = "0.1.0"
