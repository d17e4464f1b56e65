"""Channel-quality rejection and derivation extraction.

The preprocessing chain bandpass-filters a recording, rejects noisy ear
channels from pairwise derivation band power, and reduces each modality
to three derivation channels:

  scalp: C3-O1, C4-O2, A1-A2
  ear:   L-R (left vs right ear mean), LE and RE (canal vs concha per ear)
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    AllChannelsRejected,
    MissingChannel,
    NotEnoughChannels,
    RecordingRejected,
)
from .signal_core import Recording, band_power, filter_recording

SCALP_PAIRS = [("C3", "O1"), ("C4", "O2"), ("A1", "A2")]
SCALP_DERIVATION_NAMES = ["C3-O1", "C4-O2", "A1-A2"]
SCALP_CHANNELS = [ch for pair in SCALP_PAIRS for ch in pair]

LEFT_CANAL = ["ELA", "ELB"]
LEFT_CONCHA = ["ELE", "ELI", "ELG", "ELK"]
RIGHT_CANAL = ["ERA", "ERB"]
RIGHT_CONCHA = ["ERE", "ERI", "ERG", "ERK"]
LEFT_EAR = LEFT_CANAL + LEFT_CONCHA
RIGHT_EAR = RIGHT_CANAL + RIGHT_CONCHA
EAR_CHANNELS = LEFT_EAR + RIGHT_EAR
EAR_DERIVATION_NAMES = ["L-R", "LE", "RE"]

REJECTION_BAND_HZ = (10.0, 35.0)
REJECTION_Z_THRESHOLD = 3.0
MAD_TO_SIGMA = 1.4826
_LOG_FLOOR = 1e-300


@dataclass
class DerivationSet:
    """Three derived channels [T_total, 3] at the source sample rate."""

    names: list[str]
    data: np.ndarray
    sample_rate: float

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if len(self.names) != 3 or self.data.shape[1] != 3:
            raise ValueError("a derivation set has exactly 3 channels")


@dataclass
class RejectionReport:
    """Outcome of power-based ear channel rejection.

    pair_power[i, j] is the 10-35 Hz power of channel_i - channel_j
    (diagonal undefined, stored as NaN). channel_medians[i] is the median
    of row i over j != i. A channel is rejected when its median power is a
    high outlier of the log-power distribution; threshold_value is the
    power above which a median is rejected.
    """

    channel_ids: list[str]
    pair_power: np.ndarray
    channel_medians: np.ndarray
    rejected: set[str]
    threshold_value: float

    def to_dict(self) -> dict:
        return {
            "channel_ids": list(self.channel_ids),
            "pair_power": [
                [None if i == j else float(self.pair_power[i, j])
                 for j in range(len(self.channel_ids))]
                for i in range(len(self.channel_ids))
            ],
            "channel_medians": [float(m) for m in self.channel_medians],
            "rejected": sorted(self.rejected),
            "threshold_value": float(self.threshold_value),
        }


def pairwise_band_power(ear_recording: Recording,
                        band: tuple[float, float] = REJECTION_BAND_HZ) -> np.ndarray:
    """Band power of every pairwise derivation channel_i - channel_j.

    Expects an already bandpass-filtered recording. The result is a
    symmetric [C, C] matrix with NaN on the diagonal.
    """
    n = ear_recording.n_channels
    if n < 2:
        raise NotEnoughChannels("pairwise band power needs at least 2 channels")
    data = ear_recording.data
    fs = ear_recording.sample_rate
    power = np.full((n, n), np.nan)
    for i in range(n):
        for j in range(i + 1, n):
            p = band_power(data[:, i] - data[:, j], fs, band[0], band[1])
            power[i, j] = p
            power[j, i] = p
    return power


def reject_channels(pair_power: np.ndarray,
                    channel_ids: list[str] | None = None,
                    z_threshold: float = REJECTION_Z_THRESHOLD) -> RejectionReport:
    """Reject channels whose median pairwise power is a high outlier.

    The rule is one-sided on log medians: channel i is rejected when
    log(m_i) > median(log m) + z_threshold * 1.4826 * MAD(log m). Working
    on log offsets makes the rejected set invariant to uniform scaling.
    """
    pair_power = np.asarray(pair_power, dtype=np.float64)
    n = pair_power.shape[0]
    if channel_ids is None:
        channel_ids = [str(i) for i in range(n)]
    if len(channel_ids) != n:
        raise ValueError("channel_ids length does not match matrix size")

    medians = np.empty(n)
    for i in range(n):
        others = np.delete(pair_power[i], i)
        medians[i] = np.median(others)

    log_m = np.log(np.maximum(medians, _LOG_FLOOR))
    center = np.median(log_m)
    mad = np.median(np.abs(log_m - center))
    log_threshold = center + z_threshold * MAD_TO_SIGMA * mad
    rejected = {channel_ids[i] for i in range(n) if log_m[i] > log_threshold}
    if len(rejected) == n:
        raise AllChannelsRejected("rejection rule removed every channel")
    return RejectionReport(
        channel_ids=list(channel_ids),
        pair_power=pair_power,
        channel_medians=medians,
        rejected=rejected,
        threshold_value=float(np.exp(log_threshold)),
    )


def scalp_derivations(recording: Recording) -> DerivationSet:
    """Extract the three scalp derivations C3-O1, C4-O2, A1-A2."""
    for name in SCALP_CHANNELS:
        if name not in recording.channel_ids:
            raise MissingChannel(name)
    columns = [recording.channel(a) - recording.channel(b) for a, b in SCALP_PAIRS]
    return DerivationSet(
        names=list(SCALP_DERIVATION_NAMES),
        data=np.column_stack(columns),
        sample_rate=recording.sample_rate,
    )


def _group_mean(recording: Recording, group: list[str],
                usable: set[str], label: str) -> np.ndarray:
    members = [ch for ch in group if ch in usable and ch in recording.channel_ids]
    if not members:
        raise RecordingRejected(f"no usable channels in {label} group {group}")
    return np.mean([recording.channel(ch) for ch in members], axis=0)


def ear_derivations(recording: Recording, usable: set[str]) -> DerivationSet:
    """Extract L-R, LE and RE from the 12-channel ear montage.

    Group means are taken over usable channels only. If any of the four
    canal/concha subgroups has no usable member the whole recording is
    unusable (RecordingRejected), since a derivation cannot be formed.
    """
    unknown = usable - set(recording.channel_ids)
    if unknown:
        raise ValueError(f"usable set names channels not in recording: {sorted(unknown)}")

    canal_l = _group_mean(recording, LEFT_CANAL, usable, "left canal")
    concha_l = _group_mean(recording, LEFT_CONCHA, usable, "left concha")
    canal_r = _group_mean(recording, RIGHT_CANAL, usable, "right canal")
    concha_r = _group_mean(recording, RIGHT_CONCHA, usable, "right concha")
    left_mean = _group_mean(recording, LEFT_EAR, usable, "left ear")
    right_mean = _group_mean(recording, RIGHT_EAR, usable, "right ear")

    data = np.column_stack([
        left_mean - right_mean,   # L-R
        canal_l - concha_l,       # LE
        canal_r - concha_r,       # RE
    ])
    return DerivationSet(
        names=list(EAR_DERIVATION_NAMES),
        data=data,
        sample_rate=recording.sample_rate,
    )


def preprocess_pair(scalp: Recording, ear: Recording,
                    ) -> tuple[DerivationSet, DerivationSet, RejectionReport]:
    """Full per-subject preprocessing: filter, reject, derive.

    Returns (scalp derivations, ear derivations, rejection report).
    Raises RecordingRejected when the ear derivations cannot be formed
    after channel rejection.
    """
    scalp_f = filter_recording(scalp)
    ear_f = filter_recording(ear)
    power = pairwise_band_power(ear_f)
    report = reject_channels(power, list(ear_f.channel_ids))
    usable = set(ear_f.channel_ids) - report.rejected
    ear_ds = ear_derivations(ear_f, usable)
    scalp_ds = scalp_derivations(scalp_f)
    return scalp_ds, ear_ds, report
