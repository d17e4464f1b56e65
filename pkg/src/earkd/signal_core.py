"""Elementary signal operations: filtering, epoch segmentation, band power.

All functions are pure and operate on numpy arrays in float64; recordings
hold a [T, C] sample matrix in microvolts.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal as sps

from .errors import EmptyResult, InvalidBand, SignalTooShort

EPOCH_SECONDS = 30.0
FILTER_ORDER = 4
BANDPASS_LOW_HZ = 0.2
BANDPASS_HIGH_HZ = 42.0
WELCH_WINDOW_SECONDS = 2.0


@dataclass
class Recording:
    """Multichannel time series with named channels.

    data is [T_total, C] in microvolts; channel order matches channel_ids.
    """

    channel_ids: list[str]
    data: np.ndarray
    sample_rate: float

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2:
            raise ValueError("recording data must be a [T, C] matrix")
        if self.data.shape[1] != len(self.channel_ids):
            raise ValueError(
                f"{self.data.shape[1]} data columns but {len(self.channel_ids)} channel ids"
            )
        if len(set(self.channel_ids)) != len(self.channel_ids):
            raise ValueError("duplicate channel ids")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("recording contains NaN or Inf samples")

    @property
    def n_samples(self) -> int:
        return self.data.shape[0]

    @property
    def n_channels(self) -> int:
        return self.data.shape[1]

    def channel(self, name: str) -> np.ndarray:
        return self.data[:, self.channel_ids.index(name)]


def design_bandpass(sample_rate: float, low: float, high: float,
                    order: int = FILTER_ORDER) -> np.ndarray:
    """Butterworth bandpass in second-order sections."""
    nyq = sample_rate / 2.0
    if not (0.0 < low < high < nyq):
        raise InvalidBand(
            f"band {low}-{high} Hz invalid for sample rate {sample_rate} Hz"
        )
    return sps.butter(order, [low / nyq, high / nyq], btype="bandpass", output="sos")


def bandpass_response_db(sample_rate: float, freqs: np.ndarray,
                         low: float = BANDPASS_LOW_HZ, high: float = BANDPASS_HIGH_HZ,
                         order: int = FILTER_ORDER) -> np.ndarray:
    """Magnitude response in dB of the zero-phase bandpass at given frequencies.

    Forward-backward application squares the magnitude, so the returned
    value is 2 * 20*log10(|H|) of the one-pass filter.
    """
    sos = design_bandpass(sample_rate, low, high, order)
    w = 2.0 * np.pi * np.asarray(freqs, dtype=np.float64) / sample_rate
    _, h = sps.sosfreqz(sos, worN=w)
    mag = np.abs(h)
    return 2.0 * 20.0 * np.log10(np.maximum(mag, 1e-300))


def bandpass_filter(x: np.ndarray, sample_rate: float,
                    low: float = BANDPASS_LOW_HZ, high: float = BANDPASS_HIGH_HZ,
                    order: int = FILTER_ORDER) -> np.ndarray:
    """Zero-phase Butterworth bandpass (applied forward then backward).

    Accepts a 1-D signal or a [T, C] matrix (filtered along time).
    Output has the same length; there is no group delay.
    """
    x = np.asarray(x, dtype=np.float64)
    sos = design_bandpass(sample_rate, low, high, order)
    try:
        return sps.sosfiltfilt(sos, x, axis=0)
    except ValueError as exc:
        raise SignalTooShort(
            f"signal of {x.shape[0]} samples too short for order-{order} bandpass"
        ) from exc


def filter_recording(recording: Recording,
                     low: float = BANDPASS_LOW_HZ,
                     high: float = BANDPASS_HIGH_HZ) -> Recording:
    """Bandpass every channel of a recording (whole recording, before epoching)."""
    filtered = bandpass_filter(recording.data, recording.sample_rate, low, high)
    return Recording(list(recording.channel_ids), filtered, recording.sample_rate)


def epoch_samples(sample_rate: float, epoch_seconds: float = EPOCH_SECONDS) -> int:
    return int(round(epoch_seconds * sample_rate))


def segment_array(data: np.ndarray, sample_rate: float,
                  epoch_seconds: float = EPOCH_SECONDS) -> list[np.ndarray]:
    """Cut a [T_total, C] array into consecutive fixed-length epochs.

    Trailing samples that do not fill a whole epoch are discarded;
    concatenating the returned epochs reproduces the retained prefix exactly.
    """
    data = np.asarray(data)
    t_epoch = epoch_samples(sample_rate, epoch_seconds)
    n_epochs = data.shape[0] // t_epoch
    if n_epochs == 0:
        raise EmptyResult(
            f"{data.shape[0]} samples is shorter than one {epoch_seconds} s epoch"
        )
    return [data[i * t_epoch:(i + 1) * t_epoch] for i in range(n_epochs)]


def segment_epochs(recording: Recording,
                   epoch_seconds: float = EPOCH_SECONDS) -> list[np.ndarray]:
    """Segment a recording into [T, C] epoch tensors."""
    return segment_array(recording.data, recording.sample_rate, epoch_seconds)


def band_power(x: np.ndarray, sample_rate: float, low: float, high: float) -> float:
    """Signal power within [low, high] Hz, in squared input units.

    Welch estimate with 2 s Hann windows and 50% overlap, integrated over
    the band, so a unit-amplitude in-band sine yields approximately 0.5.
    """
    x = np.asarray(x, dtype=np.float64)
    nyq = sample_rate / 2.0
    if not (0.0 <= low < high <= nyq):
        raise InvalidBand(
            f"band {low}-{high} Hz invalid for sample rate {sample_rate} Hz"
        )
    nperseg = int(round(WELCH_WINDOW_SECONDS * sample_rate))
    if x.shape[0] < nperseg:
        raise SignalTooShort(
            f"need at least {nperseg} samples for a {WELCH_WINDOW_SECONDS} s window"
        )
    freqs, psd = sps.welch(
        x, fs=sample_rate, window="hann", nperseg=nperseg,
        noverlap=nperseg // 2, scaling="density",
    )
    mask = (freqs >= low) & (freqs <= high)
    return float(np.trapezoid(psd[mask], freqs[mask]))
