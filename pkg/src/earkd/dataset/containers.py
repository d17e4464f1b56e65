"""Recording container and hypnogram file formats.

A recording container is a directory holding a JSON manifest plus one raw
binary file per channel (little-endian float32). The layout is bit-exact
and trivially portable:

    <container>/
      manifest.json   {"channel_ids": [...], "sample_rate_hz": ...,
                       "num_samples": ..., "dtype": "float32",
                       "byte_order": "little"}
      <channel>.raw   num_samples float32 values

A hypnogram is a text file with one stage token (W, N1, N2, N3, REM) per
line, one line per 30 s epoch.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..errors import CorruptContainer, InvalidStageToken, UnsupportedFormat
from ..signal_core import Recording
from .epochs import STAGE_CODES, STAGE_NAMES

MANIFEST_NAME = "manifest.json"
_SUPPORTED_DTYPE = "float32"
_SUPPORTED_BYTE_ORDER = "little"


def save_recording_container(recording: Recording, path: str | Path) -> Path:
    """Write a recording as manifest + per-channel raw float32 files."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    manifest = {
        "channel_ids": list(recording.channel_ids),
        "sample_rate_hz": float(recording.sample_rate),
        "num_samples": int(recording.n_samples),
        "dtype": _SUPPORTED_DTYPE,
        "byte_order": _SUPPORTED_BYTE_ORDER,
    }
    with open(path / MANIFEST_NAME, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    for idx, name in enumerate(recording.channel_ids):
        values = np.asarray(recording.data[:, idx], dtype="<f4")
        (path / f"{name}.raw").write_bytes(values.tobytes())
    return path


def load_recording_container(path: str | Path) -> Recording:
    """Load a recording container, validating sizes against the manifest."""
    path = Path(path)
    manifest_path = path / MANIFEST_NAME
    if not manifest_path.is_file():
        raise CorruptContainer(f"no {MANIFEST_NAME} in {path}")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise CorruptContainer(f"unreadable manifest in {path}: {exc}") from exc

    for key in ("channel_ids", "sample_rate_hz", "num_samples", "dtype", "byte_order"):
        if key not in manifest:
            raise CorruptContainer(f"manifest in {path} missing key {key!r}")
    if manifest["dtype"] != _SUPPORTED_DTYPE:
        raise UnsupportedFormat(f"dtype {manifest['dtype']!r} not supported")
    if manifest["byte_order"] != _SUPPORTED_BYTE_ORDER:
        raise UnsupportedFormat(f"byte order {manifest['byte_order']!r} not supported")

    num_samples = int(manifest["num_samples"])
    channels = []
    for name in manifest["channel_ids"]:
        raw_path = path / f"{name}.raw"
        if not raw_path.is_file():
            raise CorruptContainer(f"missing channel file {raw_path.name} in {path}")
        blob = raw_path.read_bytes()
        if len(blob) != num_samples * 4:
            raise CorruptContainer(
                f"{raw_path.name}: {len(blob)} bytes, expected {num_samples * 4}"
            )
        channels.append(np.frombuffer(blob, dtype="<f4"))
    data = np.column_stack(channels) if channels else np.zeros((num_samples, 0))
    if not np.all(np.isfinite(data)):
        raise CorruptContainer(f"non-finite samples in {path}")
    try:
        return Recording(
            channel_ids=list(manifest["channel_ids"]),
            data=data,
            sample_rate=float(manifest["sample_rate_hz"]),
        )
    except ValueError as exc:
        raise CorruptContainer(str(exc)) from exc


def save_hypnogram(labels: list[int], path: str | Path) -> Path:
    """Write stage codes as one token per line."""
    path = Path(path)
    path.write_text("".join(STAGE_NAMES[int(y)] + "\n" for y in labels))
    return path


def load_hypnogram(path: str | Path) -> list[int]:
    """Parse a hypnogram file into stage codes (unknown token is an error)."""
    lines = Path(path).read_text().splitlines()
    labels = []
    for lineno, token in enumerate(lines, start=1):
        token = token.strip()
        if not token and lineno == len(lines):
            break  # tolerate one trailing blank line
        if token not in STAGE_CODES:
            raise InvalidStageToken(lineno, token)
        labels.append(STAGE_CODES[token])
    return labels
