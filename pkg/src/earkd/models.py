"""Toy-scale sleep stagers with a shared interface.

Every stager maps one 30 s epoch [T, 3] to class logits [5] and an
intermediate feature vector [D]; the feature is the pre-classifier pooled
representation and is the target of feature-based distillation. Two
architectures are provided: a strided 1-D CNN and a small transformer
encoder over conv patches. Both avoid dropout and batch statistics, so
forward passes are identical in train and eval mode and depend only on
the input row (no cross-example leakage).
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn

from .dataset.epochs import NUM_STAGES
from .errors import CheckpointMismatch, InvalidConfig, ShapeError

IN_CHANNELS = 3
_CHECKPOINT_MAGIC = b"EARKDCKPT1"


@dataclass
class ModelConfig:
    """Architecture hyperparameters; fully determines parameter shapes."""

    arch: str = "cnn"            # {"cnn", "transformer"}
    width: int = 16              # stem width (cnn) / d_model (transformer)
    depth: int = 3               # conv blocks after the stem / encoder layers
    feature_dim: int = 64
    n_heads: int = 4             # transformer only
    seed: int = 0

    def validate(self) -> "ModelConfig":
        if self.arch not in ("cnn", "transformer"):
            raise InvalidConfig(f"unknown arch {self.arch!r}")
        if self.feature_dim < 1 or self.width < 1 or self.depth < 1:
            raise InvalidConfig("width, depth and feature_dim must be >= 1")
        if self.arch == "transformer" and self.width % self.n_heads != 0:
            raise InvalidConfig("transformer width must be divisible by n_heads")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d).validate()


class SleepStager(nn.Module):
    """Base class: forward(epoch) -> (logits, feature)."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.feature_dim = config.feature_dim

    def _encode(self, x: torch.Tensor) -> torch.Tensor:  # [B, 3, T] -> [B, E]
        raise NotImplementedError

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        single = x.dim() == 2
        if single:
            x = x.unsqueeze(0)
        if x.dim() != 3 or x.shape[-1] != IN_CHANNELS:
            raise ShapeError(f"expected [B, T, {IN_CHANNELS}] input, got {tuple(x.shape)}")
        h = self._encode(x.transpose(1, 2))
        feature = self.feature_head(h)
        logits = self.classifier(feature)
        if single:
            return logits.squeeze(0), feature.squeeze(0)
        return logits, feature


class CnnStager(SleepStager):
    """Strided 1-D conv encoder -> global average pool -> feature -> logits."""

    def __init__(self, config: ModelConfig):
        super().__init__(config)
        w = config.width
        self.stem = nn.Conv1d(IN_CHANNELS, w, kernel_size=15, stride=6, padding=7)
        blocks = []
        widths = [w * (i + 2) for i in range(config.depth)]
        in_w = w
        strides = [3] + [2] * (config.depth - 1)
        for out_w, stride in zip(widths, strides):
            blocks.append(nn.Sequential(
                nn.Conv1d(in_w, out_w, kernel_size=5, stride=stride, padding=2),
                nn.GroupNorm(math.gcd(4, out_w), out_w),
                nn.ReLU(),
            ))
            in_w = out_w
        self.blocks = nn.ModuleList(blocks)
        self.feature_head = nn.Linear(in_w, config.feature_dim)
        self.classifier = nn.Linear(config.feature_dim, NUM_STAGES)

    def _encode(self, x: torch.Tensor) -> torch.Tensor:
        h = torch.relu(self.stem(x))
        for block in self.blocks:
            h = block(h)
        return h.mean(dim=-1)


def _sinusoidal_positions(n: int, dim: int, device, dtype) -> torch.Tensor:
    position = torch.arange(n, device=device, dtype=dtype).unsqueeze(1)
    div = torch.exp(
        torch.arange(0, dim, 2, device=device, dtype=dtype)
        * (-math.log(10000.0) / dim)
    )
    pe = torch.zeros(n, dim, device=device, dtype=dtype)
    pe[:, 0::2] = torch.sin(position * div)
    pe[:, 1::2] = torch.cos(position * div[: (dim + 1) // 2])
    return pe


class TransformerStager(SleepStager):
    """Conv patch embedding -> transformer encoder -> mean pool -> feature."""

    PATCH = 25

    def __init__(self, config: ModelConfig):
        super().__init__(config)
        d = config.width
        self.embed = nn.Conv1d(IN_CHANNELS, d, kernel_size=self.PATCH, stride=self.PATCH)
        layer = nn.TransformerEncoderLayer(
            d_model=d, nhead=config.n_heads, dim_feedforward=2 * d,
            dropout=0.0, activation="gelu", batch_first=True, norm_first=True,
        )
        self.encoder = nn.TransformerEncoder(
            layer, num_layers=config.depth, enable_nested_tensor=False
        )
        self.feature_head = nn.Linear(d, config.feature_dim)
        self.classifier = nn.Linear(config.feature_dim, NUM_STAGES)

    def _encode(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[-1] < self.PATCH:
            raise ShapeError(
                f"epoch of {x.shape[-1]} samples shorter than one {self.PATCH}-sample patch"
            )
        tokens = self.embed(x).transpose(1, 2)  # [B, n_tokens, d]
        tokens = tokens + _sinusoidal_positions(
            tokens.shape[1], tokens.shape[2], tokens.device, tokens.dtype
        )
        return self.encoder(tokens).mean(dim=1)


def build_cnn_stager(config: ModelConfig) -> CnnStager:
    if config.validate().arch != "cnn":
        raise InvalidConfig("build_cnn_stager requires arch='cnn'")
    with torch.random.fork_rng():
        torch.manual_seed(config.seed)
        return CnnStager(config)


def build_transformer_stager(config: ModelConfig) -> TransformerStager:
    if config.validate().arch != "transformer":
        raise InvalidConfig("build_transformer_stager requires arch='transformer'")
    with torch.random.fork_rng():
        torch.manual_seed(config.seed)
        return TransformerStager(config)


def build_stager(config: ModelConfig) -> SleepStager:
    """Build the stager named by config.arch with seed-deterministic init."""
    if config.arch == "cnn":
        return build_cnn_stager(config)
    return build_transformer_stager(config)


def forward_batch(model: SleepStager, epochs: np.ndarray,
                  batch_size: int = 512) -> tuple[np.ndarray, np.ndarray]:
    """Run a [B, T, 3] numpy batch through a stager in eval mode.

    Returns (logits [B, 5], features [B, D]) as float64 numpy arrays.
    Row i depends only on epoch i; an empty batch yields empty outputs.
    """
    epochs = np.asarray(epochs)
    if epochs.ndim != 3 or epochs.shape[-1] != IN_CHANNELS:
        raise ShapeError(f"expected [B, T, {IN_CHANNELS}], got {epochs.shape}")
    if epochs.shape[0] == 0:
        return (np.zeros((0, NUM_STAGES)), np.zeros((0, model.feature_dim)))
    dtype = next(model.parameters()).dtype
    was_training = model.training
    model.eval()
    logits_parts, feat_parts = [], []
    with torch.no_grad():
        for start in range(0, epochs.shape[0], batch_size):
            chunk = torch.as_tensor(
                epochs[start:start + batch_size], dtype=dtype
            )
            logits, feats = model(chunk)
            logits_parts.append(logits.double().numpy())
            feat_parts.append(feats.double().numpy())
    if was_training:
        model.train()
    return np.concatenate(logits_parts), np.concatenate(feat_parts)


def parameter_hash(model: nn.Module) -> str:
    """SHA-256 over all named parameters (order-stable, bit-exact)."""
    digest = hashlib.sha256()
    for name, param in sorted(model.state_dict().items()):
        digest.update(name.encode())
        digest.update(param.detach().cpu().numpy().tobytes())
    return digest.hexdigest()


# --- checkpoint format: length-prefixed JSON header + raw tensor bytes ---

def save_checkpoint(model: SleepStager, path: str | Path,
                    extra: dict | None = None) -> Path:
    """Write a named-tensor archive with the model config in the header.

    The byte stream is deterministic for identical parameters, so content
    hashes can be compared across runs.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    state = model.state_dict()
    tensors = []
    payload = bytearray()
    for name in sorted(state):
        arr = state[name].detach().cpu().numpy()
        tensors.append({
            "name": name,
            "shape": list(arr.shape),
            "dtype": str(arr.dtype),
            "offset": len(payload),
        })
        payload.extend(arr.tobytes())
    header = {
        "config": model.config.to_dict(),
        "tensors": tensors,
        "extra": extra or {},
    }
    header_bytes = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_CHECKPOINT_MAGIC)
        fh.write(len(header_bytes).to_bytes(8, "little"))
        fh.write(header_bytes)
        fh.write(bytes(payload))
    return path


def load_checkpoint(path: str | Path) -> tuple[SleepStager, dict]:
    """Rebuild a stager from a checkpoint; returns (model, extra header)."""
    path = Path(path)
    blob = path.read_bytes()
    if blob[:len(_CHECKPOINT_MAGIC)] != _CHECKPOINT_MAGIC:
        raise CheckpointMismatch(f"{path} is not an earkd checkpoint")
    off = len(_CHECKPOINT_MAGIC)
    header_len = int.from_bytes(blob[off:off + 8], "little")
    off += 8
    header = json.loads(blob[off:off + header_len].decode())
    off += header_len
    payload = blob[off:]

    config = ModelConfig.from_dict(header["config"])
    model = build_stager(config)
    state = {}
    for spec in header["tensors"]:
        arr = np.frombuffer(
            payload, dtype=np.dtype(spec["dtype"]),
            count=int(np.prod(spec["shape"])) if spec["shape"] else 1,
            offset=spec["offset"],
        ).reshape(spec["shape"]).copy()
        state[spec["name"]] = torch.from_numpy(arr)
    try:
        model.load_state_dict(state)
    except RuntimeError as exc:
        raise CheckpointMismatch(str(exc)) from exc
    return model, header.get("extra", {})
