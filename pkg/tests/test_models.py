"""Tests for the stager architectures, batch API and checkpoints."""
import numpy as np
import pytest
import torch

from earkd.errors import CheckpointMismatch, InvalidConfig, ShapeError
from earkd.models import (
    ModelConfig,
    build_cnn_stager,
    build_stager,
    build_transformer_stager,
    forward_batch,
    load_checkpoint,
    parameter_hash,
    save_checkpoint,
)

T = 3000
CNN = ModelConfig(arch="cnn", width=8, depth=2, feature_dim=16, seed=0)
TRANSFORMER = ModelConfig(arch="transformer", width=16, depth=1, feature_dim=16,
                          n_heads=4, seed=0)


def rand_epochs(n, t=T, seed=0):
    return np.random.default_rng(seed).normal(size=(n, t, 3)).astype(np.float32)


@pytest.mark.parametrize("config", [CNN, TRANSFORMER], ids=["cnn", "transformer"])
class TestStagerContract:
    def test_zero_epoch_finite_outputs(self, config):
        model = build_stager(config)
        logits, feats = forward_batch(model, np.zeros((1, T, 3), dtype=np.float32))
        assert np.isfinite(logits).all() and np.isfinite(feats).all()

    def test_shapes(self, config):
        model = build_stager(config)
        logits, feats = forward_batch(model, rand_epochs(32))
        assert logits.shape == (32, 5)
        assert feats.shape == (32, config.feature_dim)

    def test_softmax_normalized(self, config):
        model = build_stager(config)
        logits, _ = forward_batch(model, rand_epochs(4))
        probs = np.exp(logits) / np.exp(logits).sum(axis=1, keepdims=True)
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-6)

    def test_same_seed_identical_parameters(self, config):
        a, b = build_stager(config), build_stager(config)
        assert parameter_hash(a) == parameter_hash(b)

    def test_different_seed_differs(self, config):
        from dataclasses import replace

        a = build_stager(config)
        b = build_stager(replace(config, seed=123))
        assert parameter_hash(a) != parameter_hash(b)

    def test_batch_order_permutation(self, config):
        model = build_stager(config)
        x = rand_epochs(8)
        perm = np.array([3, 1, 7, 0, 5, 2, 6, 4])
        logits, feats = forward_batch(model, x)
        logits_p, feats_p = forward_batch(model, x[perm])
        np.testing.assert_allclose(logits_p, logits[perm], atol=1e-6)
        np.testing.assert_allclose(feats_p, feats[perm], atol=1e-6)

    def test_duplicated_rows_duplicate_outputs(self, config):
        model = build_stager(config)
        x = rand_epochs(2)
        dup = np.concatenate([x, x[:1]])
        logits, _ = forward_batch(model, dup)
        np.testing.assert_allclose(logits[2], logits[0], atol=1e-6)

    def test_empty_batch(self, config):
        model = build_stager(config)
        logits, feats = forward_batch(model, np.zeros((0, T, 3), dtype=np.float32))
        assert logits.shape == (0, 5)
        assert feats.shape == (0, config.feature_dim)

    def test_single_equals_batched(self, config):
        model = build_stager(config)
        x = rand_epochs(3)
        logits, feats = forward_batch(model, x)
        model.eval()
        with torch.no_grad():
            l0, f0 = model(torch.as_tensor(x[0]))
        assert np.abs(l0.numpy() - logits[0]).max() < 1e-6
        assert np.abs(f0.numpy() - feats[0]).max() < 1e-6

    def test_gradients_flow(self, config):
        model = build_stager(config)
        x = torch.as_tensor(rand_epochs(4))
        logits, feats = model(x)
        loss = logits.square().mean() + feats.square().mean()
        loss.backward()
        grads = [p.grad for p in model.parameters()]
        assert all(g is not None and torch.isfinite(g).all() for g in grads)
        assert any(g.abs().sum() > 0 for g in grads)

    def test_checkpoint_roundtrip_bit_exact(self, config, tmp_path):
        model = build_stager(config)
        path = save_checkpoint(model, tmp_path / "m.ckpt", extra={"note": "x"})
        loaded, extra = load_checkpoint(path)
        assert extra == {"note": "x"}
        assert parameter_hash(loaded) == parameter_hash(model)

    def test_variable_epoch_length(self, config):
        model = build_stager(config)
        logits, _ = forward_batch(model, rand_epochs(2, t=1000))
        assert logits.shape == (2, 5)


class TestModelConfig:
    def test_unknown_arch(self):
        with pytest.raises(InvalidConfig):
            ModelConfig(arch="mlp").validate()

    def test_arch_dispatch_guard(self):
        with pytest.raises(InvalidConfig):
            build_cnn_stager(TRANSFORMER)
        with pytest.raises(InvalidConfig):
            build_transformer_stager(CNN)

    def test_feature_dim_matches_config(self):
        model = build_stager(TRANSFORMER)
        assert model.feature_dim == TRANSFORMER.feature_dim

    def test_same_config_same_feature_dim(self):
        a, b = build_stager(CNN), build_stager(CNN)
        assert a.feature_dim == b.feature_dim


class TestForwardBatchValidation:
    def test_wrong_channel_count(self):
        model = build_stager(CNN)
        with pytest.raises(ShapeError):
            forward_batch(model, np.zeros((2, T, 4), dtype=np.float32))

    def test_wrong_rank(self):
        model = build_stager(CNN)
        with pytest.raises(ShapeError):
            forward_batch(model, np.zeros((T, 3), dtype=np.float32)[None, None])


class TestCheckpointValidation:
    def test_not_a_checkpoint(self, tmp_path):
        path = tmp_path / "bogus.ckpt"
        path.write_bytes(b"garbage bytes")
        with pytest.raises(CheckpointMismatch):
            load_checkpoint(path)

    def test_deterministic_bytes(self, tmp_path):
        model = build_stager(CNN)
        p1 = save_checkpoint(model, tmp_path / "a.ckpt")
        p2 = save_checkpoint(model, tmp_path / "b.ckpt")
        assert p1.read_bytes() == p2.read_bytes()
