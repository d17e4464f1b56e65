"""Tests for losses, gradient correctness and the four training strategies."""
import math

import numpy as np
import pytest
import torch

from earkd.errors import (
    EmptyDataset,
    FeatureShapeMismatch,
    InvalidLabel,
    ShapeError,
)
from earkd.models import ModelConfig, build_stager, parameter_hash
from earkd.training import (
    TrainConfig,
    ce_loss,
    feature_mse,
    kd_loss,
    train_offline_kd,
    train_online_kd,
    train_supervised,
    train_transfer,
)

MC = ModelConfig(arch="cnn", width=8, depth=2, feature_dim=16, seed=0)
T = 600


def toy_two_class(n_per_class=32, t=T, fs=100.0, seed=0):
    """Separable by construction: class 0 is a 5 Hz tone, class 1 is 15 Hz."""
    rng = np.random.default_rng(seed)
    tt = np.arange(t) / fs
    xs, ys = [], []
    for label, freq in ((0, 5.0), (1, 15.0)):
        for _ in range(n_per_class):
            phase = rng.uniform(0, 2 * np.pi, size=3)
            sig = np.sin(2 * np.pi * freq * tt[:, None] + phase)
            sig = sig + 0.1 * rng.normal(size=(t, 3))
            xs.append(sig.astype(np.float32))
            ys.append(label)
    return np.stack(xs), np.array(ys, dtype=np.int64)


class TestCeLoss:
    def test_uniform_logits(self):
        logits = torch.zeros(4, 5)
        labels = torch.tensor([0, 1, 2, 3])
        assert float(ce_loss(logits, labels)) == pytest.approx(math.log(5.0), abs=1e-6)

    def test_saturated_correct_logits(self):
        logits = torch.full((3, 5), -20.0)
        logits[torch.arange(3), torch.tensor([0, 2, 4])] = 20.0
        assert float(ce_loss(logits, torch.tensor([0, 2, 4]))) < 1e-6

    def test_single_logit_case(self):
        # Independent softmax evaluation: -log(e / (e + 4)).
        expected = math.log((math.e + 4.0) / math.e)
        logits = torch.tensor([[1.0, 0.0, 0.0, 0.0, 0.0]], dtype=torch.float64)
        assert float(ce_loss(logits, torch.tensor([0]))) == pytest.approx(expected, abs=1e-9)

    def test_label_out_of_range(self):
        with pytest.raises(InvalidLabel):
            ce_loss(torch.zeros(2, 5), torch.tensor([0, 5]))

    def test_nonnegative(self):
        rng = torch.Generator().manual_seed(0)
        for _ in range(20):
            logits = torch.randn(8, 5, generator=rng)
            labels = torch.randint(0, 5, (8,), generator=rng)
            assert float(ce_loss(logits, labels)) >= 0.0


class TestFeatureMse:
    def test_identical_features(self):
        x = torch.randn(6, 16)
        assert float(feature_mse(x, x)) == 0.0

    def test_hand_case(self):
        s = torch.tensor([[1.0, 0.0]])
        t = torch.tensor([[0.0, 1.0]])
        assert float(feature_mse(s, t)) == pytest.approx(2.0)

    def test_quadratic_scaling(self):
        rng = torch.Generator().manual_seed(1)
        s, t = torch.randn(5, 8, generator=rng), torch.randn(5, 8, generator=rng)
        base = float(feature_mse(s, t))
        assert float(feature_mse(3.0 * s, 3.0 * t)) == pytest.approx(9.0 * base, rel=1e-6)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            feature_mse(torch.zeros(2, 4), torch.zeros(2, 5))


class TestKdLoss:
    def test_reduces_to_ce_when_features_match(self):
        rng = torch.Generator().manual_seed(2)
        logits = torch.randn(4, 5, generator=rng)
        feats = torch.randn(4, 8, generator=rng)
        labels = torch.tensor([0, 1, 2, 3])
        assert float(kd_loss(logits, feats, feats, labels)) == pytest.approx(
            float(ce_loss(logits, labels)), abs=1e-12
        )

    def test_additivity(self):
        rng = torch.Generator().manual_seed(3)
        logits = torch.randn(4, 5, generator=rng)
        s = torch.randn(4, 8, generator=rng)
        t = torch.randn(4, 8, generator=rng)
        labels = torch.tensor([4, 3, 2, 1])
        total = float(kd_loss(logits, s, t, labels))
        parts = float(ce_loss(logits, labels)) + float(feature_mse(s, t))
        assert total == pytest.approx(parts, abs=1e-12)

    def test_kd_at_least_ce(self):
        rng = torch.Generator().manual_seed(4)
        for _ in range(10):
            logits = torch.randn(6, 5, generator=rng)
            s = torch.randn(6, 8, generator=rng)
            t = torch.randn(6, 8, generator=rng)
            labels = torch.randint(0, 5, (6,), generator=rng)
            assert float(kd_loss(logits, s, t, labels)) >= float(ce_loss(logits, labels))


def finite_difference_check(loss_fn, model, n_points=20, h=1e-6, seed=0):
    """Compare autograd gradients with central differences at random coordinates."""
    params = [p for p in model.parameters() if p.requires_grad]
    model.zero_grad()
    loss_fn().backward()
    rng = np.random.default_rng(seed)
    rel_errs = []
    for _ in range(n_points):
        p = params[int(rng.integers(len(params)))]
        flat_idx = int(rng.integers(p.numel()))
        idx = np.unravel_index(flat_idx, p.shape)
        analytic = float(p.grad[idx])
        with torch.no_grad():
            original = float(p[idx])
            p[idx] = original + h
            up = float(loss_fn())
            p[idx] = original - h
            down = float(loss_fn())
            p[idx] = original
        numeric = (up - down) / (2.0 * h)
        scale = max(abs(analytic), abs(numeric), 1e-8)
        rel_errs.append(abs(analytic - numeric) / scale)
    return max(rel_errs)


class TestGradientCorrectness:
    def test_kd_loss_gradient_matches_finite_differences(self):
        torch.manual_seed(0)
        model = build_stager(MC).double()
        teacher = build_stager(ModelConfig(arch="cnn", width=8, depth=2,
                                           feature_dim=16, seed=9)).double()
        x = torch.randn(8, T, 3, dtype=torch.float64)
        labels = torch.randint(0, 5, (8,))
        with torch.no_grad():
            _, t_feat = teacher(x)

        def loss_fn():
            logits, feats = model(x)
            return kd_loss(logits, feats, t_feat, labels)

        assert finite_difference_check(loss_fn, model) < 1e-4

    def test_ce_and_mse_input_gradients(self):
        logits = torch.randn(6, 5, dtype=torch.float64, requires_grad=True)
        labels = torch.randint(0, 5, (6,))
        loss = ce_loss(logits, labels)
        grad = torch.autograd.grad(loss, logits)[0]
        h = 1e-7
        with torch.no_grad():
            probe = logits.clone()
            probe[2, 3] += h
            up = float(ce_loss(probe, labels))
            probe[2, 3] -= 2 * h
            down = float(ce_loss(probe, labels))
        numeric = (up - down) / (2 * h)
        assert abs(numeric - float(grad[2, 3])) < 1e-6


class TestTrainSupervised:
    def test_separable_toy_data_high_accuracy(self):
        x, y = toy_two_class()
        model = build_stager(MC)
        result = train_supervised(model, x, y, TrainConfig(epochs=100, seed=0))
        from earkd.evaluation import predict

        train_acc = float((predict(model, x) == y).mean())
        assert train_acc > 0.95
        assert len(result.loss_trace) == 100

    def test_zero_epochs_leaves_model_unchanged(self):
        x, y = toy_two_class(n_per_class=4)
        model = build_stager(MC)
        before = parameter_hash(model)
        result = train_supervised(model, x, y, TrainConfig(epochs=0, seed=0))
        assert parameter_hash(model) == before
        assert result.loss_trace == []

    def test_deterministic(self):
        x, y = toy_two_class(n_per_class=8)
        cfg = TrainConfig(epochs=3, seed=5)
        a = train_supervised(build_stager(MC), x, y, cfg)
        b = train_supervised(build_stager(MC), x, y, cfg)
        assert parameter_hash(a.model) == parameter_hash(b.model)
        assert a.loss_trace == b.loss_trace

    def test_empty_dataset(self):
        with pytest.raises(EmptyDataset):
            train_supervised(
                build_stager(MC), np.zeros((0, T, 3), np.float32),
                np.zeros(0, np.int64), TrainConfig(epochs=1),
            )


class TestTrainTransfer:
    def test_phase2_starts_from_phase1_weights(self):
        x, y = toy_two_class(n_per_class=8)
        xe = x + 0.5 * np.random.default_rng(1).normal(size=x.shape).astype(np.float32)
        cfg = TrainConfig(epochs=2, seed=0)
        result = train_transfer(MC, x, y, xe, y, cfg)
        # Reproduce phase 1 independently; its final weights must equal the
        # recorded pretrained state bit-exactly.
        phase1 = train_supervised(build_stager(MC), x, y, cfg)
        recorded = result.extras["pretrained_state"]
        for name, tensor in phase1.model.state_dict().items():
            assert torch.equal(tensor, recorded[name])

    def test_trace_length_doubles(self):
        x, y = toy_two_class(n_per_class=6)
        result = train_transfer(MC, x, y, x, y, TrainConfig(epochs=3, seed=0))
        assert len(result.loss_trace) == 6

    def test_empty_ear_dataset(self):
        x, y = toy_two_class(n_per_class=4)
        with pytest.raises(EmptyDataset):
            train_transfer(MC, x, y, np.zeros((0, T, 3), np.float32),
                           np.zeros(0, np.int64), TrainConfig(epochs=1))


class TestOfflineKd:
    def make_paired(self, seed=0):
        xs, y = toy_two_class(n_per_class=12, seed=seed)
        rng = np.random.default_rng(seed + 1)
        xe = (0.6 * xs + 0.8 * rng.normal(size=xs.shape)).astype(np.float32)
        return xs, xe, y

    def test_teacher_untouched(self):
        xs, xe, y = self.make_paired()
        cfg = TrainConfig(epochs=2, seed=0)
        teacher = train_supervised(build_stager(MC), xs, y, cfg).model
        before = parameter_hash(teacher)
        train_offline_kd(teacher, MC, xs, xe, y, cfg)
        assert parameter_hash(teacher) == before

    def test_teacher_features_stable_across_passes(self):
        from earkd.models import forward_batch

        xs, xe, y = self.make_paired()
        cfg = TrainConfig(epochs=1, seed=0)
        teacher = train_supervised(build_stager(MC), xs, y, cfg).model
        _, f1 = forward_batch(teacher, xs)
        train_offline_kd(teacher, MC, xs, xe, y, cfg)
        _, f2 = forward_batch(teacher, xs)
        np.testing.assert_array_equal(f1, f2)

    def test_feature_dim_mismatch(self):
        xs, xe, y = self.make_paired()
        teacher = build_stager(MC)
        bad = ModelConfig(arch="cnn", width=8, depth=2, feature_dim=8, seed=0)
        with pytest.raises(FeatureShapeMismatch):
            train_offline_kd(teacher, bad, xs, xe, y, TrainConfig(epochs=1))

    def test_student_learns(self):
        xs, y = toy_two_class(n_per_class=24, seed=0)
        rng = np.random.default_rng(1)
        xe = (0.8 * xs + 0.4 * rng.normal(size=xs.shape)).astype(np.float32)
        cfg = TrainConfig(epochs=40, seed=0)
        teacher = train_supervised(build_stager(MC), xs, y, cfg).model
        result = train_offline_kd(teacher, MC, xs, xe, y, cfg)
        from earkd.evaluation import predict

        assert float((predict(result.model, xe) == y).mean()) > 0.9


class TestOnlineKd:
    def test_both_models_update(self):
        xs, y = toy_two_class(n_per_class=8)
        xe = xs.copy()
        cfg = TrainConfig(epochs=1, seed=0)
        t0 = parameter_hash(build_stager(MC))
        result = train_online_kd(MC, MC, xs, xe, y, cfg)
        assert parameter_hash(result.teacher) != t0
        assert parameter_hash(result.model) != t0
        assert len(result.teacher_loss_trace) == 1

    def test_teacher_trajectory_equals_supervised(self):
        # The student's objective never touches the teacher, so the online
        # teacher must match supervised scalp training bit-exactly.
        xs, y = toy_two_class(n_per_class=8)
        rng = np.random.default_rng(2)
        xe = (xs + rng.normal(size=xs.shape)).astype(np.float32)
        cfg = TrainConfig(epochs=3, seed=7)
        online = train_online_kd(MC, MC, xs, xe, y, cfg)
        supervised = train_supervised(build_stager(MC), xs, y, cfg)
        assert parameter_hash(online.teacher) == parameter_hash(supervised.model)
        assert online.teacher_loss_trace == supervised.loss_trace

    def test_deterministic(self):
        xs, y = toy_two_class(n_per_class=6)
        cfg = TrainConfig(epochs=2, seed=1)
        a = train_online_kd(MC, MC, xs, xs, y, cfg)
        b = train_online_kd(MC, MC, xs, xs, y, cfg)
        assert parameter_hash(a.model) == parameter_hash(b.model)


class TestTrainConfig:
    def test_defaults_match_protocol(self):
        cfg = TrainConfig()
        assert cfg.learning_rate == 1e-3
        assert cfg.beta1 == 0.9
        assert cfg.beta2 == 0.999
        assert cfg.epochs == 100
        assert cfg.batch_size == 32

    def test_json_roundtrip(self, tmp_path):
        import json

        cfg = TrainConfig(epochs=5, seed=3)
        path = tmp_path / "train.json"
        path.write_text(json.dumps(cfg.to_dict()))
        assert TrainConfig.from_json(path) == cfg
