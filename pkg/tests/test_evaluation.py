"""Tests for metrics, LOSO evaluation and 2-D embeddings."""
import numpy as np
import pytest

from earkd.errors import EmptyMatrix, InvalidLabel, NotEnoughPoints, ShapeError
from earkd.evaluation import (
    EmbeddingExport,
    SubjectEpochs,
    accuracy,
    cohen_kappa,
    confusion,
    embed_2d,
    extract_features,
    kappa_degenerate,
    loso_evaluate,
    metrics_report,
    per_class_f1,
    predict,
)
from earkd.models import ModelConfig, build_stager
from earkd.training import TrainConfig


class TestConfusion:
    def test_identity(self):
        cm = confusion(np.arange(5), np.arange(5))
        np.testing.assert_array_equal(cm, np.eye(5, dtype=np.int64))

    def test_single_cell(self):
        cm = confusion(np.full(10, 2), np.zeros(10, dtype=int))
        assert cm[0, 2] == 10
        assert cm.sum() == 10

    def test_empty(self):
        cm = confusion(np.array([]), np.array([]))
        np.testing.assert_array_equal(cm, np.zeros((5, 5), dtype=np.int64))

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            confusion(np.zeros(3, int), np.zeros(4, int))

    def test_out_of_range(self):
        with pytest.raises(InvalidLabel):
            confusion(np.array([5]), np.array([0]))


class TestAccuracy:
    def test_perfect(self):
        assert accuracy(np.eye(5, dtype=int) * 7) == 1.0

    def test_all_wrong(self):
        cm = np.zeros((5, 5), int)
        cm[0, 1] = 10
        assert accuracy(cm) == 0.0

    def test_fraction(self):
        cm = np.zeros((5, 5), int)
        cm[0, 0], cm[1, 1], cm[0, 1] = 32, 32, 36
        assert accuracy(cm) == pytest.approx(0.64)

    def test_empty_matrix(self):
        with pytest.raises(EmptyMatrix):
            accuracy(np.zeros((5, 5), int))

    def test_matches_direct_agreement(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            preds = rng.integers(0, 5, size=200)
            labels = rng.integers(0, 5, size=200)
            direct = float((preds == labels).mean())
            assert abs(accuracy(confusion(preds, labels)) - direct) < 1e-15


class TestCohenKappa:
    def test_perfect_agreement(self):
        assert cohen_kappa(np.eye(5, dtype=int) * 9) == pytest.approx(1.0)

    def test_independent_predictions_near_zero(self):
        rng = np.random.default_rng(123)
        preds = rng.integers(0, 5, size=100_000)
        labels = rng.integers(0, 5, size=100_000)
        assert abs(cohen_kappa(confusion(preds, labels))) < 0.02

    def test_embedded_two_class_case(self):
        cm = np.zeros((5, 5), int)
        cm[0, 0], cm[0, 1], cm[1, 0], cm[1, 1] = 20, 5, 10, 15
        # Brute-force evaluation of the definition on the same counts.
        total = cm.sum()
        p_o = np.trace(cm) / total
        p_e = sum(cm.sum(1)[k] * cm.sum(0)[k] for k in range(5)) / total ** 2
        expected = (p_o - p_e) / (1 - p_e)
        assert cohen_kappa(cm) == pytest.approx(expected, abs=1e-12)

    def test_against_sklearn_on_random_matrices(self):
        # Independent oracle: expand counts into label arrays and score with
        # sklearn's implementation.
        from sklearn.metrics import cohen_kappa_score

        rng = np.random.default_rng(7)
        for _ in range(200):
            cm = rng.integers(0, 30, size=(5, 5))
            if cm.sum() == 0 or kappa_degenerate(cm):
                continue
            labels, preds = [], []
            for t in range(5):
                for p in range(5):
                    labels += [t] * cm[t, p]
                    preds += [p] * cm[t, p]
            expected = cohen_kappa_score(labels, preds, labels=list(range(5)))
            assert cohen_kappa(cm) == pytest.approx(expected, abs=1e-12)

    def test_degenerate_single_class(self):
        cm = np.zeros((5, 5), int)
        cm[2, 2] = 50
        assert kappa_degenerate(cm)
        assert cohen_kappa(cm) == 0.0

    def test_scaling_invariance(self):
        rng = np.random.default_rng(5)
        cm = rng.integers(1, 20, size=(5, 5))
        assert cohen_kappa(3 * cm) == pytest.approx(cohen_kappa(cm), abs=1e-15)
        assert accuracy(3 * cm) == pytest.approx(accuracy(cm), abs=1e-15)

    def test_kappa_one_iff_diagonal(self):
        rng = np.random.default_rng(6)
        diag = np.diag(rng.integers(1, 10, size=5))
        assert cohen_kappa(diag) == pytest.approx(1.0)
        off = diag.copy()
        off[0, 1] = 3
        assert cohen_kappa(off) < 1.0


class TestPerClassF1:
    def test_perfect(self):
        f1s, macro = per_class_f1(np.eye(5, dtype=int) * 4)
        assert f1s == [1.0] * 5
        assert macro == 1.0

    def test_absent_class_undefined(self):
        cm = np.eye(5, dtype=int) * 4
        cm[3, 3] = 0  # class 3 never true, never predicted
        f1s, macro = per_class_f1(cm)
        assert f1s[3] is None
        assert macro == pytest.approx(np.mean([f for f in f1s if f is not None]))

    def test_hand_case(self):
        cm = np.zeros((5, 5), int)
        cm[0, 0] = 8
        cm[1, 0] = 2          # FP for class 0
        cm[0, 1] = 2          # FN for class 0
        cm[1, 1] = 5
        f1s, _ = per_class_f1(cm)
        assert f1s[0] == pytest.approx(0.8)

    def test_report_serialization(self):
        import json

        cm = np.eye(5, dtype=int) * 3
        report = metrics_report(cm)
        payload = json.loads(json.dumps(report.to_dict()))
        assert payload["accuracy"] == 1.0
        assert payload["n_epochs"] == 15


class TestEmbed2d:
    def test_pca_recovers_2d_data(self):
        rng = np.random.default_rng(0)
        points = rng.normal(size=(40, 2)) @ np.array([[3.0, 0.5], [0.2, 1.0]])
        out = embed_2d(points, np.zeros(40, int), ["scalp"] * 40, method="pca")
        d_in = np.linalg.norm(points[:, None] - points[None, :], axis=-1)
        d_out = np.linalg.norm(out.points[:, None] - out.points[None, :], axis=-1)
        np.testing.assert_allclose(d_out, d_in, atol=1e-9)

    def test_pca_separates_gaussian_clusters(self):
        rng = np.random.default_rng(1)
        a = rng.normal(size=(60, 64)) + 8.0 * rng.normal(size=64)
        b = rng.normal(size=(60, 64))
        feats = np.concatenate([a, b])
        labels = np.array([0] * 60 + [1] * 60)
        out = embed_2d(feats, labels, ["ear"] * 120, method="pca")
        # Hold-out nearest-centroid classifier on the 2-D projection.
        train_idx = np.r_[0:40, 60:100]
        test_idx = np.r_[40:60, 100:120]
        c0 = out.points[train_idx][labels[train_idx] == 0].mean(axis=0)
        c1 = out.points[train_idx][labels[train_idx] == 1].mean(axis=0)
        test = out.points[test_idx]
        pred = (np.linalg.norm(test - c1, axis=1)
                < np.linalg.norm(test - c0, axis=1)).astype(int)
        assert (pred == labels[test_idx]).mean() > 0.95

    def test_pca_deterministic_sign(self):
        rng = np.random.default_rng(2)
        feats = rng.normal(size=(30, 8))
        a = embed_2d(feats, np.zeros(30, int), ["ear"] * 30, method="pca")
        b = embed_2d(feats, np.zeros(30, int), ["ear"] * 30, method="pca")
        np.testing.assert_array_equal(a.points, b.points)

    def test_sne_deterministic_with_seed(self):
        rng = np.random.default_rng(3)
        feats = rng.normal(size=(50, 16))
        a = embed_2d(feats, np.zeros(50, int), ["ear"] * 50, method="sne", seed=4)
        b = embed_2d(feats, np.zeros(50, int), ["ear"] * 50, method="sne", seed=4)
        np.testing.assert_array_equal(a.points, b.points)

    def test_not_enough_points(self):
        with pytest.raises(NotEnoughPoints):
            embed_2d(np.zeros((2, 4)), np.zeros(2, int), ["ear"] * 2)


def tiny_subjects(n_subjects=2, n_epochs=12, t=600, seed=0):
    """Separable paired data: stage-dependent tones in both modalities."""
    rng = np.random.default_rng(seed)
    tt = np.arange(t) / 100.0
    subjects = []
    for s in range(n_subjects):
        xs, xe, ys = [], [], []
        for e in range(n_epochs):
            label = int(rng.integers(0, 2)) * 2  # stages 0 and 2 only
            freq = 5.0 if label == 0 else 15.0
            base = np.sin(2 * np.pi * freq * tt[:, None] + rng.uniform(0, 6.28, 3))
            xs.append((base + 0.05 * rng.normal(size=(t, 3))).astype(np.float32))
            xe.append((0.7 * base + 0.3 * rng.normal(size=(t, 3))).astype(np.float32))
            ys.append(label)
        subjects.append(SubjectEpochs(
            f"s{s + 1:02d}", np.stack(xs), np.stack(xe), np.array(ys, np.int64)
        ))
    return subjects


MC = ModelConfig(arch="cnn", width=8, depth=2, feature_dim=16, seed=0)


class TestLosoEvaluate:
    def test_two_subject_structure(self):
        subjects = tiny_subjects()
        result = loso_evaluate("supervised-ear", MC, subjects,
                               TrainConfig(epochs=2, seed=0))
        assert len(result.fold_outcomes) == 2
        assert [o.test_subject for o in result.fold_outcomes] == ["s01", "s02"]
        total = sum(s.labels.shape[0] for s in subjects)
        assert int(result.pooled.confusion.sum()) == total

    def test_pooled_equals_fold_sum(self):
        subjects = tiny_subjects()
        result = loso_evaluate("supervised-ear", MC, subjects,
                               TrainConfig(epochs=2, seed=0))
        summed = np.sum([o.report.confusion for o in result.fold_outcomes], axis=0)
        np.testing.assert_array_equal(result.pooled.confusion, summed)

    def test_test_subject_excluded_from_training(self):
        from earkd.dataset import loso_splits

        ids = [f"s{i:02d}" for i in range(1, 9)]
        for train, test in loso_splits(ids).folds:
            assert test not in train
            assert len(train) == 7

    def test_kd_offline_uses_provided_teacher(self):
        subjects = tiny_subjects()
        cfg = TrainConfig(epochs=2, seed=0)
        scalp = loso_evaluate("supervised-scalp", MC, subjects, cfg)
        teachers = {o.fold_index: o.model for o in scalp.fold_outcomes}
        kd = loso_evaluate("kd-offline", MC, subjects, cfg, teachers=teachers)
        assert kd.fold_outcomes[0].teacher is teachers[0]

    def test_unknown_strategy(self):
        with pytest.raises(ValueError):
            loso_evaluate("bogus", MC, tiny_subjects(), TrainConfig(epochs=1))


class TestExtractFeatures:
    def test_rows_and_tags(self):
        model = build_stager(MC)
        epochs = np.random.default_rng(0).normal(size=(7, 600, 3)).astype(np.float32)
        labels = np.arange(7) % 5
        feats, out_labels, tags = extract_features(model, epochs, labels, "ear")
        assert feats.shape == (7, MC.feature_dim)
        np.testing.assert_array_equal(out_labels, labels)
        assert tags == ["ear"] * 7

    def test_repeated_epoch_identical_rows(self):
        model = build_stager(MC)
        epoch = np.random.default_rng(1).normal(size=(600, 3)).astype(np.float32)
        feats, _, _ = extract_features(
            model, np.stack([epoch, epoch]), np.zeros(2, int), "scalp"
        )
        np.testing.assert_array_equal(feats[0], feats[1])

    def test_label_count_mismatch(self):
        model = build_stager(MC)
        with pytest.raises(ShapeError):
            extract_features(model, np.zeros((3, 600, 3), np.float32),
                             np.zeros(2, int), "ear")
