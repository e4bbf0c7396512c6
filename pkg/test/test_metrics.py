import json
import os
import numpy as np
import pytest
from ice_gan.load_data import CLASS_NAMES, Sample
from ice_gan.loso import loso_folds
from ice_gan.metrics import (ConfusionMatrix, MetricsReport, baseline_factory,
                             evaluate_loso, get_available_baselines,
                             locality_iou, norm2_diff, per_class_scores,
                             region_iou, save_difference_map, uf1_uar)


def make_corpus(n_subjects, classes_per_subject, dataset="toy"):
    image = np.zeros((1, 2, 2))
    corpus = []
    for i in range(n_subjects):
        for j, k in enumerate(classes_per_subject):
            corpus.append(Sample(f"{dataset}_s{i}_{j}", f"s{i}", dataset,
                                 CLASS_NAMES[k], image, image))
    return corpus


def test_diagonal_matrix_scores_one():
    cm = ConfusionMatrix(np.diag([4, 5, 6]))
    assert uf1_uar(cm) == (1.0, 1.0)


def test_single_class_predictions():
    """All predictions in one class out of 10/10/10 truths."""
    true = np.repeat([0, 1, 2], 10)
    cm = ConfusionMatrix.from_labels(true, np.zeros(30, dtype=int))
    uf1, uar = uf1_uar(cm)
    assert uar == pytest.approx(1 / 3)
    # F1 of class 0 is 2*10 / (2*10 + 20); the others are 0
    assert uf1 == pytest.approx(0.5 / 3)


def test_hand_counted_matrix():
    cm = ConfusionMatrix([[8, 1, 1], [2, 7, 1], [0, 2, 8]])
    f1, recall = per_class_scores(cm)
    np.testing.assert_allclose(f1, [0.8, 0.7, 0.8])
    np.testing.assert_allclose(recall, [0.8, 0.7, 0.8])
    uf1, uar = uf1_uar(cm)
    assert uf1 == pytest.approx(2.3 / 3)
    assert uar == pytest.approx(2.3 / 3)
    assert cm.total == 30


def test_confusion_matrix_checks():
    with pytest.raises(ValueError):
        ConfusionMatrix(np.zeros((2, 2)))
    with pytest.raises(ValueError):
        ConfusionMatrix([[1, 0, 0], [0, -1, 0], [0, 0, 1]])
    with pytest.raises(ValueError):
        ConfusionMatrix.from_labels([0, 1], [0])
    with pytest.raises(ValueError):
        uf1_uar(ConfusionMatrix())
    assert ConfusionMatrix.from_labels([], []) == ConfusionMatrix()
    # absent classes score 0 rather than nan
    f1, recall = per_class_scores(ConfusionMatrix.from_labels([0, 0], [0, 0]))
    np.testing.assert_array_equal(f1, [1.0, 0.0, 0.0])
    np.testing.assert_array_equal(recall, [1.0, 0.0, 0.0])


def test_oracle_baseline():
    corpus = make_corpus(4, [0, 1, 2, 0])
    report = evaluate_loso(baseline_factory("oracle"), loso_folds(corpus),
                           corpus)
    assert report.uf1 == 1.0
    assert report.uar == 1.0
    assert report.fold_count == 4
    assert report.num_samples == 16
    assert report.complete


def test_uniform_baseline_is_near_chance():
    corpus = make_corpus(10, [0, 1, 2] * 10)
    report = evaluate_loso(baseline_factory("uniform", seed=1),
                           loso_folds(corpus), corpus)
    assert report.num_samples == 300
    assert report.uar == pytest.approx(1 / 3, abs=0.1)
    assert report.uf1 == pytest.approx(1 / 3, abs=0.1)


def test_majority_baseline_on_imbalanced_corpus():
    """Predicting the frequent class scores UAR 1/3 and a lower UF1."""
    corpus = make_corpus(5, [0, 0, 0, 0, 1, 2])
    report = evaluate_loso(baseline_factory("majority"), loso_folds(corpus),
                           corpus)
    assert report.uar == pytest.approx(1 / 3)
    assert report.uf1 < report.uar
    assert set(get_available_baselines()) == {"oracle", "uniform",
                                              "majority"}
    with pytest.raises(ValueError):
        baseline_factory("svm")


def test_scores_do_not_depend_on_jobs():
    corpus = make_corpus(6, [0, 1, 2, 2])
    folds = loso_folds(corpus)
    serial = evaluate_loso(baseline_factory("majority"), folds, corpus)
    threaded = evaluate_loso(baseline_factory("majority"), folds, corpus,
                             jobs=3)
    assert serial.to_dict() == threaded.to_dict()


def test_pooled_scores_and_datasets(tmp_path):
    corpus = (make_corpus(2, [0, 1, 2], dataset="smic")
              + make_corpus(3, [0, 1, 2], dataset="casme2"))
    fname = os.path.join(tmp_path, "predictions.jsonl")
    report = evaluate_loso(baseline_factory("oracle"), loso_folds(corpus),
                           corpus, predictions_file=fname)
    assert set(report.per_dataset) == {"casme2", "smic"}
    assert report.per_dataset["smic"]["num_samples"] == 6
    assert len(report.fold_reports) == 5
    table = report.table()
    assert list(table["Dataset"]) == ["Composite", "casme2", "smic"]
    assert "UF1" in report.render_table()
    with open(fname) as f:
        records = [json.loads(line) for line in f]
    assert len(records) == 15
    assert all(r["true_class"] == r["predicted_class"] for r in records)
    saved = report.to_json(os.path.join(tmp_path, "metrics.json"))
    with open(saved) as f:
        assert json.load(f)["complete"] is True


def test_failed_fold_marks_report_incomplete():
    corpus = make_corpus(3, [0, 1, 2])
    oracle = baseline_factory("oracle")

    def factory(split, train_samples):
        if split.held_out == "toy:s1":
            raise RuntimeError("diverged")
        return oracle(split, train_samples)

    with pytest.warns(UserWarning):
        report = evaluate_loso(factory, loso_folds(corpus), corpus)
    assert not report.complete
    assert "toy:s1" in report.failed_folds
    assert report.num_samples == 6
    assert "INCOMPLETE" in report.render_table()
    with pytest.raises(Exception):
        evaluate_loso(factory, loso_folds(corpus), corpus, debug_level=2)
    with pytest.raises(ValueError):
        evaluate_loso(factory, [], corpus)


def test_report_from_confusion():
    report = MetricsReport.from_confusion(ConfusionMatrix(np.eye(3, dtype=int)))
    assert report.macro_f1 == report.uf1
    assert report.per_class_recall == {name: 1.0 for name in CLASS_NAMES}


def test_norm2_diff_of_identical_images_is_empty():
    image = np.random.default_rng(0).uniform(-1, 1, (1, 8, 8))
    diff_map = norm2_diff(image, image)
    assert diff_map.empty
    np.testing.assert_array_equal(diff_map.values, np.zeros((8, 8)))
    assert diff_map.region_report()["centroid"] is None


def test_norm2_diff_single_pixel():
    """A single changed pixel is the whole region."""
    x_on = np.zeros((8, 8))
    x_syn = x_on.copy()
    x_syn[2, 5] = 0.5
    diff_map = norm2_diff(x_syn, x_on)
    assert diff_map.region.sum() == 1
    assert diff_map.region[2, 5]
    assert diff_map.values[2, 5] == 1.0
    assert diff_map.centroid == (2.0, 5.0)
    assert diff_map.bbox == (2, 5, 2, 5)
    with pytest.raises(ValueError):
        norm2_diff(x_syn, np.zeros((4, 4)))
    with pytest.raises(ValueError):
        norm2_diff(x_syn, x_on, top_fraction=0.0)


def test_region_iou():
    a = np.zeros((4, 4), bool)
    b = np.zeros((4, 4), bool)
    assert region_iou(a, b) == 0.0
    a[0, :2] = True
    b[0, 1:3] = True
    assert region_iou(a, b) == pytest.approx(1 / 3)
    assert region_iou(a, a) == 1.0
    with pytest.raises(ValueError):
        region_iou(a, np.zeros((2, 2), bool))


def test_save_difference_map(tmp_path):
    x_syn = np.zeros((8, 8))
    x_syn[1, 1] = 1.0
    pgm, report = save_difference_map(norm2_diff(x_syn, np.zeros((8, 8))),
                                      os.path.join(tmp_path, "diff"))
    assert os.path.exists(pgm)
    with open(report) as f:
        assert json.load(f)["num_pixels"] == 1


def _brute_force_scores(counts):
    f1, recall = [], []
    for c in range(3):
        tp = counts[c][c]
        fp = sum(counts[r][c] for r in range(3) if r != c)
        fn = sum(counts[c][p] for p in range(3) if p != c)
        f1.append(2 * tp / (2 * tp + fp + fn) if 2 * tp + fp + fn else 0.0)
        recall.append(tp / (tp + fn) if tp + fn else 0.0)
    return sum(f1) / 3, sum(recall) / 3


def test_scores_match_brute_force_counting():
    rng = np.random.default_rng(5)
    for _ in range(1000):
        counts = rng.integers(0, 6, (3, 3))
        counts[0, 0] += 1
        uf1, uar = uf1_uar(ConfusionMatrix(counts))
        expected = _brute_force_scores(counts.tolist())
        assert uf1 == pytest.approx(expected[0], abs=1e-12)
        assert uar == pytest.approx(expected[1], abs=1e-12)


def test_score_invariances():
    """Relabeling classes and scaling counts leave UF1 and UAR unchanged."""
    counts = np.array([[5, 2, 0], [1, 6, 3], [2, 0, 4]])
    reference = uf1_uar(ConfusionMatrix(counts))
    perm = [2, 0, 1]
    relabeled = counts[np.ix_(perm, perm)]
    np.testing.assert_allclose(uf1_uar(ConfusionMatrix(relabeled)),
                               reference)
    np.testing.assert_allclose(uf1_uar(ConfusionMatrix(3 * counts)),
                               reference)


def test_pooled_matrix_is_sum_of_dataset_matrices():
    corpus = (make_corpus(2, [0, 1, 2, 0], dataset="smic")
              + make_corpus(3, [1, 1, 2], dataset="samm"))
    report = evaluate_loso(baseline_factory("uniform", seed=2),
                           loso_folds(corpus), corpus)
    total = sum(np.array(sub["confusion"])
                for sub in report.per_dataset.values())
    np.testing.assert_array_equal(total, report.confusion)


def test_difference_map_locality():
    x_on = np.zeros((8, 8))
    x_syn = x_on.copy()
    x_syn[2:4, 2:4] = 0.5
    diff_map = norm2_diff(x_syn, x_on)
    patch = np.zeros((1, 8, 8), bool)
    patch[0, 2:4, 2:6] = True
    assert locality_iou(diff_map, patch) == pytest.approx(0.5)
    report = diff_map.region_report(patch)
    assert report["patch_iou"] == pytest.approx(0.5)
    assert report["local"] is True
    assert "patch_iou" not in diff_map.region_report()
    far = np.zeros((8, 8), bool)
    far[6:, 6:] = True
    assert diff_map.region_report(far)["local"] is False


def test_save_difference_map_with_patch(tmp_path):
    x_syn = np.zeros((8, 8))
    x_syn[1, 1] = 1.0
    patch = np.zeros((8, 8), bool)
    patch[1, 1] = True
    _, report = save_difference_map(norm2_diff(x_syn, np.zeros((8, 8))),
                                    os.path.join(tmp_path, "diff"), patch)
    with open(report) as f:
        assert json.load(f)["patch_iou"] == 1.0
