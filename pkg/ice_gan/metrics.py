"""
Recognition metrics, LOSO evaluation harness and difference maps.

UF1 and UAR are the unweighted means over classes of the per-class F1 and
recall. CDE scores come from one confusion matrix pooled over all folds,
not from the mean of per-fold scores.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict
import json
import numpy as np
import pandas as pd
from sklearn.metrics import confusion_matrix
from .load_data import CLASS_NAMES, write_pgm
from .utils import debug_message, get_rng, progress_message

NUM_CLASSES = len(CLASS_NAMES)
# difference-map regions overlapping the class patch by more than this are
# counted as local edits
LOCALITY_IOU = 0.3


class ConfusionMatrix:
    """3x3 integer counts; rows are true classes, columns predictions."""

    def __init__(self, counts=None):
        if counts is None:
            counts = np.zeros((NUM_CLASSES, NUM_CLASSES), dtype=np.int64)
        counts = np.asarray(counts)
        if counts.shape != (NUM_CLASSES, NUM_CLASSES):
            raise ValueError(f"Confusion matrix must be {NUM_CLASSES}x"
                             f"{NUM_CLASSES}, got shape {counts.shape}")
        if np.any(counts < 0) or np.any(counts != np.round(counts)):
            raise ValueError("Confusion counts must be nonnegative integers, "
                             f"got {counts.tolist()}")
        self.counts = counts.astype(np.int64)

    @classmethod
    def from_labels(cls, true_classes, predicted_classes):
        true_classes = np.asarray(true_classes, dtype=np.int64)
        predicted_classes = np.asarray(predicted_classes, dtype=np.int64)
        if true_classes.shape != predicted_classes.shape:
            raise ValueError(f"Got {true_classes.shape} true labels and "
                             f"{predicted_classes.shape} predictions.")
        if true_classes.size == 0:
            return cls()
        return cls(confusion_matrix(true_classes, predicted_classes,
                                    labels=list(range(NUM_CLASSES))))

    @property
    def total(self):
        return int(self.counts.sum())

    def __add__(self, other):
        return ConfusionMatrix(self.counts + other.counts)

    def __eq__(self, other):
        return (isinstance(other, ConfusionMatrix)
                and np.array_equal(self.counts, other.counts))

    def __repr__(self):
        return f"ConfusionMatrix({self.counts.tolist()})"


def per_class_scores(cm):
    """Per-class (F1, recall) arrays; zero denominators give 0."""
    counts = cm.counts.astype(np.float64)
    tp = np.diag(counts)
    fp = counts.sum(axis=0) - tp
    fn = counts.sum(axis=1) - tp
    f1_den = 2 * tp + fp + fn
    rec_den = tp + fn
    f1 = np.divide(2 * tp, f1_den, out=np.zeros_like(tp), where=f1_den > 0)
    recall = np.divide(tp, rec_den, out=np.zeros_like(tp), where=rec_den > 0)
    return f1, recall


def uf1_uar(cm):
    """(UF1, UAR) of a confusion matrix.

    Raises ValueError for a matrix without samples.
    """
    if cm.total == 0:
        raise ValueError("Cannot score an empty confusion matrix.")
    f1, recall = per_class_scores(cm)
    return float(np.mean(f1)), float(np.mean(recall))


@dataclass
class MetricsReport:
    """Scores of one evaluation.

    macro_f1 equals uf1; it is kept as its own field because single-dataset
    tables report it under that name.
    """
    uf1: float
    uar: float
    macro_f1: float
    per_class_f1: dict
    per_class_recall: dict
    confusion: list
    num_samples: int
    fold_count: int = 1
    mode: str = "CDE"
    per_dataset: dict = field(default_factory=dict)
    fold_reports: dict = field(default_factory=dict)
    failed_folds: dict = field(default_factory=dict)

    @property
    def complete(self):
        return len(self.failed_folds) == 0

    @classmethod
    def from_confusion(cls, cm, **kwargs):
        uf1, uar = uf1_uar(cm)
        f1, recall = per_class_scores(cm)
        return cls(uf1=uf1, uar=uar, macro_f1=uf1,
                   per_class_f1=dict(zip(CLASS_NAMES, f1.tolist())),
                   per_class_recall=dict(zip(CLASS_NAMES, recall.tolist())),
                   confusion=cm.counts.tolist(), num_samples=cm.total,
                   **kwargs)

    def to_dict(self):
        out = asdict(self)
        out["complete"] = self.complete
        return out

    def to_json(self, fname):
        with open(fname, "w") as f:
            json.dump(self.to_dict(), f, indent=2)
        print(f"Metrics report saved to {fname}")
        return fname

    def table(self):
        """pandas DataFrame with one row per dataset plus the composite."""
        rows = [{"Dataset": "Composite" if self.mode == "CDE"
                 else "Overall",
                 "UF1": self.uf1, "UAR": self.uar, "macro-F1": self.macro_f1,
                 "Samples": self.num_samples}]
        for name in sorted(self.per_dataset):
            sub = self.per_dataset[name]
            rows.append({"Dataset": name, "UF1": sub["uf1"],
                         "UAR": sub["uar"], "macro-F1": sub["macro_f1"],
                         "Samples": sub["num_samples"]})
        return pd.DataFrame(rows)

    def render_table(self):
        """Fixed-width text table of the scores."""
        text = self.table().to_string(index=False, float_format="%.4f")
        if not self.complete:
            text += (f"\nINCOMPLETE: {len(self.failed_folds)} of "
                     f"{self.fold_count} folds failed")
        return text


class OracleClassifier:
    """Reads the true labels. Upper bound for harness checks."""

    def fit(self, samples):
        return self

    def predict(self, samples):
        return np.array([s.class_index for s in samples], dtype=np.int64)


class UniformRandomClassifier:
    """Draws every prediction uniformly from the three classes."""

    def __init__(self, seed=0):
        self.rng = get_rng(seed)

    def fit(self, samples):
        return self

    def predict(self, samples):
        return self.rng.integers(0, NUM_CLASSES, len(samples))


class MajorityClassifier:
    """Predicts the most frequent training class (ties to the lower index)."""

    def __init__(self):
        self.majority = 0

    def fit(self, samples):
        counts = np.bincount([s.class_index for s in samples],
                             minlength=NUM_CLASSES)
        self.majority = int(np.argmax(counts))
        return self

    def predict(self, samples):
        return np.full(len(samples), self.majority, dtype=np.int64)


def get_available_baselines(return_dict=False):
    models = {"oracle": OracleClassifier,
              "uniform": UniformRandomClassifier,
              "majority": MajorityClassifier}
    return models if return_dict else list(models.keys())


def baseline_factory(name, seed=0):
    """Model factory for `evaluate_loso` fitting a baseline per fold."""
    models = get_available_baselines(return_dict=True)
    if name not in models:
        raise ValueError(f"Unknown baseline {name!r}. Must be one of "
                         f"{list(models)}")

    def factory(split, train_samples):
        if name == "uniform":
            # one stream per held-out subject, independent of fold order
            model = models[name]([seed, *split.held_out.encode()])
        else:
            model = models[name]()
        return model.fit(train_samples)
    return factory


def _run_fold(model_factory, split, corpus):
    train = split.train_samples(corpus)
    test = split.test_samples(corpus)
    model = model_factory(split, train)
    predicted = np.asarray(model.predict(test), dtype=np.int64)
    if predicted.shape != (len(test),):
        raise ValueError(f"Fold {split.held_out}: expected {len(test)} "
                         f"predictions, got shape {predicted.shape}")
    return test, predicted


def evaluate_loso(model_factory, folds, corpus, jobs=1, debug_level=0,
                  verbose=False, predictions_file=None):
    """Train and score one model per LOSO fold.

    parameters:
    -----------
    model_factory: callable
        `model_factory(split, train_samples)` returns a fitted model whose
        `predict(samples)` gives class indices.
    folds: list of LosoSplit
    corpus: list of Sample
    jobs: int
        Folds run concurrently on up to `jobs` threads. The reduction is
        ordered by held-out subject, so the report does not depend on it.
    debug_level: int
        A failing fold is skipped with a warning; the report is then
        flagged incomplete. With debug_level 2 the failure is raised.
    verbose: bool
        Print fold progress.
    predictions_file: str
        If given, write one JSON line per test sample.

    returns:
    --------
    MetricsReport with the pooled scores, per-dataset sub-reports and one
    sub-report per fold.
    """
    if len(folds) == 0:
        raise ValueError("evaluate_loso needs at least one fold.")
    if jobs < 1:
        raise ValueError(f"jobs must be >= 1, got {jobs}")
    modes = {split.mode for split in folds}
    if len(modes) != 1:
        raise ValueError(f"Folds mix LOSO modes {sorted(modes)}")

    def run(split):
        progress_message(f"Fold {split.held_out}: training", verbose)
        try:
            return split, _run_fold(model_factory, split, corpus), None
        except Exception as err:
            return split, None, err

    if jobs == 1:
        results = [run(split) for split in folds]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run, folds))
    results.sort(key=lambda item: item[0].held_out)

    pooled = ConfusionMatrix()
    per_dataset = {}
    fold_reports = {}
    failed = {}
    records = []
    for split, outcome, err in results:
        if err is not None:
            failed[split.held_out] = f"{type(err).__name__}: {err}"
            debug_message(f"Fold {split.held_out} failed and is skipped: "
                          f"{err}", debug_level)
            continue
        test, predicted = outcome
        true = np.array([s.class_index for s in test], dtype=np.int64)
        fold_cm = ConfusionMatrix.from_labels(true, predicted)
        pooled = pooled + fold_cm
        if fold_cm.total > 0:
            fold_reports[split.held_out] = asdict(
                MetricsReport.from_confusion(fold_cm, mode=split.mode))
        for sample, y_true, y_pred in zip(test, true, predicted):
            cm = ConfusionMatrix.from_labels([y_true], [y_pred])
            per_dataset[sample.dataset_id] = (
                per_dataset.get(sample.dataset_id, ConfusionMatrix()) + cm)
            records.append({"sample_id": sample.sample_id,
                            "subject": sample.subject_key,
                            "dataset": sample.dataset_id,
                            "true_class": int(y_true),
                            "predicted_class": int(y_pred)})
        progress_message(f"Fold {split.held_out}: {len(test)} samples "
                         "scored", verbose)
    if pooled.total == 0:
        raise ValueError(f"No fold produced predictions; failures: {failed}")
    if predictions_file is not None:
        with open(predictions_file, "w") as f:
            for record in records:
                f.write(json.dumps(record) + "\n")
    return MetricsReport.from_confusion(
        pooled, fold_count=len(folds), mode=folds[0].mode,
        per_dataset={name: asdict(MetricsReport.from_confusion(cm,
                                                               mode="SDE"))
                     for name, cm in sorted(per_dataset.items())},
        fold_reports=fold_reports, failed_folds=failed)


@dataclass
class DifferenceMap:
    """Normalized squared-difference map and its top-intensity region.

    region is a boolean mask; centroid is (row, col) and bbox is
    (row_min, col_min, row_max, col_max), both None when the map is zero.
    """
    values: np.ndarray
    region: np.ndarray
    centroid: tuple = None
    bbox: tuple = None

    @property
    def empty(self):
        return not self.region.any()

    def region_report(self, patch_mask=None):
        """Region statistics; with `patch_mask` also its IoU with the region
        and whether that IoU passes LOCALITY_IOU."""
        report = {"empty": self.empty,
                  "num_pixels": int(self.region.sum()),
                  "centroid": (None if self.centroid is None
                               else [float(v) for v in self.centroid]),
                  "bbox": (None if self.bbox is None
                           else [int(v) for v in self.bbox])}
        if patch_mask is not None:
            iou = locality_iou(self, patch_mask)
            report["patch_iou"] = iou
            report["local"] = iou > LOCALITY_IOU
        return report


def norm2_diff(x_syn, x_on, top_fraction=0.05):
    """Per-pixel squared difference between two images.

    The map is min-max normalized to [0, 1]. The region holds the
    `top_fraction` most intense pixels, taken among pixels with a nonzero
    difference; ties at the threshold are included.

    parameters:
    -----------
    x_syn, x_on:
        Images of the same shape, (H, W) or (1, H, W).
    top_fraction: float
        Fraction of all pixels forming the region, in (0, 1].

    returns:
    --------
    DifferenceMap
    """
    x_syn = np.asarray(x_syn, dtype=np.float64)
    x_on = np.asarray(x_on, dtype=np.float64)
    if x_syn.shape != x_on.shape:
        raise ValueError(f"Shape mismatch in norm2_diff: {x_syn.shape} vs "
                         f"{x_on.shape}")
    if not 0 < top_fraction <= 1:
        raise ValueError(f"top_fraction must be in (0, 1], got "
                         f"{top_fraction}")
    diff = np.squeeze((x_syn - x_on) ** 2)
    if diff.ndim != 2:
        raise ValueError(f"norm2_diff expects single images, got "
                         f"{x_syn.shape}")
    low, high = diff.min(), diff.max()
    if high == 0:
        return DifferenceMap(np.zeros_like(diff), np.zeros(diff.shape, bool))
    values = (diff - low) / (high - low)
    positive = diff > 0
    k = min(int(np.ceil(top_fraction * diff.size)), int(positive.sum()))
    threshold = np.sort(diff[positive])[::-1][k - 1]
    region = positive & (diff >= threshold)
    rows, cols = np.nonzero(region)
    centroid = (rows.mean(), cols.mean())
    bbox = (rows.min(), cols.min(), rows.max(), cols.max())
    return DifferenceMap(values, region, centroid, bbox)


def region_iou(mask_a, mask_b):
    """Intersection over union of two boolean masks; 0 if both are empty."""
    mask_a, mask_b = np.asarray(mask_a, bool), np.asarray(mask_b, bool)
    if mask_a.shape != mask_b.shape:
        raise ValueError(f"Shape mismatch in region_iou: {mask_a.shape} vs "
                         f"{mask_b.shape}")
    union = np.logical_or(mask_a, mask_b).sum()
    if union == 0:
        return 0.0
    return float(np.logical_and(mask_a, mask_b).sum() / union)


def locality_iou(diff_map, patch_mask):
    """IoU between the top region of `diff_map` and a known class patch.

    patch_mask is boolean (H, W) or (1, H, W), e.g. `Sample.patch_mask` of
    the toy corpus.
    """
    return region_iou(diff_map.region, np.squeeze(np.asarray(patch_mask)))


def save_difference_map(diff_map, prefix, patch_mask=None):
    """Write `prefix`.pgm and the region report `prefix`.json."""
    write_pgm(f"{prefix}.pgm", diff_map.values)
    with open(f"{prefix}.json", "w") as f:
        json.dump(diff_map.region_report(patch_mask), f, indent=2)
    return f"{prefix}.pgm", f"{prefix}.json"
