"""Dataset ingestion, standardization, feature selection, and metrics.

Supported input formats: delimited text (comma or tab, header row, one
sample per row with a label column named label/class/target/y or placed
last) and an .npz bundle with arrays ``X`` (n x d float), ``y`` (n ints)
and optional ``feature_names``. Rows containing non-finite values are
dropped at load time and counted.

The five benchmark classes are indexed in the fixed order g, q, t, W, Z.
Standardization uses the population (1/n) standard deviation, fit on the
training split only and reapplied to held-out data.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata
from sklearn.ensemble import RandomForestRegressor

from .errors import DataError, MetricsError

__all__ = [
    "CLASS_NAMES", "Dataset", "StandardizationParams", "MetricsReport",
    "load_dataset", "standardize", "apply_standardization",
    "train_test_split", "feature_importance", "select_features",
    "metrics", "auc_rank", "roc_points", "relative_accuracy",
    "load_baseline_accuracies",
]

logger = logging.getLogger(__name__)

CLASS_NAMES = ("g", "q", "t", "W", "Z")
_CLASS_INDEX = {name: i for i, name in enumerate(CLASS_NAMES)}
_LABEL_HEADERS = {"label", "class", "target", "y"}


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    feature_names: list[str]
    n_dropped: int = 0

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]


@dataclass
class StandardizationParams:
    mean: np.ndarray
    std: np.ndarray


def _parse_label(token: str, lineno: int) -> int:
    token = token.strip()
    if token in _CLASS_INDEX:
        return _CLASS_INDEX[token]
    try:
        value = float(token)
    except ValueError:
        raise DataError(f"line {lineno}: bad label {token!r}") from None
    if value != int(value):
        raise DataError(f"line {lineno}: non-integer label {token!r}")
    return int(value)


def load_dataset(path, fmt: str | None = None,
                 aliases: dict[str, int] | None = None) -> Dataset:
    """Load a dataset file; format is inferred from the suffix when omitted."""
    path = str(path)
    if fmt is None:
        fmt = "npz" if path.endswith(".npz") else "delimited"
    if fmt == "npz":
        return _load_npz(path)
    if fmt in ("delimited", "csv", "tsv"):
        return _load_delimited(path, aliases)
    raise DataError(f"unknown dataset format {fmt!r}")


def _load_npz(path) -> Dataset:
    try:
        bundle = np.load(path, allow_pickle=False)
    except Exception as exc:
        raise DataError(f"cannot read {path}: {exc}") from None
    if "X" not in bundle or "y" not in bundle:
        raise DataError(f"{path}: npz bundle must contain arrays 'X' and 'y'")
    X = np.asarray(bundle["X"], dtype=np.float64)
    y = np.asarray(bundle["y"], dtype=np.int64)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise DataError(f"{path}: X must be (n, d) and y must be (n,)")
    if "feature_names" in bundle:
        names = [str(s) for s in bundle["feature_names"]]
    else:
        names = [f"x{i}" for i in range(X.shape[1])]
    keep = np.isfinite(X).all(axis=1)
    dropped = int((~keep).sum())
    if dropped:
        logger.warning("dropped %d rows with non-finite values from %s", dropped, path)
    return Dataset(X[keep], y[keep], names, n_dropped=dropped)


def _load_delimited(path, aliases: dict[str, int] | None) -> Dataset:
    with open(path, "r", newline="", encoding="utf-8") as fh:
        header_line = fh.readline()
        if not header_line.strip():
            raise DataError(f"{path}: empty file")
        delim = "\t" if header_line.count("\t") >= header_line.count(",") else ","
        header = [h.strip() for h in header_line.rstrip("\n").split(delim)]
        label_col = None
        for i, name in enumerate(header):
            if name.lower() in _LABEL_HEADERS:
                label_col = i
                break
        if label_col is None:
            label_col = len(header) - 1
        feature_cols = [i for i in range(len(header)) if i != label_col]
        feature_headers = [header[i] for i in feature_cols]

        if aliases is not None:
            order = []
            for name in feature_headers:
                if name not in aliases:
                    raise DataError(f"{path}: header {name!r} missing from alias map")
                order.append(aliases[name])
            d = max(order) + 1
            if sorted(order) != list(range(d)):
                raise DataError(f"{path}: alias map does not cover indices 0..{d - 1}")
            names = [""] * d
            for name, idx in zip(feature_headers, order):
                names[idx] = name
        else:
            order = list(range(len(feature_cols)))
            d = len(feature_cols)
            names = feature_headers

        rows, labels = [], []
        dropped = 0
        reader = csv.reader(fh, delimiter=delim)
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != len(header):
                raise DataError(
                    f"{path}: line {lineno}: expected {len(header)} columns, got {len(row)}"
                )
            try:
                raw = [float(row[i]) for i in feature_cols]
            except ValueError as exc:
                raise DataError(f"{path}: line {lineno}: {exc}") from None
            if not all(math.isfinite(v) for v in raw):
                dropped += 1
                continue
            values = [0.0] * d
            for slot, v in zip(order, raw):
                values[slot] = v
            rows.append(values)
            labels.append(_parse_label(row[label_col], lineno))
    if dropped:
        logger.warning("dropped %d rows with non-finite values from %s", dropped, path)
    if not rows:
        raise DataError(f"{path}: no data rows")
    return Dataset(
        np.asarray(rows, dtype=np.float64),
        np.asarray(labels, dtype=np.int64),
        names,
        n_dropped=dropped,
    )


# ---------------------------------------------------------------------------
# Standardization and splits
# ---------------------------------------------------------------------------

def standardize(train: Dataset) -> tuple[StandardizationParams, Dataset]:
    """Shift/scale every column to mean 0, population std 1 on this split."""
    if train.n < 2:
        raise DataError("need at least 2 samples to standardize")
    mean = train.X.mean(axis=0)
    std = train.X.std(axis=0)  # population (1/n) convention
    bad = np.flatnonzero(std == 0.0)
    if bad.size:
        raise DataError(f"zero-variance feature column(s): {bad.tolist()}")
    params = StandardizationParams(mean=mean, std=std)
    out = Dataset(
        apply_standardization(params, train.X),
        train.y.copy(),
        list(train.feature_names),
        n_dropped=train.n_dropped,
    )
    return params, out


def apply_standardization(params: StandardizationParams, X: np.ndarray) -> np.ndarray:
    return (np.asarray(X, dtype=np.float64) - params.mean) / params.std


def train_test_split(ds: Dataset, test_fraction: float = 0.2,
                     seed: int = 17) -> tuple[Dataset, Dataset]:
    """Deterministic shuffled split."""
    if not (0.0 < test_fraction < 1.0):
        raise DataError(f"test_fraction must be in (0, 1), got {test_fraction}")
    perm = np.random.default_rng(seed).permutation(ds.n)
    n_test = max(1, int(round(ds.n * test_fraction)))
    test_idx, train_idx = perm[:n_test], perm[n_test:]
    make = lambda idx: Dataset(ds.X[idx], ds.y[idx], list(ds.feature_names))
    return make(train_idx), make(test_idx)


# ---------------------------------------------------------------------------
# Feature selection
# ---------------------------------------------------------------------------

def feature_importance(ds: Dataset, seed: int = 0, n_trees: int = 64,
                       max_depth: int = 6, bootstrap_fraction: float = 0.8,
                       n_classes: int = 5) -> np.ndarray:
    """Random-forest importances aggregated over one-vs-rest targets.

    Scores are normalized to sum to 1 across features.
    """
    if ds.n < 100:
        raise DataError(f"need >= 100 samples for importance scores, got {ds.n}")
    totals = np.zeros(ds.d)
    for cls in range(n_classes):
        target = np.where(ds.y == cls, 1.0, -1.0)
        forest = RandomForestRegressor(
            n_estimators=n_trees,
            max_depth=max_depth,
            bootstrap=True,
            max_samples=bootstrap_fraction,
            criterion="squared_error",
            random_state=seed + cls,
            n_jobs=1,
        )
        forest.fit(ds.X, target)
        totals += forest.feature_importances_
    if totals.sum() == 0.0:
        return np.full(ds.d, 1.0 / ds.d)
    return totals / totals.sum()


def select_features(scores: np.ndarray, k: int = 6) -> list[int]:
    """Indices of the k best scores, ascending; ties go to the lower index."""
    scores = np.asarray(scores)
    if k > scores.size:
        raise DataError(f"cannot select {k} of {scores.size} features")
    ranked = sorted(range(scores.size), key=lambda i: (-scores[i], i))
    return sorted(ranked[:k])


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

@dataclass
class MetricsReport:
    accuracy: float
    auc: dict[int, float]
    roc: dict[int, tuple[np.ndarray, np.ndarray]]
    confusion: np.ndarray


def auc_rank(scores: np.ndarray, positive: np.ndarray) -> float:
    """Mann-Whitney AUC with midrank tie handling.

    `positive` is a boolean mask of the positive class.
    """
    scores = np.asarray(scores, dtype=np.float64)
    positive = np.asarray(positive, dtype=bool)
    n_pos = int(positive.sum())
    n_neg = positive.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricsError("AUC is undefined when only one class is present")
    ranks = rankdata(scores, method="average")
    return float(
        (ranks[positive].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)
    )


def roc_points(scores: np.ndarray, positive: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(FPR, TPR) at every distinct score threshold, from (0,0) to (1,1)."""
    scores = np.asarray(scores, dtype=np.float64)
    positive = np.asarray(positive, dtype=bool)
    n_pos = int(positive.sum())
    n_neg = positive.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricsError("ROC is undefined when only one class is present")
    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    tp = np.cumsum(positive[order])
    fp = np.cumsum(~positive[order])
    # keep the last point of each tied-score block
    distinct = np.r_[sorted_scores[1:] != sorted_scores[:-1], True]
    tpr = np.r_[0.0, tp[distinct] / n_pos]
    fpr = np.r_[0.0, fp[distinct] / n_neg]
    return fpr, tpr


def metrics(scores: np.ndarray, y: np.ndarray, n_classes: int = 5) -> MetricsReport:
    """Argmax accuracy, per-class rank AUC, ROC points, confusion matrix."""
    scores = np.asarray(scores, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if scores.ndim != 2 or scores.shape != (y.size, n_classes):
        raise MetricsError(
            f"scores must be (n, {n_classes}), got {scores.shape} for n={y.size}"
        )
    predicted = scores.argmax(axis=1)
    accuracy = float((predicted == y).mean())
    confusion = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(confusion, (y, predicted), 1)
    auc, roc = {}, {}
    for cls in range(n_classes):
        positive = y == cls
        auc[cls] = auc_rank(scores[:, cls], positive)
        roc[cls] = roc_points(scores[:, cls], positive)
    return MetricsReport(accuracy=accuracy, auc=auc, roc=roc, confusion=confusion)


def relative_accuracy(model_acc: float, baseline_acc: float) -> float:
    if baseline_acc <= 0.0:
        raise MetricsError(f"baseline accuracy must be positive, got {baseline_acc}")
    return model_acc / baseline_acc


def load_baseline_accuracies(path) -> dict[tuple[int, int], float]:
    """Read per-precision baseline accuracies from lines "B,I,accuracy"."""
    table: dict[tuple[int, int], float] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = [p.strip() for p in line.split(",")]
            if len(parts) != 3:
                raise DataError(f"{path}:{lineno}: expected 'B,I,accuracy'")
            try:
                table[(int(parts[0]), int(parts[1]))] = float(parts[2])
            except ValueError:
                raise DataError(f"{path}:{lineno}: bad baseline row {line!r}") from None
    if not table:
        raise DataError(f"{path}: no baseline rows found")
    return table
