"""Multiclass linear classification for the product and reply tasks.

A single from-scratch multinomial logistic regression (mini-batch gradient
descent on cross-entropy + L2) sits behind a light ``Classifier`` interface,
with the cross-validation, undersampling and metric protocol used to select
and evaluate models. numpy backs the array arithmetic; everything above it
(gradients, folds, metrics) is implemented here.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from .featurize import SparseVector
from .util import read_json, stable_json_dumps

logger = logging.getLogger(__name__)

MODEL_FORMAT_VERSION = "chainforge-linear-model/1"


class ProductCategory(str, enum.Enum):
    ACCOUNT = "account"
    BOTNET = "botnet"
    CRYPTER = "crypter"
    DDOS_SERVICE = "ddos_service"
    HACKED_SERVER = "hacked_server"
    HACK_FOR_HIRE = "hack_for_hire"
    HOSTING = "hosting"
    MALWARE = "malware"
    PROXY = "proxy"
    SOCIAL_BOOSTER = "social_booster"
    SPAM_TOOL = "spam_tool"
    TRAFFIC = "traffic"
    VIDEO_GAME_SERVICE = "video_game_service"
    OTHER = "other"


class ReplyLabel(str, enum.Enum):
    BUY = "buy"
    SELL = "sell"
    OTHER = "other"


PRODUCT_CLASSES = [c.value for c in ProductCategory]
REPLY_CLASSES = [c.value for c in ReplyLabel]


class TrainingError(Exception):
    pass


@dataclass(frozen=True)
class LabeledExample:
    features: SparseVector
    label: int  # index into the task's class list
    source_post: str = ""


@dataclass(frozen=True)
class TrainConfig:
    l2_lambda: float = 1e-4
    learning_rate: float = 0.5
    lr_decay: float = 0.0  # lr_epoch = learning_rate / (1 + lr_decay * epoch)
    epochs: int = 30
    batch_size: int = 64
    seed: int = 0
    class_weighting: str = "none"  # none | balanced

    def __post_init__(self):
        if self.learning_rate <= 0 or self.epochs <= 0 or self.batch_size <= 0:
            raise ValueError("learning_rate, epochs and batch_size must be positive")
        if self.l2_lambda < 0 or self.lr_decay < 0:
            raise ValueError("l2_lambda and lr_decay must be non-negative")
        if self.class_weighting not in ("none", "balanced"):
            raise ValueError(f"unknown class_weighting {self.class_weighting!r}")

    def to_dict(self) -> dict:
        return {
            "l2_lambda": self.l2_lambda, "learning_rate": self.learning_rate,
            "lr_decay": self.lr_decay, "epochs": self.epochs,
            "batch_size": self.batch_size, "seed": self.seed,
            "class_weighting": self.class_weighting,
        }


@dataclass
class LinearModel:
    weights: np.ndarray  # (n_classes, n_features)
    bias: np.ndarray  # (n_classes,)
    class_names: list[str]
    train_config: TrainConfig
    feature_fingerprint: str = ""
    loss_history: list[float] = field(default_factory=list)

    @property
    def n_classes(self) -> int:
        return self.weights.shape[0]

    @property
    def n_features(self) -> int:
        return self.weights.shape[1]

    @property
    def final_loss(self) -> float:
        return self.loss_history[-1] if self.loss_history else float("nan")

    def save(self, path: str | Path) -> None:
        payload = {
            "format": MODEL_FORMAT_VERSION,
            "class_names": self.class_names,
            "feature_fingerprint": self.feature_fingerprint,
            "train_config": self.train_config.to_dict(),
            "loss_history": self.loss_history,
            "bias": self.bias.tolist(),
            "weights": self.weights.tolist(),
        }
        Path(path).write_text(stable_json_dumps(payload) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "LinearModel":
        payload = read_json(path)
        if payload.get("format") != MODEL_FORMAT_VERSION:
            raise TrainingError(
                f"unsupported model format: expected {MODEL_FORMAT_VERSION}, "
                f"found {payload.get('format')!r}")
        return cls(
            weights=np.array(payload["weights"], dtype=np.float64),
            bias=np.array(payload["bias"], dtype=np.float64),
            class_names=list(payload["class_names"]),
            train_config=TrainConfig(**payload["train_config"]),
            feature_fingerprint=payload.get("feature_fingerprint", ""),
            loss_history=[float(v) for v in payload.get("loss_history", [])],
        )


# ---------------------------------------------------------------------------
# Sparse design matrix (CSR layout over numpy arrays)
# ---------------------------------------------------------------------------

class DesignMatrix:
    """Row-sparse feature matrix; rows are documents, CSR arrays back it."""

    def __init__(self, indptr: np.ndarray, cols: np.ndarray, vals: np.ndarray,
                 n_rows: int, n_features: int):
        self.indptr = indptr
        self.cols = cols
        self.vals = vals
        self.n_rows = n_rows
        self.n_features = n_features

    @classmethod
    def from_vectors(cls, vectors: Sequence[SparseVector]) -> "DesignMatrix":
        if not vectors:
            raise TrainingError("no feature vectors")
        dims = {v.dimension for v in vectors}
        if len(dims) != 1:
            raise TrainingError(f"feature vectors disagree on dimension: {sorted(dims)}")
        indptr = np.zeros(len(vectors) + 1, dtype=np.int64)
        for i, v in enumerate(vectors):
            indptr[i + 1] = indptr[i] + v.nnz()
        cols = np.empty(indptr[-1], dtype=np.int64)
        vals = np.empty(indptr[-1], dtype=np.float64)
        for i, v in enumerate(vectors):
            cols[indptr[i]:indptr[i + 1]] = v.indices
            vals[indptr[i]:indptr[i + 1]] = v.values
        return cls(indptr, cols, vals, len(vectors), dims.pop())

    def take(self, order: np.ndarray) -> "DesignMatrix":
        lengths = self.indptr[1:] - self.indptr[:-1]
        new_lengths = lengths[order]
        indptr = np.zeros(len(order) + 1, dtype=np.int64)
        np.cumsum(new_lengths, out=indptr[1:])
        cols = np.empty(indptr[-1], dtype=np.int64)
        vals = np.empty(indptr[-1], dtype=np.float64)
        for new_row, old_row in enumerate(order):
            src = slice(self.indptr[old_row], self.indptr[old_row + 1])
            dst = slice(indptr[new_row], indptr[new_row + 1])
            cols[dst] = self.cols[src]
            vals[dst] = self.vals[src]
        return DesignMatrix(indptr, cols, vals, len(order), self.n_features)

    def row_segment(self, start: int, stop: int):
        """(cols, vals, local_row_per_nnz) for rows [start, stop)."""
        lo, hi = self.indptr[start], self.indptr[stop]
        lengths = self.indptr[start + 1:stop + 1] - self.indptr[start:stop]
        rows_local = np.repeat(np.arange(stop - start), lengths)
        return self.cols[lo:hi], self.vals[lo:hi], rows_local


def _scores(X: DesignMatrix, start: int, stop: int,
            weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    cols, vals, rows_local = X.row_segment(start, stop)
    n = stop - start
    scores = np.empty((n, weights.shape[0]), dtype=np.float64)
    for c in range(weights.shape[0]):
        scores[:, c] = np.bincount(rows_local, weights=vals * weights[c, cols],
                                   minlength=n)
    scores += bias
    return scores


def _softmax(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def loss_and_grad(weights: np.ndarray, bias: np.ndarray, X: DesignMatrix,
                  labels: np.ndarray, l2_lambda: float,
                  sample_weights: np.ndarray):
    """Weighted-mean cross-entropy + (l2/2)||W||^2 and its exact gradient.

    Shared by the trainer and the finite-difference gradient check; the bias
    is not regularized.
    """
    n = X.n_rows
    scores = _scores(X, 0, n, weights, bias)
    probs = _softmax(scores)
    weight_total = sample_weights.sum()
    log_likelihood = np.log(np.clip(probs[np.arange(n), labels], 1e-300, None))
    loss = -(sample_weights * log_likelihood).sum() / weight_total
    loss += 0.5 * l2_lambda * float((weights * weights).sum())

    delta = probs
    delta[np.arange(n), labels] -= 1.0
    delta *= (sample_weights / weight_total)[:, None]
    grad_w = np.zeros_like(weights)
    cols, vals, rows_local = X.row_segment(0, n)
    for c in range(weights.shape[0]):
        grad_w[c] = np.bincount(cols, weights=vals * delta[rows_local, c],
                                minlength=weights.shape[1])
    grad_w += l2_lambda * weights
    grad_b = delta.sum(axis=0)
    return loss, grad_w, grad_b


def _class_weights(labels: np.ndarray, n_classes: int, mode: str) -> np.ndarray:
    if mode == "none":
        return np.ones(n_classes, dtype=np.float64)
    counts = np.bincount(labels, minlength=n_classes).astype(np.float64)
    weights = np.zeros(n_classes, dtype=np.float64)
    present = counts > 0
    weights[present] = len(labels) / (present.sum() * counts[present])
    return weights


def train(data: Sequence[LabeledExample], config: TrainConfig,
          class_names: Sequence[str]) -> LinearModel:
    """Fit multinomial logistic regression by seeded mini-batch descent."""
    if not data:
        raise TrainingError("no training data")
    labels = np.array([ex.label for ex in data], dtype=np.int64)
    present = set(labels.tolist())
    if len(present) < 2:
        raise TrainingError("training data contains a single class")
    if labels.min() < 0 or labels.max() >= len(class_names):
        raise TrainingError("label index outside class list")
    X = DesignMatrix.from_vectors([ex.features for ex in data])
    n, n_classes = X.n_rows, len(class_names)

    per_class = _class_weights(labels, n_classes, config.class_weighting)
    weights = np.zeros((n_classes, X.n_features), dtype=np.float64)
    bias = np.zeros(n_classes, dtype=np.float64)
    rng = np.random.default_rng(config.seed)
    history: list[float] = []

    for epoch in range(config.epochs):
        lr = config.learning_rate / (1.0 + config.lr_decay * epoch)
        order = rng.permutation(n)
        shuffled = X.take(order)
        shuffled_labels = labels[order]
        for start in range(0, n, config.batch_size):
            stop = min(start + config.batch_size, n)
            batch = DesignMatrix(
                shuffled.indptr[start:stop + 1] - shuffled.indptr[start],
                shuffled.cols[shuffled.indptr[start]:shuffled.indptr[stop]],
                shuffled.vals[shuffled.indptr[start]:shuffled.indptr[stop]],
                stop - start, shuffled.n_features)
            batch_labels = shuffled_labels[start:stop]
            batch_weights = per_class[batch_labels]
            _, grad_w, grad_b = loss_and_grad(
                weights, bias, batch, batch_labels, config.l2_lambda, batch_weights)
            weights -= lr * grad_w
            bias -= lr * grad_b
        epoch_loss, _, _ = loss_and_grad(
            weights, bias, X, labels, config.l2_lambda, per_class[labels])
        if not np.isfinite(epoch_loss):
            raise TrainingError(f"diverged at epoch {epoch}: loss={epoch_loss}")
        history.append(float(epoch_loss))

    return LinearModel(weights=weights, bias=bias,
                       class_names=list(class_names), train_config=config,
                       loss_history=history)


def predict_proba(model: LinearModel, x: SparseVector) -> np.ndarray:
    """Softmax class probabilities; sums to 1 within 1e-9."""
    if x.dimension != model.n_features:
        raise TrainingError(
            f"feature dimension {x.dimension} != model dimension {model.n_features}")
    scores = model.bias.copy()
    for i, v in zip(x.indices, x.values):
        scores += model.weights[:, i] * v
    return _softmax(scores[None, :])[0]


def predict(model: LinearModel, x: SparseVector) -> int:
    """Argmax class index; ties break toward the lowest index."""
    return int(np.argmax(predict_proba(model, x)))


def predict_many(model: LinearModel, vectors: Sequence[SparseVector]) -> np.ndarray:
    """Vectorized argmax predictions for a batch of documents."""
    if not len(vectors):
        return np.zeros(0, dtype=np.int64)
    X = DesignMatrix.from_vectors(vectors)
    if X.n_features != model.n_features:
        raise TrainingError(
            f"feature dimension {X.n_features} != model dimension {model.n_features}")
    out = np.empty(X.n_rows, dtype=np.int64)
    for start in range(0, X.n_rows, 1024):
        stop = min(start + 1024, X.n_rows)
        out[start:stop] = np.argmax(_scores(X, start, stop, model.weights,
                                            model.bias), axis=1)
    return out


# ---------------------------------------------------------------------------
# Classifier interface (room for other engines; softmax is the only one here)
# ---------------------------------------------------------------------------

class Classifier(Protocol):
    def fit(self, data: Sequence[LabeledExample], class_names: Sequence[str]) -> None: ...
    def predict(self, x: SparseVector) -> int: ...
    def predict_proba(self, x: SparseVector) -> np.ndarray: ...


class SoftmaxRegression:
    """The default classifier engine; thin stateful wrapper over train()."""

    def __init__(self, config: TrainConfig | None = None):
        self.config = config or TrainConfig()
        self.model: LinearModel | None = None

    def fit(self, data: Sequence[LabeledExample], class_names: Sequence[str]) -> None:
        self.model = train(data, self.config, class_names)

    def predict(self, x: SparseVector) -> int:
        assert self.model is not None, "fit first"
        return predict(self.model, x)

    def predict_proba(self, x: SparseVector) -> np.ndarray:
        assert self.model is not None, "fit first"
        return predict_proba(self.model, x)


CLASSIFIER_ENGINES = {"softmax": SoftmaxRegression}


# ---------------------------------------------------------------------------
# Cross-validation protocol
# ---------------------------------------------------------------------------

def stratified_kfold(labels: Sequence, k: int, seed: int = 0) -> list[list[int]]:
    """Split indices into k folds preserving per-class proportions.

    Per class and fold, counts differ by at most one; remainders go to the
    currently smallest folds so overall sizes stay balanced. Deterministic
    given the seed. If k exceeds a class's support a warning is logged and
    some folds simply miss that class.
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    if len(labels) == 0:
        raise ValueError("no labels")
    rng = np.random.default_rng(seed)
    by_class: dict = {}
    for index, label in enumerate(labels):
        by_class.setdefault(label, []).append(index)
    folds: list[list[int]] = [[] for _ in range(k)]
    for label in sorted(by_class, key=str):
        indices = np.array(by_class[label], dtype=np.int64)
        if len(indices) < k:
            logger.warning("stratified_kfold: class %r has %d < k=%d examples; "
                           "some folds will miss it", label, len(indices), k)
        indices = indices[rng.permutation(len(indices))]
        base, remainder = divmod(len(indices), k)
        sizes = [base] * k
        if remainder:
            order = sorted(range(k), key=lambda f: (len(folds[f]), f))
            for f in order[:remainder]:
                sizes[f] += 1
        cursor = 0
        for f in range(k):
            folds[f].extend(indices[cursor:cursor + sizes[f]].tolist())
            cursor += sizes[f]
    return [sorted(f) for f in folds]


def undersample(data: Sequence[LabeledExample], class_to_shrink: int,
                target: str | int, seed: int = 0) -> list[LabeledExample]:
    """Shrink one class to a target size by seeded uniform subsampling.

    ``target`` is either an absolute count or ``below:<index>`` meaning
    strictly below another class's support. Training-set use only; other
    classes pass through untouched in original order.
    """
    supports: dict[int, int] = {}
    for ex in data:
        supports[ex.label] = supports.get(ex.label, 0) + 1
    if class_to_shrink not in supports:
        raise ValueError(f"class {class_to_shrink} not present")
    if isinstance(target, str):
        if not target.startswith("below:"):
            raise ValueError(f"bad target {target!r}; use an int or 'below:<class>'")
        reference = int(target.split(":", 1)[1])
        if reference not in supports:
            raise ValueError(f"reference class {reference} not present")
        target_size = supports[reference] - 1
    else:
        target_size = int(target)
    current = supports[class_to_shrink]
    if target_size >= current:
        logger.warning("undersample: target %d >= current support %d; no-op",
                       target_size, current)
        return list(data)
    shrink_positions = [i for i, ex in enumerate(data) if ex.label == class_to_shrink]
    rng = np.random.default_rng(seed)
    kept = set(rng.choice(len(shrink_positions), size=max(target_size, 0),
                          replace=False).tolist())
    keep_positions = {shrink_positions[j] for j in kept}
    return [ex for i, ex in enumerate(data)
            if ex.label != class_to_shrink or i in keep_positions]


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

@dataclass
class MetricsReport:
    class_names: list[str]
    precision: list[float]
    recall: list[float]
    f1: list[float]
    support: list[int]
    weighted_precision: float
    weighted_recall: float
    weighted_f1: float
    weighted_non_other_precision: float
    confusion: list[list[int]]  # rows = truth, columns = predicted

    def to_dict(self) -> dict:
        return {
            "class_names": self.class_names,
            "per_class": {
                name: {"precision": self.precision[i], "recall": self.recall[i],
                       "f1": self.f1[i], "support": self.support[i]}
                for i, name in enumerate(self.class_names)
            },
            "weighted_precision": self.weighted_precision,
            "weighted_recall": self.weighted_recall,
            "weighted_f1": self.weighted_f1,
            "weighted_non_other_precision": self.weighted_non_other_precision,
            "confusion": self.confusion,
        }

    def to_table(self) -> str:
        width = max(len(n) for n in self.class_names + ["weighted"])
        lines = [f"{'class':<{width}}  {'prec':>6}  {'recall':>6}  {'f1':>6}  {'support':>7}"]
        for i, name in enumerate(self.class_names):
            lines.append(f"{name:<{width}}  {self.precision[i]:>6.3f}  "
                         f"{self.recall[i]:>6.3f}  {self.f1[i]:>6.3f}  "
                         f"{self.support[i]:>7d}")
        lines.append(f"{'weighted':<{width}}  {self.weighted_precision:>6.3f}  "
                     f"{self.weighted_recall:>6.3f}  {self.weighted_f1:>6.3f}  "
                     f"{sum(self.support):>7d}")
        lines.append(f"weighted non-other precision: "
                     f"{self.weighted_non_other_precision:.3f}")
        return "\n".join(lines)

    def confusion_to_csv(self) -> str:
        header = "truth\\predicted," + ",".join(self.class_names)
        rows = [header]
        for i, name in enumerate(self.class_names):
            rows.append(name + "," + ",".join(str(c) for c in self.confusion[i]))
        return "\n".join(rows) + "\n"


def evaluate(predictions: Sequence[str], truth: Sequence[str],
             class_names: Sequence[str], other_class: str = "other") -> MetricsReport:
    """Per-class precision/recall/F1 plus the support-weighted aggregates.

    ``weighted_non_other_precision`` weights precision by true support over
    every class except ``other_class``; it is the model-selection metric.
    Zero-denominator scores are defined as 0.
    """
    if len(predictions) != len(truth):
        raise ValueError("predictions and truth differ in length")
    if not truth:
        raise ValueError("empty input")
    index = {name: i for i, name in enumerate(class_names)}
    n = len(class_names)
    confusion = [[0] * n for _ in range(n)]
    for pred, true in zip(predictions, truth):
        confusion[index[true]][index[pred]] += 1

    precision, recall, f1, support = [], [], [], []
    for c in range(n):
        tp = confusion[c][c]
        predicted_c = sum(confusion[r][c] for r in range(n))
        support_c = sum(confusion[c])
        p = tp / predicted_c if predicted_c else 0.0
        r = tp / support_c if support_c else 0.0
        precision.append(p)
        recall.append(r)
        f1.append(2 * p * r / (p + r) if (p + r) else 0.0)
        support.append(support_c)

    total = sum(support)
    weighted_precision = sum(p * s for p, s in zip(precision, support)) / total
    weighted_recall = sum(r * s for r, s in zip(recall, support)) / total
    weighted_f1 = sum(f * s for f, s in zip(f1, support)) / total
    non_other = [c for c in range(n) if class_names[c] != other_class]
    non_other_support = sum(support[c] for c in non_other)
    if non_other_support:
        weighted_non_other = sum(precision[c] * support[c] for c in non_other) \
            / non_other_support
    else:
        weighted_non_other = 0.0
    return MetricsReport(class_names=list(class_names), precision=precision,
                         recall=recall, f1=f1, support=support,
                         weighted_precision=weighted_precision,
                         weighted_recall=weighted_recall,
                         weighted_f1=weighted_f1,
                         weighted_non_other_precision=weighted_non_other,
                         confusion=confusion)


def cross_validate(data: Sequence[LabeledExample], config: TrainConfig,
                   class_names: Sequence[str], k: int = 5, seed: int = 0,
                   train_transform=None) -> tuple[MetricsReport, list[int]]:
    """Stratified k-fold evaluation; returns pooled metrics and the pooled
    out-of-fold predictions (aligned with ``data``).

    ``train_transform`` (e.g. undersampling) applies to each fold's training
    split only; held-out folds keep the natural distribution.
    """
    labels = [ex.label for ex in data]
    folds = stratified_kfold(labels, k, seed)
    predictions = [0] * len(data)
    for fold in folds:
        holdout = set(fold)
        train_set = [ex for i, ex in enumerate(data) if i not in holdout]
        if train_transform is not None:
            train_set = train_transform(train_set)
        model = train(train_set, config, class_names)
        fold_predictions = predict_many(model, [data[i].features for i in fold])
        for i, pred in zip(fold, fold_predictions):
            predictions[i] = int(pred)
    report = evaluate([class_names[p] for p in predictions],
                      [class_names[t] for t in labels], class_names)
    return report, predictions


@dataclass(frozen=True)
class LearningCurvePoint:
    size: int
    mean_weighted_f1: float
    std_weighted_f1: float
    mean_non_other_precision: float
    std_non_other_precision: float
    folds_used: int


def learning_curve(data: Sequence[LabeledExample], sizes: Sequence[int],
                   config: TrainConfig, class_names: Sequence[str],
                   k: int = 5, seed: int = 0) -> list[LearningCurvePoint]:
    """Score vs training-set size: per size, train on a stratified subsample
    of each fold's training split and evaluate on the held-out fold."""
    labels = [ex.label for ex in data]
    folds = stratified_kfold(labels, k, seed)
    points = []
    n_classes_present = len(set(labels))
    for size_index, size in enumerate(sorted(sizes)):
        if size < n_classes_present:
            logger.warning("learning_curve: size %d < %d classes; skipped",
                           size, n_classes_present)
            continue
        f1_scores, precision_scores = [], []
        for fold_index, fold in enumerate(folds):
            holdout = set(fold)
            train_indices = [i for i in range(len(data)) if i not in holdout]
            if size > len(train_indices):
                logger.warning("learning_curve: size %d exceeds fold training "
                               "size %d; using all", size, len(train_indices))
            subsample = _stratified_subsample(
                train_indices, labels, min(size, len(train_indices)),
                np.random.default_rng((seed, fold_index, size_index)))
            model = train([data[i] for i in subsample], config, class_names)
            fold_predictions = predict_many(model, [data[i].features for i in fold])
            report = evaluate([class_names[int(p)] for p in fold_predictions],
                              [class_names[labels[i]] for i in fold], class_names)
            f1_scores.append(report.weighted_f1)
            precision_scores.append(report.weighted_non_other_precision)
        points.append(LearningCurvePoint(
            size=size,
            mean_weighted_f1=float(np.mean(f1_scores)),
            std_weighted_f1=float(np.std(f1_scores)),
            mean_non_other_precision=float(np.mean(precision_scores)),
            std_non_other_precision=float(np.std(precision_scores)),
            folds_used=len(folds)))
    return points


def _stratified_subsample(indices: list[int], labels: Sequence[int], size: int,
                          rng: np.random.Generator) -> list[int]:
    """Class-proportional subsample via largest remainder; at least one
    example per present class when size allows."""
    by_class: dict[int, list[int]] = {}
    for i in indices:
        by_class.setdefault(labels[i], []).append(i)
    classes = sorted(by_class)
    total = len(indices)
    size = min(size, total)
    exact = {c: size * len(by_class[c]) / total for c in classes}
    counts = {c: min(int(exact[c]), len(by_class[c])) for c in classes}
    if size >= len(classes):
        for c in classes:
            if counts[c] == 0:
                counts[c] = 1
    shortfall = size - sum(counts.values())
    remainders = sorted(classes, key=lambda c: (-(exact[c] - int(exact[c])), c))
    while shortfall > 0:
        progressed = False
        for c in remainders:
            if shortfall == 0:
                break
            if counts[c] < len(by_class[c]):
                counts[c] += 1
                shortfall -= 1
                progressed = True
        if not progressed:
            break
    while shortfall < 0:
        for c in sorted(classes, key=lambda c: -counts[c]):
            if counts[c] > 1:
                counts[c] -= 1
                shortfall += 1
                break
        else:
            break
    chosen: list[int] = []
    for c in classes:
        pool = by_class[c]
        take = min(counts[c], len(pool))
        picked = rng.choice(len(pool), size=take, replace=False)
        chosen.extend(pool[j] for j in sorted(picked.tolist()))
    return sorted(chosen)
