"""Classification and evaluation on the shared latent space.

Any classifier here consumes latent codes (or concatenations of them),
never raw sensor data.  Because aligned sensors share the manifold, a
classifier trained on one sensor's embeddings can score another's.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nm
from .errors import ConfigError, DataError
from .mining import pairwise_sq_distances
from .model import EmbeddingSet
from .numerics import Tensor


class ShallowClassifier:
    """Dense tanh stack with a softmax head over latent inputs."""

    def __init__(self, input_dim: int, n_classes: int, hidden: tuple[int, ...],
                 params: dict[str, Tensor]):
        self.input_dim = input_dim
        self.n_classes = n_classes
        self.hidden = hidden
        self.params = params

    @classmethod
    def build(cls, input_dim: int, n_classes: int, hidden=(128, 64),
              seed: int = 0) -> "ShallowClassifier":
        if n_classes < 2:
            raise ConfigError(f"classifier needs at least 2 classes, got {n_classes}")
        hidden = tuple(int(h) for h in hidden)
        if any(h < 1 for h in hidden):
            raise ConfigError(f"hidden widths must be positive, got {hidden}")
        rng = np.random.default_rng(seed)
        params: dict[str, Tensor] = {}
        fan_in = input_dim
        for i, width in enumerate(hidden + (n_classes,)):
            params[f"w{i}"] = Tensor(nm.glorot_uniform(rng, fan_in, width), requires_grad=True)
            params[f"b{i}"] = Tensor(np.zeros((1, width)), requires_grad=True)
            fan_in = width
        return cls(input_dim, n_classes, hidden, params)

    def logits(self, x: Tensor) -> Tensor:
        h = x
        last = len(self.hidden)
        for i in range(last + 1):
            h = nm.affine(h, self.params[f"w{i}"], self.params[f"b{i}"])
            if i < last:
                h = nm.tanh(h)
        return h

    def parameters(self) -> list[Tensor]:
        return [self.params[name] for name in sorted(self.params)]

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        return nm.softmax(self.logits(Tensor(np.asarray(x))).data)

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.argmax(self.predict_proba(x), axis=1)


def train_classifier(features: np.ndarray, labels: np.ndarray, hidden=(128, 64),
                     epochs: int = 150, learning_rate: float = 1e-3,
                     batch_size: int = 64, seed: int = 0,
                     n_classes: int | None = None) -> ShallowClassifier:
    """Cross-entropy fit with Adam over shuffled minibatches."""
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if features.ndim != 2 or features.shape[0] != labels.shape[0]:
        raise DataError(f"features {features.shape} vs labels {labels.shape}")
    present = np.unique(labels)
    if present.size < 2:
        raise ConfigError(f"training labels contain {present.size} class(es); need at least 2")
    if n_classes is None:
        n_classes = int(labels.max()) + 1
    clf = ShallowClassifier.build(features.shape[1], n_classes, hidden, seed)
    optimizer = nm.Adam(clf.parameters(), learning_rate)
    rng = np.random.default_rng(seed)
    n = features.shape[0]
    for _ in range(epochs):
        order = rng.permutation(n)
        for lo in range(0, n, batch_size):
            idx = order[lo:lo + batch_size]
            loss = nm.softmax_cross_entropy(clf.logits(Tensor(features[idx])), labels[idx])
            loss.backward()
            optimizer.step()
    return clf


def fuse_embeddings(sets: list[EmbeddingSet]) -> np.ndarray:
    """Column-wise concatenation of latent codes over identically ordered
    samples; refuses misaligned inputs."""
    if not sets:
        raise ValueError("fuse_embeddings needs at least one embedding set")
    first = sets[0]
    for other in sets[1:]:
        if not np.array_equal(first.sample_ids, other.sample_ids) or \
                not np.array_equal(first.labels, other.labels):
            raise DataError(
                f"embedding sets '{first.sensor_id}' and '{other.sensor_id}' are not aligned")
    return np.concatenate([s.z for s in sets], axis=1)


def classify_knn_classavg(train_z: np.ndarray, train_labels: np.ndarray,
                          test_z: np.ndarray, k: int | None = None) -> np.ndarray:
    """Nearest-class-mean over each class's k closest training samples.

    For every test point and class, the squared distances to that class's
    k nearest training members are averaged; the class with the smallest
    average wins, ties to the lowest class index.  k is capped at the
    class size; k=None averages over whole classes.
    """
    train_z = np.asarray(train_z, dtype=np.float64)
    train_labels = np.asarray(train_labels, dtype=np.int64)
    test_z = np.asarray(test_z, dtype=np.float64)
    if train_z.shape[0] == 0:
        raise ValueError("classify_knn_classavg: empty training set")
    if k is not None and k < 1:
        raise ValueError(f"classify_knn_classavg: k {k} must be positive")
    distances = pairwise_sq_distances(test_z, train_z)
    classes = np.unique(train_labels)
    scores = np.empty((test_z.shape[0], classes.size))
    for column, cls in enumerate(classes):
        cols = np.flatnonzero(train_labels == cls)
        class_d = distances[:, cols]
        kk = class_d.shape[1] if k is None else min(k, class_d.shape[1])
        nearest = np.partition(class_d, kk - 1, axis=1)[:, :kk]
        scores[:, column] = nearest.mean(axis=1)
    return classes[np.argmin(scores, axis=1)]


class KnnClassAvg:
    """Fit/predict wrapper so the class-averaged KNN can join ensembles."""

    def __init__(self, k: int | None = None, n_classes: int | None = None):
        self.k = k
        self.n_classes = n_classes
        self._z: np.ndarray | None = None
        self._labels: np.ndarray | None = None

    def fit(self, train_z: np.ndarray, train_labels: np.ndarray) -> "KnnClassAvg":
        self._z = np.asarray(train_z, dtype=np.float64)
        self._labels = np.asarray(train_labels, dtype=np.int64)
        if self.n_classes is None:
            self.n_classes = int(self._labels.max()) + 1
        return self

    def predict(self, x: np.ndarray) -> np.ndarray:
        if self._z is None:
            raise ValueError("KnnClassAvg.predict before fit")
        return classify_knn_classavg(self._z, self._labels, x, self.k)

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        # a vote, not a calibrated posterior: one-hot on the predicted class
        pred = self.predict(x)
        out = np.zeros((pred.shape[0], self.n_classes))
        out[np.arange(pred.shape[0]), pred] = 1.0
        return out


def ensemble_predict(members: list, x: np.ndarray, method: str = "mean_proba") -> np.ndarray:
    """Combine member predictions; 'mean_proba' averages probability
    vectors, 'majority' counts votes.  Ties go to the lowest class index."""
    if not members:
        raise ValueError("ensemble_predict needs at least one member")
    if method == "mean_proba":
        stacked = np.mean([m.predict_proba(x) for m in members], axis=0)
        return np.argmax(stacked, axis=1)
    if method == "majority":
        votes = np.stack([m.predict(x) for m in members], axis=1)
        n_classes = int(votes.max()) + 1
        counts = np.apply_along_axis(np.bincount, 1, votes, minlength=n_classes)
        return np.argmax(counts, axis=1)
    raise ValueError(f"unknown ensemble method '{method}'")


# -- metrics ---------------------------------------------------------------


@dataclass
class MetricsReport:
    confusion: np.ndarray
    per_class_recall: np.ndarray
    overall_accuracy: float
    average_accuracy: float
    kappa: float

    def format_text(self, class_names: list[str] | None = None) -> str:
        names = class_names or [f"class_{i}" for i in range(self.confusion.shape[0])]
        lines = ["class\trecall\tsupport"]
        support = self.confusion.sum(axis=1)
        for i, name in enumerate(names):
            recall = f"{self.per_class_recall[i]:.4f}" if support[i] else "n/a"
            lines.append(f"{name}\t{recall}\t{int(support[i])}")
        lines.append(f"overall_accuracy\t{self.overall_accuracy:.4f}")
        lines.append(f"average_accuracy\t{self.average_accuracy:.4f}")
        lines.append(f"kappa\t{self.kappa:.4f}")
        return "\n".join(lines) + "\n"

    def to_records(self) -> list[tuple[str, float]]:
        records = [(f"recall_class_{i}", float(r)) for i, r in enumerate(self.per_class_recall)]
        records += [("overall_accuracy", self.overall_accuracy),
                    ("average_accuracy", self.average_accuracy),
                    ("kappa", self.kappa)]
        return records


def compute_metrics(y_true, y_pred, n_classes: int | None = None) -> MetricsReport:
    """Confusion matrix, per-class recall, overall/average accuracy, and
    Cohen's kappa.  Average accuracy ignores classes with no true samples."""
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape or y_true.ndim != 1:
        raise DataError(f"label vectors disagree: {y_true.shape} vs {y_pred.shape}")
    if y_true.size == 0:
        raise DataError("cannot score an empty prediction set")
    if n_classes is None:
        n_classes = int(max(y_true.max(), y_pred.max())) + 1
    confusion = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(confusion, (y_true, y_pred), 1)
    support = confusion.sum(axis=1)
    with np.errstate(invalid="ignore"):
        recall = np.where(support > 0, confusion.diagonal() / np.maximum(support, 1), 0.0)
    total = confusion.sum()
    p_observed = confusion.trace() / total
    marginals = (confusion.sum(axis=1) / total) * (confusion.sum(axis=0) / total)
    p_expected = marginals.sum()
    kappa = 0.0 if p_expected == 1.0 else (p_observed - p_expected) / (1.0 - p_expected)
    average = float(recall[support > 0].mean())
    return MetricsReport(confusion, recall, float(p_observed), average, float(kappa))


def silhouette(z: np.ndarray, labels: np.ndarray) -> float:
    """Mean silhouette over all samples with Euclidean distances.

    Samples in singleton classes contribute 0.
    """
    z = np.asarray(z, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if z.shape[0] != labels.shape[0]:
        raise DataError(f"embeddings {z.shape} vs labels {labels.shape}")
    classes = np.unique(labels)
    if classes.size < 2:
        raise ValueError("silhouette needs at least two classes")
    distances = np.sqrt(pairwise_sq_distances(z, z))
    n = z.shape[0]
    members = {int(c): np.flatnonzero(labels == c) for c in classes}
    scores = np.zeros(n)
    for i in range(n):
        own = members[int(labels[i])]
        if own.size < 2:
            continue
        a = distances[i, own].sum() / (own.size - 1)
        b = min(distances[i, members[int(c)]].mean() for c in classes if c != labels[i])
        denom = max(a, b)
        scores[i] = 0.0 if denom == 0.0 else (b - a) / denom
    return float(scores.mean())


def unified_cross_eval(train_sets: dict[str, EmbeddingSet], test_sets: dict[str, EmbeddingSet],
                       **classifier_kwargs) -> dict[tuple[str, str], MetricsReport]:
    """Train one classifier per sensor's train embeddings and score it on
    every sensor's test embeddings: the unified-classification matrix."""
    reports: dict[tuple[str, str], MetricsReport] = {}
    n_classes = max(int(s.labels.max()) for s in train_sets.values()) + 1
    for train_id, train_set in train_sets.items():
        clf = train_classifier(train_set.z, train_set.labels, n_classes=n_classes,
                               **classifier_kwargs)
        for test_id, test_set in test_sets.items():
            pred = clf.predict(test_set.z)
            reports[(train_id, test_id)] = compute_metrics(test_set.labels, pred, n_classes)
    return reports
