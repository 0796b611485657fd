"""Co-registered multimodal datasets: containers, I/O, and synthesis.

Feature values are quantized to float32 precision at construction (and
held as float64) so that the binary format, which stores float32, round
trips bit-identically.
"""

from __future__ import annotations

import csv
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, ParseError

_DATASET_MAGIC = b"MMDS1"


def _quantize(values: np.ndarray) -> np.ndarray:
    return np.asarray(values, dtype=np.float32).astype(np.float64)


class MultimodalDataset:
    """Per-sensor feature matrices over one shared set of labeled samples.

    Row i of every sensor matrix describes the same physical sample, so
    all matrices share one label vector.  Optional train/test masks are
    attached by split(); optional per-sensor (mins, ranges) by
    normalize_minmax().
    """

    def __init__(self, sensors: dict[str, np.ndarray], labels,
                 class_names: list[str] | None = None,
                 norm_params: dict[str, tuple[np.ndarray, np.ndarray]] | None = None):
        if not sensors:
            raise DataError("dataset needs at least one sensor")
        self.sensors: dict[str, np.ndarray] = {}
        for sensor_id, matrix in sensors.items():
            m = _quantize(matrix)
            if m.ndim != 2:
                raise DataError(f"sensor '{sensor_id}': expected a 2-d matrix, got shape {m.shape}")
            if not np.isfinite(m).all():
                raise DataError(f"sensor '{sensor_id}': non-finite feature values")
            self.sensors[sensor_id] = m
        self.labels = np.asarray(labels, dtype=np.int64)
        counts = {sid: m.shape[0] for sid, m in self.sensors.items()}
        if len(set(counts.values())) != 1:
            raise DataError(f"sensors disagree on sample count: {counts}")
        n = next(iter(counts.values()))
        if self.labels.shape != (n,):
            raise DataError(f"labels shape {self.labels.shape} does not match {n} samples")
        if n and self.labels.min() < 0:
            raise DataError(f"negative label {self.labels.min()}")
        n_classes = int(self.labels.max()) + 1 if n else 0
        if class_names is None:
            class_names = [f"class_{i}" for i in range(n_classes)]
        elif len(class_names) < n_classes:
            raise DataError(f"label {n_classes - 1} out of range for {len(class_names)} class names")
        self.class_names = list(class_names)
        self.norm_params = dict(norm_params) if norm_params else {}
        self.train_mask: np.ndarray | None = None
        self.test_mask: np.ndarray | None = None

    # -- shape accessors -------------------------------------------------

    @property
    def n_samples(self) -> int:
        return self.labels.shape[0]

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    @property
    def sensor_ids(self) -> list[str]:
        return list(self.sensors)

    def dim(self, sensor_id: str) -> int:
        return self._matrix(sensor_id).shape[1]

    def _matrix(self, sensor_id: str) -> np.ndarray:
        if sensor_id not in self.sensors:
            raise DataError(f"unknown sensor '{sensor_id}'; dataset has {self.sensor_ids}")
        return self.sensors[sensor_id]

    def matrix(self, sensor_id: str) -> np.ndarray:
        return self._matrix(sensor_id)

    @property
    def normalized(self) -> bool:
        return all(m.size == 0 or (m.min() >= 0.0 and m.max() <= 1.0)
                   for m in self.sensors.values())

    # -- splitting ---------------------------------------------------------

    def split(self, train_fraction: float, seed: int) -> None:
        self.train_mask, self.test_mask = stratified_split(self.labels, train_fraction, seed)

    def _masked(self, sensor_id: str, mask: np.ndarray | None, name: str) -> np.ndarray:
        matrix = self._matrix(sensor_id)
        if mask is None:
            raise ConfigError(f"dataset has no {name} split; call split() first")
        return matrix[mask]

    def train_arrays(self, sensor_id: str) -> np.ndarray:
        return self._masked(sensor_id, self.train_mask, "train")

    def test_arrays(self, sensor_id: str) -> np.ndarray:
        return self._masked(sensor_id, self.test_mask, "test")

    @property
    def train_labels(self) -> np.ndarray:
        if self.train_mask is None:
            raise ConfigError("dataset has no train split; call split() first")
        return self.labels[self.train_mask]

    @property
    def test_labels(self) -> np.ndarray:
        if self.test_mask is None:
            raise ConfigError("dataset has no test split; call split() first")
        return self.labels[self.test_mask]

    def subset(self, mask: np.ndarray) -> "MultimodalDataset":
        mask = np.asarray(mask, dtype=bool)
        return MultimodalDataset({sid: m[mask] for sid, m in self.sensors.items()},
                                 self.labels[mask], self.class_names, self.norm_params)


def stratified_split(labels, train_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-class random split into boolean (train, test) masks.

    Train counts are round(fraction * class size), clamped so every class
    with at least two samples appears in both sides.  Single-sample
    classes go entirely to train, with a warning.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if not 0.0 < train_fraction < 1.0:
        raise ConfigError(f"train_fraction {train_fraction} must be inside (0, 1)")
    rng = np.random.default_rng(seed)
    train = np.zeros(labels.shape[0], dtype=bool)
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        if len(idx) < 2:
            warnings.warn(f"class {cls} has a single sample; assigning it to train")
            train[idx] = True
            continue
        n_train = int(np.floor(train_fraction * len(idx) + 0.5))
        n_train = min(max(n_train, 1), len(idx) - 1)
        chosen = rng.permutation(idx)[:n_train]
        train[chosen] = True
    return train, ~train


def normalize_minmax(dataset: MultimodalDataset) -> MultimodalDataset:
    """Min-max each feature channel to [0, 1]; constant channels map to 0.

    The per-sensor (mins, ranges) are kept on the result for inverse
    mapping of translated data back to raw units.
    """
    sensors = {}
    norm_params = {}
    for sensor_id, matrix in dataset.sensors.items():
        mins = matrix.min(axis=0)
        ranges = matrix.max(axis=0) - mins
        safe = np.where(ranges > 0.0, ranges, 1.0)
        sensors[sensor_id] = (matrix - mins) / safe
        norm_params[sensor_id] = (mins, ranges)
    out = MultimodalDataset(sensors, dataset.labels, dataset.class_names, norm_params)
    out.train_mask, out.test_mask = dataset.train_mask, dataset.test_mask
    return out


def denormalize(norm_params: tuple[np.ndarray, np.ndarray], values: np.ndarray) -> np.ndarray:
    """Inverse of normalize_minmax for one sensor's (mins, ranges)."""
    mins, ranges = norm_params
    return np.asarray(values, dtype=np.float64) * ranges + mins


# -- binary format -----------------------------------------------------------


def save_binary(dataset: MultimodalDataset, path) -> None:
    """Layout: magic, u32 sensor count, per sensor (u16 id length, UTF-8
    id, u32 dim), u32 n_samples, u32 n_classes, u32 labels, then each
    sensor's float32 little-endian row-major matrix."""
    blob = bytearray(_DATASET_MAGIC)
    blob += struct.pack("<I", len(dataset.sensors))
    for sensor_id, matrix in dataset.sensors.items():
        encoded = sensor_id.encode("utf-8")
        blob += struct.pack("<H", len(encoded))
        blob += encoded
        blob += struct.pack("<I", matrix.shape[1])
    blob += struct.pack("<II", dataset.n_samples, dataset.n_classes)
    blob += dataset.labels.astype("<u4").tobytes()
    for matrix in dataset.sensors.values():
        blob += np.ascontiguousarray(matrix, dtype="<f4").tobytes()
    Path(path).write_bytes(bytes(blob))


def load_binary(path) -> MultimodalDataset:
    data = Path(path).read_bytes()
    offset = 0

    def take(n: int, what: str) -> bytes:
        nonlocal offset
        if offset + n > len(data):
            raise ParseError(f"{path}: truncated while reading {what} at byte {offset}")
        chunk = data[offset:offset + n]
        offset += n
        return chunk

    if take(5, "magic") != _DATASET_MAGIC:
        raise ParseError(f"{path}: bad magic at byte 0, expected {_DATASET_MAGIC!r}")
    (n_sensors,) = struct.unpack("<I", take(4, "sensor count"))
    headers = []
    for i in range(n_sensors):
        (id_len,) = struct.unpack("<H", take(2, f"id length of sensor {i}"))
        sensor_id = take(id_len, f"id of sensor {i}").decode("utf-8")
        (dim,) = struct.unpack("<I", take(4, f"dim of sensor '{sensor_id}'"))
        headers.append((sensor_id, dim))
    n_samples, n_classes = struct.unpack("<II", take(8, "sample and class counts"))
    labels = np.frombuffer(take(4 * n_samples, "labels"), dtype="<u4").astype(np.int64)
    sensors = {}
    for sensor_id, dim in headers:
        raw = take(4 * n_samples * dim, f"data of sensor '{sensor_id}'")
        sensors[sensor_id] = np.frombuffer(raw, dtype="<f4").reshape(n_samples, dim)
    if offset != len(data):
        raise ParseError(f"{path}: {len(data) - offset} trailing bytes at byte {offset}")
    if n_samples and labels.max() >= n_classes:
        raise DataError(f"{path}: label {labels.max()} out of range for {n_classes} classes")
    return MultimodalDataset(sensors, labels, [f"class_{i}" for i in range(n_classes)])


# -- delimited-text ingestion --------------------------------------------------


def load_csv(sensor_paths: dict[str, str], label_path) -> MultimodalDataset:
    """One CSV per sensor (one row per sample) plus a label file with one
    integer per line.  Non-numeric cells and row-count mismatches are
    reported with their position."""
    sensors = {}
    for sensor_id, path in sensor_paths.items():
        rows = []
        with open(path, newline="") as handle:
            for r, row in enumerate(csv.reader(handle)):
                if not row:
                    continue
                try:
                    rows.append([float(cell) for cell in row])
                except ValueError:
                    bad = next(i for i, cell in enumerate(row) if not _is_float(cell))
                    raise ParseError(f"{path}: non-numeric cell at row {r}, column {bad}") from None
        widths = {len(r) for r in rows}
        if len(widths) > 1:
            raise ParseError(f"{path}: inconsistent row widths {sorted(widths)}")
        sensors[sensor_id] = np.asarray(rows, dtype=np.float64)
    labels = []
    with open(label_path) as handle:
        for r, line in enumerate(handle):
            line = line.strip()
            if not line:
                continue
            try:
                labels.append(int(line))
            except ValueError:
                raise ParseError(f"{label_path}: non-integer label at row {r}") from None
    counts = {sid: m.shape[0] for sid, m in sensors.items()}
    counts["labels"] = len(labels)
    if len(set(counts.values())) != 1:
        raise DataError(f"row counts disagree: {counts}")
    return MultimodalDataset(sensors, np.asarray(labels))


def _is_float(cell: str) -> bool:
    try:
        float(cell)
        return True
    except ValueError:
        return False


# -- synthetic generator ---------------------------------------------------------


@dataclass
class ViewConfig:
    """One sensor's view of the shared truth space."""

    dim: int
    depth: int = 1           # stacked random affine+tanh layers; 0 = identity
    noise: float = 0.05      # additive Gaussian sigma, pre-normalization
    channel_dropout: float = 0.0


@dataclass
class SynthConfig:
    n_classes: int = 3
    samples_per_class: int = 200
    truth_dim: int = 4
    views: dict[str, ViewConfig] = field(
        default_factory=lambda: {"A": ViewConfig(20), "B": ViewConfig(6)})
    cluster_spread: float = 0.35
    seed: int = 0


def generate_synthetic(cfg: SynthConfig) -> MultimodalDataset:
    """Class-conditional Gaussian clusters in a truth space, observed
    through independent random nonlinear maps per sensor, normalized."""
    if cfg.n_classes < 2:
        raise ConfigError(f"n_classes {cfg.n_classes} must be at least 2")
    if cfg.samples_per_class < 1 or cfg.truth_dim < 1:
        raise ConfigError("samples_per_class and truth_dim must be positive")
    rng = np.random.default_rng(cfg.seed)
    n = cfg.n_classes * cfg.samples_per_class
    centers = rng.normal(0.0, 1.0, size=(cfg.n_classes, cfg.truth_dim)) * 2.0
    labels = rng.permutation(np.repeat(np.arange(cfg.n_classes), cfg.samples_per_class))
    truth = centers[labels] + rng.normal(0.0, cfg.cluster_spread, size=(n, cfg.truth_dim))

    sensors = {}
    for sensor_id, view in cfg.views.items():
        if view.dim < 1:
            raise ConfigError(f"view '{sensor_id}': dim must be positive")
        if view.depth == 0:
            if view.dim != cfg.truth_dim:
                raise ConfigError(
                    f"view '{sensor_id}': identity map needs dim == truth_dim "
                    f"({view.dim} != {cfg.truth_dim})")
            out = truth.copy()
        else:
            out = truth
            for _ in range(view.depth):
                w = rng.normal(0.0, 1.0 / np.sqrt(out.shape[1]), size=(out.shape[1], view.dim))
                b = rng.normal(0.0, 0.3, size=view.dim)
                out = np.tanh(out @ w + b)
        if view.noise > 0.0:
            out = out + rng.normal(0.0, view.noise, size=out.shape)
        if view.channel_dropout > 0.0:
            dropped = rng.random(view.dim) < view.channel_dropout
            out = out.copy()
            out[:, dropped] = 0.0
        sensors[sensor_id] = out

    dataset = MultimodalDataset(sensors, labels)
    return normalize_minmax(dataset)


# -- raster helpers (optional ingestion path) -------------------------------------


def extract_patches(raster: np.ndarray, patch_size: int) -> np.ndarray:
    """Per-pixel square patches of an H x W x C raster, edge-padded, each
    flattened row-major with channels fastest."""
    raster = np.asarray(raster, dtype=np.float64)
    if raster.ndim == 2:
        raster = raster[:, :, None]
    if raster.ndim != 3:
        raise DataError(f"raster must be H x W x C, got shape {raster.shape}")
    if patch_size < 1 or patch_size % 2 == 0:
        raise ConfigError(f"patch_size {patch_size} must be odd and positive")
    h, w, c = raster.shape
    r = patch_size // 2
    padded = np.pad(raster, ((r, r), (r, r), (0, 0)), mode="edge")
    windows = np.lib.stride_tricks.sliding_window_view(padded, (patch_size, patch_size), axis=(0, 1))
    # windows: (H, W, C, p, p) -> (H, W, p, p, C) so channels vary fastest
    patches = windows.transpose(0, 1, 3, 4, 2).reshape(h * w, patch_size * patch_size * c)
    return np.ascontiguousarray(patches)


def raster_to_features(raster: np.ndarray, patch_size: int) -> np.ndarray:
    """Normalize each channel over the full scene, then extract patches."""
    raster = np.asarray(raster, dtype=np.float64)
    if raster.ndim == 2:
        raster = raster[:, :, None]
    mins = raster.min(axis=(0, 1))
    ranges = raster.max(axis=(0, 1)) - mins
    safe = np.where(ranges > 0.0, ranges, 1.0)
    return extract_patches((raster - mins) / safe, patch_size)
