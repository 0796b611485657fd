"""Latent-to-latent regression for translating a missing sensor.

A small dense regressor maps one sensor's latent codes onto another's;
decoding the predicted latents with the missing sensor's decoder yields
synthesized sensor data.  Fold-wise cross-validation reports how well
the mapping generalizes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nm
from .errors import ConfigError, DataError
from .model import SensorAutoencoder
from .numerics import Tensor


class LatentRegressor:
    """Dense tanh stack from one latent space to another; the output
    layer is tanh as well, matching the (-1, 1) latent range."""

    def __init__(self, input_dim: int, output_dim: int, hidden: tuple[int, ...],
                 params: dict[str, Tensor]):
        self.input_dim = input_dim
        self.output_dim = output_dim
        self.hidden = hidden
        self.params = params

    @classmethod
    def build(cls, input_dim: int, output_dim: int, hidden=(128, 64),
              seed: int = 0) -> "LatentRegressor":
        hidden = tuple(int(h) for h in hidden)
        if input_dim < 1 or output_dim < 1 or any(h < 1 for h in hidden):
            raise ConfigError(f"regressor dims must be positive: {input_dim}, {hidden}, {output_dim}")
        rng = np.random.default_rng(seed)
        params: dict[str, Tensor] = {}
        fan_in = input_dim
        for i, width in enumerate(hidden + (output_dim,)):
            params[f"w{i}"] = Tensor(nm.glorot_uniform(rng, fan_in, width), requires_grad=True)
            params[f"b{i}"] = Tensor(np.zeros((1, width)), requires_grad=True)
            fan_in = width
        return cls(input_dim, output_dim, hidden, params)

    def forward(self, x: Tensor) -> Tensor:
        h = x
        for i in range(len(self.hidden) + 1):
            h = nm.tanh(nm.affine(h, self.params[f"w{i}"], self.params[f"b{i}"]))
        return h

    def parameters(self) -> list[Tensor]:
        return [self.params[name] for name in sorted(self.params)]


def predict_latent(regressor: LatentRegressor, z_available: np.ndarray) -> np.ndarray:
    """Predicted latent codes for the missing sensor, inside (-1, 1)."""
    return regressor.forward(Tensor(np.asarray(z_available, dtype=np.float64))).data


def kfold_indices(n: int, folds: int, seed: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Disjoint (train, held-out) index pairs covering 0..n-1 exactly once."""
    if folds < 2 or folds > n:
        raise ConfigError(f"folds {folds} must lie in [2, {n}]")
    order = np.random.default_rng(seed).permutation(n)
    chunks = np.array_split(order, folds)
    out = []
    for i in range(folds):
        held = np.sort(chunks[i])
        train = np.sort(np.concatenate([chunks[j] for j in range(folds) if j != i]))
        out.append((train, held))
    return out


def _mse(a: np.ndarray, b: np.ndarray) -> float:
    diff = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    return float((diff * diff).mean())


def _fit(regressor: LatentRegressor, z_in: np.ndarray, z_out: np.ndarray,
         epochs: int, learning_rate: float, batch_size: int, seed: int,
         held: tuple[np.ndarray, np.ndarray] | None,
         decoder: SensorAutoencoder | None) -> tuple[list[float], list[float]]:
    optimizer = nm.Adam(regressor.parameters(), learning_rate)
    n = z_in.shape[0]
    latent_history: list[float] = []
    recon_history: list[float] = []
    for epoch in range(epochs):
        rng = np.random.default_rng(np.random.SeedSequence([seed, epoch]))
        order = rng.permutation(n)
        for lo in range(0, n, batch_size):
            idx = order[lo:lo + batch_size]
            pred = regressor.forward(Tensor(z_in[idx]))
            loss = nm.square(pred - Tensor(z_out[idx])).sum(axis=1).mean()
            loss.backward()
            optimizer.step()
        if held is not None:
            held_in, held_out = held
            pred = predict_latent(regressor, held_in)
            latent_history.append(_mse(pred, held_out))
            if decoder is not None:
                recon_history.append(_mse(decoder.decode(pred).data,
                                          decoder.decode(held_out).data))
    return latent_history, recon_history


@dataclass
class RegressorResult:
    regressor: LatentRegressor          # fit on all samples after validation
    fold_mses: list[float]              # held-out latent MSE per fold
    mean_mse: float
    std_mse: float
    fold_histories: list[list[float]]   # held-out latent MSE per epoch per fold
    recon_histories: list[list[float]]  # held-out decoded MSE per epoch per fold


def train_regressor(z_available: np.ndarray, z_missing: np.ndarray, hidden=(128, 64),
                    folds: int = 5, epochs: int = 100, learning_rate: float = 1e-3,
                    batch_size: int = 32, seed: int = 0,
                    decoder: SensorAutoencoder | None = None) -> RegressorResult:
    """Fold-wise validation of the latent mapping, then a final fit on all
    samples.

    Reported MSEs are per coordinate on held-out folds; mean and standard
    deviation are taken across folds.  When a decoder is supplied, each
    fold also tracks the decoded reconstruction MSE per epoch.
    """
    z_available = np.asarray(z_available, dtype=np.float64)
    z_missing = np.asarray(z_missing, dtype=np.float64)
    if z_available.ndim != 2 or z_missing.ndim != 2 or \
            z_available.shape[0] != z_missing.shape[0]:
        raise DataError(f"latent sets disagree: {z_available.shape} vs {z_missing.shape}")

    fold_mses: list[float] = []
    fold_histories: list[list[float]] = []
    recon_histories: list[list[float]] = []
    for fold, (train_idx, held_idx) in enumerate(kfold_indices(z_available.shape[0],
                                                               folds, seed)):
        regressor = LatentRegressor.build(z_available.shape[1], z_missing.shape[1],
                                          hidden, seed=seed + fold)
        history, recon = _fit(regressor, z_available[train_idx], z_missing[train_idx],
                              epochs, learning_rate, batch_size, seed + fold,
                              (z_available[held_idx], z_missing[held_idx]), decoder)
        fold_mses.append(history[-1] if history else
                         _mse(predict_latent(regressor, z_available[held_idx]),
                              z_missing[held_idx]))
        fold_histories.append(history)
        recon_histories.append(recon)

    final = LatentRegressor.build(z_available.shape[1], z_missing.shape[1], hidden, seed=seed)
    _fit(final, z_available, z_missing, epochs, learning_rate, batch_size, seed, None, None)
    mean = float(np.mean(fold_mses))
    std = float(np.std(fold_mses))
    return RegressorResult(final, fold_mses, mean, std, fold_histories, recon_histories)


def translate(regressor: LatentRegressor, decoder: SensorAutoencoder,
              z_available: np.ndarray) -> np.ndarray:
    """Synthesized missing-sensor data: decode the predicted latents."""
    return decoder.decode(predict_latent(regressor, z_available)).data


def mean_latent_baseline(z_missing_train: np.ndarray, n_test: int) -> np.ndarray:
    """Predict the per-coordinate training mean for every test sample."""
    mean = np.asarray(z_missing_train, dtype=np.float64).mean(axis=0)
    return np.tile(mean, (n_test, 1))


def translation_mse(predicted: np.ndarray, target: np.ndarray) -> float:
    """Per-feature mean squared error between two data matrices."""
    predicted = np.asarray(predicted, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if predicted.shape != target.shape:
        raise DataError(f"translation shapes disagree: {predicted.shape} vs {target.shape}")
    return _mse(predicted, target)
