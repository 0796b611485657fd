"""Checkpointed training of aligned sensor autoencoders.

Each checkpoint mines a fresh triplet pool against the previous
checkpoint's model (checkpoint 1 uses random triplets), then runs a
fixed number of epochs over that pool.  Both sensors' parameters update
jointly through the shared objective.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import numerics as nm
from .errors import ConfigError, NumericError
from .inference import silhouette
from .losses import LossBreakdown, LossConfig, alignment_loss, sensor_mapping_loss
from .mining import MiningConfig, TripletBatch, mine_checkpoint
from .model import EmbeddingSet, SensorAutoencoder
from .numerics import Tensor

log = logging.getLogger("maln")


@dataclass
class TrainingPlan:
    n_checkpoints: int = 5
    epochs_per_checkpoint: int = 50
    triplets_per_checkpoint: int = 2000
    batch_size: int = 256
    learning_rate: float = 1e-3
    loss: LossConfig = field(default_factory=LossConfig)
    mining: MiningConfig = field(default_factory=MiningConfig)
    triplet_sensor: str = "A"      # A | B | alternating
    seed: int = 0

    def validate(self) -> None:
        if self.n_checkpoints < 1 or self.triplets_per_checkpoint < 1 or self.batch_size < 1:
            raise ConfigError("checkpoint, triplet, and batch counts must be positive")
        if self.epochs_per_checkpoint < 0:
            raise ConfigError(f"epochs_per_checkpoint {self.epochs_per_checkpoint} is negative")
        if self.learning_rate <= 0.0:
            raise ConfigError(f"learning_rate {self.learning_rate} must be positive")
        if self.triplet_sensor not in ("A", "B", "alternating"):
            raise ConfigError(f"triplet_sensor '{self.triplet_sensor}' not in A|B|alternating")
        self.loss.validate()

    def resolved_mining(self) -> MiningConfig:
        """Mining config with counts, margin, and seed tied to the plan."""
        return replace(self.mining, k_per_checkpoint=self.triplets_per_checkpoint,
                       margin_alpha=self.loss.margin_alpha, seed=self.seed)


@dataclass
class CheckpointRecord:
    index: int
    triplet_sensor: str
    epoch_losses: list[LossBreakdown]
    silhouette: float
    seconds: float
    snapshot_basepaths: tuple[str, str] | None = None


@dataclass
class TrainingResult:
    model_a: SensorAutoencoder
    model_b: SensorAutoencoder
    records: list[CheckpointRecord]
    initial_silhouette: float


def _pooled_silhouette(model_a, model_b, x_a, x_b, labels) -> float:
    pooled = np.vstack([model_a.embed(x_a), model_b.embed(x_b)])
    return silhouette(pooled, np.concatenate([labels, labels]))


def _weighted_mean_breakdown(parts: list[tuple[int, LossBreakdown]]) -> LossBreakdown:
    total_n = sum(n for n, _ in parts)
    def avg(get):
        return sum(n * get(b) for n, b in parts) / total_n
    return LossBreakdown(
        l_t=avg(lambda b: b.l_t), l_e=avg(lambda b: b.l_e), l_se=avg(lambda b: b.l_se),
        total=avg(lambda b: b.total), intra=avg(lambda b: b.intra),
        inter=avg(lambda b: b.inter),
        recon_terms=tuple(avg(lambda b, i=i: b.recon_terms[i]) for i in range(4)))


def _alignment_step(model_t: SensorAutoencoder, model_o: SensorAutoencoder,
                    x_t: np.ndarray, x_o: np.ndarray, batch: TripletBatch,
                    idx: np.ndarray, loss_cfg: LossConfig,
                    optimizer: nm.Adam) -> LossBreakdown:
    s_anchor = Tensor(x_t[batch.anchor_a[idx]])
    s_pos = Tensor(x_t[batch.positive_a[idx]])
    s_neg = Tensor(x_t[batch.negative_a[idx]])
    s_cross = Tensor(x_o[batch.anchor_b[idx]])
    z_anchor = model_t.encode(s_anchor)
    z_pos = model_t.encode(s_pos)
    z_neg = model_t.encode(s_neg)
    z_cross = model_o.encode(s_cross)
    recon_pairs = [(s_anchor, model_t.decode(z_anchor)),
                   (s_pos, model_t.decode(z_pos)),
                   (s_neg, model_t.decode(z_neg)),
                   (s_cross, model_o.decode(z_cross))]
    total, breakdown = alignment_loss(z_anchor, z_pos, z_neg, z_cross, recon_pairs, loss_cfg)
    if not np.isfinite(breakdown.total):
        raise NumericError(
            f"non-finite objective {breakdown}; first batch indices "
            f"{batch.anchor_a[idx[:8]].tolist()}")
    total.backward()
    optimizer.step()
    return breakdown


def train_shared_manifold(dataset, model_a: SensorAutoencoder, model_b: SensorAutoencoder,
                          plan: TrainingPlan, snapshot_dir=None) -> TrainingResult:
    """Joint checkpointed training of two sensor autoencoders.

    Uses the dataset's train split (the whole dataset when unsplit).
    In alternating mode odd checkpoints mine on sensor A, even ones on
    sensor B; otherwise the configured sensor is used throughout.
    """
    plan.validate()
    if not dataset.normalized:
        raise ConfigError("dataset must be normalized to [0, 1] before training")
    if model_a.latent_dim != model_b.latent_dim:
        raise ConfigError(
            f"latent dims disagree: {model_a.latent_dim} vs {model_b.latent_dim}")
    if dataset.train_mask is not None:
        x_a = dataset.train_arrays(model_a.sensor_id)
        x_b = dataset.train_arrays(model_b.sensor_id)
        labels = dataset.train_labels
    else:
        x_a = dataset.matrix(model_a.sensor_id)
        x_b = dataset.matrix(model_b.sensor_id)
        labels = dataset.labels

    optimizer = nm.Adam(model_a.parameters() + model_b.parameters(), plan.learning_rate)
    mining_cfg = plan.resolved_mining()
    initial = _pooled_silhouette(model_a, model_b, x_a, x_b, labels)
    log.info("initial pooled silhouette %.4f", initial)

    records: list[CheckpointRecord] = []
    for checkpoint in range(1, plan.n_checkpoints + 1):
        started = time.perf_counter()
        if plan.triplet_sensor == "alternating":
            sensor_t = "A" if checkpoint % 2 == 1 else "B"
        else:
            sensor_t = plan.triplet_sensor
        model_t, model_o = (model_a, model_b) if sensor_t == "A" else (model_b, model_a)
        x_t, x_o = (x_a, x_b) if sensor_t == "A" else (x_b, x_a)

        emb_t = EmbeddingSet.from_model(model_t, x_t, labels)
        emb_o = EmbeddingSet.from_model(model_o, x_o, labels)
        batch = mine_checkpoint(emb_t, emb_o, mining_cfg, checkpoint)

        epoch_losses: list[LossBreakdown] = []
        for epoch in range(plan.epochs_per_checkpoint):
            rng = np.random.default_rng(np.random.SeedSequence([plan.seed, checkpoint, epoch]))
            order = rng.permutation(len(batch))
            parts: list[tuple[int, LossBreakdown]] = []
            for lo in range(0, len(batch), plan.batch_size):
                idx = order[lo:lo + plan.batch_size]
                breakdown = _alignment_step(model_t, model_o, x_t, x_o, batch, idx,
                                            plan.loss, optimizer)
                parts.append((len(idx), breakdown))
            epoch_losses.append(_weighted_mean_breakdown(parts))

        score = _pooled_silhouette(model_a, model_b, x_a, x_b, labels)
        snapshot_paths = None
        if snapshot_dir is not None:
            base = Path(snapshot_dir)
            base.mkdir(parents=True, exist_ok=True)
            path_a = base / f"checkpoint_{checkpoint:02d}_a"
            path_b = base / f"checkpoint_{checkpoint:02d}_b"
            model_a.save(path_a)
            model_b.save(path_b)
            snapshot_paths = (str(path_a), str(path_b))
        seconds = time.perf_counter() - started
        last = epoch_losses[-1].total if epoch_losses else float("nan")
        log.info("checkpoint %d/%d sensor %s: loss %.5f silhouette %.4f (%.1fs)",
                 checkpoint, plan.n_checkpoints, sensor_t, last, score, seconds)
        records.append(CheckpointRecord(checkpoint, sensor_t, epoch_losses, score,
                                        seconds, snapshot_paths))
    return TrainingResult(model_a, model_b, records, initial)


def train_alternating(dataset, model_a, model_b, plan: TrainingPlan,
                      snapshot_dir=None) -> TrainingResult:
    """Convenience wrapper: alternate the triplet sensor per checkpoint."""
    return train_shared_manifold(dataset, model_a, model_b,
                                 replace(plan, triplet_sensor="alternating"), snapshot_dir)


@dataclass
class MappingPlan:
    epochs: int = 300
    batch_size: int = 256
    learning_rate: float = 5e-4
    seed: int = 0
    latent_gap_threshold: float = 0.1

    def validate(self) -> None:
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("mapping epochs must be >= 0 and batch_size positive")
        if self.learning_rate <= 0.0:
            raise ConfigError(f"learning_rate {self.learning_rate} must be positive")


@dataclass
class MappingRecord:
    epoch_losses: list[tuple[float, float]]   # (latent term, reconstruction term)
    final_latent_gap: float
    threshold_met: bool
    seconds: float


def mean_latent_gap(z_ref: np.ndarray, z_new: np.ndarray) -> float:
    """Mean over samples of the squared distance between latent rows."""
    diff = np.asarray(z_ref) - np.asarray(z_new)
    return float((diff * diff).sum(axis=1).mean())


def train_additional_sensor(frozen: SensorAutoencoder, model_new: SensorAutoencoder,
                            dataset, plan: MappingPlan) -> MappingRecord:
    """Fit a new sensor's autoencoder so its latents match a frozen
    encoder's latents for co-registered samples.

    Only model_new's parameters are optimized; the frozen model is read
    through plain forward passes and never receives gradients.
    """
    plan.validate()
    if not dataset.normalized:
        raise ConfigError("dataset must be normalized to [0, 1] before training")
    if frozen.latent_dim != model_new.latent_dim:
        raise ConfigError(
            f"latent dims disagree: frozen {frozen.latent_dim} vs new {model_new.latent_dim}")
    started = time.perf_counter()
    if dataset.train_mask is not None:
        x_ref = dataset.train_arrays(frozen.sensor_id)
        x_new = dataset.train_arrays(model_new.sensor_id)
    else:
        x_ref = dataset.matrix(frozen.sensor_id)
        x_new = dataset.matrix(model_new.sensor_id)

    # the reference encoder is frozen, so its latents are a constant target
    z_ref = frozen.embed(x_ref)
    optimizer = nm.Adam(model_new.parameters(), plan.learning_rate)
    n = x_new.shape[0]
    epoch_losses: list[tuple[float, float]] = []
    for epoch in range(plan.epochs):
        rng = np.random.default_rng(np.random.SeedSequence([plan.seed, epoch]))
        order = rng.permutation(n)
        latent_sum = recon_sum = weight = 0.0
        for lo in range(0, n, plan.batch_size):
            idx = order[lo:lo + plan.batch_size]
            s_new = Tensor(x_new[idx])
            z_new = model_new.encode(s_new)
            recon = model_new.decode(z_new)
            total, latent_term, recon_term = sensor_mapping_loss(
                Tensor(z_ref[idx]), z_new, s_new, recon)
            if not np.isfinite(float(total.data)):
                raise NumericError(f"non-finite mapping objective at epoch {epoch}")
            total.backward()
            optimizer.step()
            latent_sum += latent_term * len(idx)
            recon_sum += recon_term * len(idx)
            weight += len(idx)
        epoch_losses.append((latent_sum / weight, recon_sum / weight))

    gap = mean_latent_gap(z_ref, model_new.embed(x_new))
    seconds = time.perf_counter() - started
    log.info("additional sensor '%s': latent gap %.5f (threshold %.3f) in %.1fs",
             model_new.sensor_id, gap, plan.latent_gap_threshold, seconds)
    return MappingRecord(epoch_losses, gap, gap <= plan.latent_gap_threshold, seconds)
