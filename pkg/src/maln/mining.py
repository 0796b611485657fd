"""Offline checkpoint-based triplet selection.

Mining reads embeddings only, never raw sensor data.  A triplet is a
quadruple of row indices (anchor, positive, negative from the triplet
sensor; a same-class anchor from the opposite sensor).  The first
checkpoint has no trained model to mine against, so it draws random
label-valid triplets; later checkpoints mine against the embeddings the
previous checkpoint's model produced.

Difficulty tags name the condition each triplet provably satisfies:
``hard`` d(a,n) < d(a,p); ``semi_hard`` d(a,p) < d(a,n) < d(a,p)+alpha;
``easy`` label constraints only (random picks, margin-exhausted
fallbacks, and the configured easy mixture).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, DimensionError, MiningError
from .model import EmbeddingSet

STRATEGIES = ("hard", "semi_hard", "random")


@dataclass
class MiningConfig:
    k_per_checkpoint: int = 2000
    strategy: str = "semi_hard"
    easy_fraction: float = 0.2
    margin_alpha: float = 1.0
    seed: int = 0

    def validate(self) -> None:
        if self.k_per_checkpoint < 1:
            raise ValueError(f"k_per_checkpoint {self.k_per_checkpoint} must be positive")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy '{self.strategy}' not in {STRATEGIES}")
        if not 0.0 <= self.easy_fraction <= 1.0:
            raise ValueError(f"easy_fraction {self.easy_fraction} must lie in [0, 1]")
        if self.seed < 0:
            raise ValueError(f"seed {self.seed} must be non-negative")


@dataclass
class TripletBatch:
    """Index quadruples with per-triplet difficulty and stage tags."""

    anchor_a: np.ndarray
    positive_a: np.ndarray
    negative_a: np.ndarray
    anchor_b: np.ndarray
    tags: np.ndarray      # hard | semi_hard | easy
    stages: np.ndarray    # intra | inter

    def __post_init__(self):
        self.anchor_a = np.asarray(self.anchor_a, dtype=np.int64)
        self.positive_a = np.asarray(self.positive_a, dtype=np.int64)
        self.negative_a = np.asarray(self.negative_a, dtype=np.int64)
        self.anchor_b = np.asarray(self.anchor_b, dtype=np.int64)
        self.tags = np.asarray(self.tags)
        self.stages = np.asarray(self.stages)

    def __len__(self) -> int:
        return self.anchor_a.shape[0]

    def validate_labels(self, labels: np.ndarray) -> None:
        """Label constraints: anchor, positive, and the opposite-sensor
        anchor share a class; the negative differs."""
        labels = np.asarray(labels)
        ok = ((labels[self.anchor_a] == labels[self.positive_a])
              & (labels[self.anchor_a] == labels[self.anchor_b])
              & (labels[self.anchor_a] != labels[self.negative_a]))
        if not ok.all():
            raise DataError(f"{int((~ok).sum())} triplets violate label constraints")

    @classmethod
    def concatenate(cls, batches: list["TripletBatch"]) -> "TripletBatch":
        return cls(*(np.concatenate([getattr(b, name) for b in batches])
                     for name in ("anchor_a", "positive_a", "negative_a",
                                  "anchor_b", "tags", "stages")))


def pairwise_sq_distances(z1: np.ndarray, z2: np.ndarray) -> np.ndarray:
    """All squared Euclidean distances between rows of z1 and rows of z2."""
    same = z1 is z2
    z1 = np.asarray(z1, dtype=np.float64)
    z2 = np.asarray(z2, dtype=np.float64)
    if z1.ndim != 2 or z2.ndim != 2 or z1.shape[1] != z2.shape[1]:
        raise DimensionError(f"pairwise_sq_distances: {z1.shape} vs {z2.shape}")
    sq1 = (z1 * z1).sum(axis=1)[:, None]
    sq2 = (z2 * z2).sum(axis=1)[None, :]
    out = sq1 + sq2 - 2.0 * (z1 @ z2.T)
    np.maximum(out, 0.0, out=out)
    if same:
        np.fill_diagonal(out, 0.0)
    return out


def _grouped(labels: np.ndarray) -> dict[int, np.ndarray]:
    return {int(c): np.flatnonzero(labels == c) for c in np.unique(labels)}


def _anchor_classes(by_class: dict[int, np.ndarray]) -> list[int]:
    if len(by_class) < 2:
        raise MiningError(f"triplet mining needs at least 2 classes, found {len(by_class)}")
    usable = []
    for cls, idx in by_class.items():
        if len(idx) < 2:
            warnings.warn(f"class {cls} has a single sample; skipped as an anchor class")
        else:
            usable.append(cls)
    if not usable:
        raise MiningError("no class has two or more samples; no valid triplet exists")
    return usable


def _select(labels: np.ndarray, distances, cfg: MiningConfig, count: int,
            rng: np.random.Generator, stage: str) -> TripletBatch:
    """Shared selector core.

    distances maps an anchor row index to squared distances against every
    candidate row; for the intra stage anchors and candidates live in the
    same embedding set, for the inter stage anchors are opposite-sensor
    rows.  The opposite-sensor anchor is drawn at random from the anchor's
    class either way.
    """
    by_class = _grouped(labels)
    classes = _anchor_classes(by_class)
    negatives = {cls: np.flatnonzero(labels != cls) for cls in classes}
    for cls in classes:
        if negatives[cls].size == 0:
            raise MiningError(f"class {cls} has no negatives")

    anchors = np.empty(count, dtype=np.int64)
    positives = np.empty(count, dtype=np.int64)
    negs = np.empty(count, dtype=np.int64)
    cross = np.empty(count, dtype=np.int64)
    tags = np.empty(count, dtype=object)

    for i in range(count):
        cls = classes[rng.integers(len(classes))]
        pool = by_class[cls]
        a = pool[rng.integers(len(pool))]
        p = a
        while p == a:
            p = pool[rng.integers(len(pool))]
        neg_pool = negatives[cls]
        if cfg.strategy == "random":
            n = neg_pool[rng.integers(len(neg_pool))]
            tag = "easy"
        else:
            d_ap = distances[a, p]
            d_an = distances[a, neg_pool]
            if cfg.strategy == "hard":
                valid = neg_pool[d_an < d_ap]
            else:
                valid = neg_pool[(d_an > d_ap) & (d_an < d_ap + cfg.margin_alpha)]
            if valid.size:
                n = valid[rng.integers(valid.size)]
                tag = cfg.strategy
            else:
                # margin exhausted for this pair: closest negative, tagged easy
                n = neg_pool[np.argmin(d_an)]
                tag = "easy"
        anchors[i] = a
        positives[i] = p
        negs[i] = n
        cross[i] = pool[rng.integers(len(pool))]
        tags[i] = tag

    if stage == "intra":
        return TripletBatch(anchors, positives, negs, cross, tags.astype(str),
                            np.full(count, "intra"))
    return TripletBatch(cross, positives, negs, anchors, tags.astype(str),
                        np.full(count, "inter"))


def select_intra_triplets(emb: EmbeddingSet, cfg: MiningConfig, count: int,
                          rng: np.random.Generator) -> TripletBatch:
    """Anchor, positive, and negative all drawn from the triplet sensor;
    mining conditions use distances within that sensor's embeddings."""
    distances = (pairwise_sq_distances(emb.z, emb.z)
                 if cfg.strategy != "random" else _ZeroDistances())
    return _select(emb.labels, distances, cfg, count, rng, "intra")


def select_inter_triplets(emb_a: EmbeddingSet, emb_b: EmbeddingSet, cfg: MiningConfig,
                          count: int, rng: np.random.Generator) -> TripletBatch:
    """Anchor drawn from the opposite sensor; positive/negative from the
    triplet sensor, conditioned on distances from the opposite anchor."""
    if not np.array_equal(emb_a.labels, emb_b.labels) or \
            not np.array_equal(emb_a.sample_ids, emb_b.sample_ids):
        raise DataError("inter-sensor mining needs co-registered embedding sets")
    distances = (pairwise_sq_distances(emb_b.z, emb_a.z)
                 if cfg.strategy != "random" else _ZeroDistances())
    return _select(emb_a.labels, distances, cfg, count, rng, "inter")


class _ZeroDistances:
    """Distance stub for the random strategy, which never reads distances."""

    def __getitem__(self, key):
        raise AssertionError("random strategy must not read distances")


def select_random_triplets(labels: np.ndarray, count: int,
                           rng: np.random.Generator) -> TripletBatch:
    """Label-valid quadruples, uniform under the given generator."""
    cfg = MiningConfig(strategy="random")
    return _select(np.asarray(labels), _ZeroDistances(), cfg, count, rng, "intra")


def mine_checkpoint(emb_a: EmbeddingSet | None, emb_b: EmbeddingSet | None,
                    cfg: MiningConfig, checkpoint_index: int) -> TripletBatch:
    """Triplet pool for one checkpoint, exactly k_per_checkpoint rows.

    Checkpoint 1 is all-random.  Later checkpoints mix
    floor(easy_fraction * K) random triplets with mined ones, split
    evenly between the intra and inter stages.  Pure function of
    (embeddings, labels, cfg, checkpoint_index).
    """
    cfg.validate()
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, checkpoint_index]))
    k = cfg.k_per_checkpoint
    if checkpoint_index <= 1 or cfg.strategy == "random":
        source = emb_a if emb_a is not None else emb_b
        if source is None:
            raise DataError("mining needs at least one embedding set for its labels")
        return select_random_triplets(source.labels, k, rng)
    if emb_a is None or emb_b is None:
        raise DataError("mining after checkpoint 1 needs embeddings for both sensors")
    n_easy = int(np.floor(cfg.easy_fraction * k))
    n_mined = k - n_easy
    n_intra = n_mined - n_mined // 2
    n_inter = n_mined // 2
    parts = []
    if n_easy:
        parts.append(select_random_triplets(emb_a.labels, n_easy, rng))
    if n_intra:
        parts.append(select_intra_triplets(emb_a, cfg, n_intra, rng))
    if n_inter:
        parts.append(select_inter_triplets(emb_a, emb_b, cfg, n_inter, rng))
    return TripletBatch.concatenate(parts)


def dump_triplets(batch: TripletBatch, path) -> None:
    """One line per triplet: 'a_idx p_idx n_idx b_idx tag stage'."""
    lines = [f"{a} {p} {n} {b} {tag} {stage}"
             for a, p, n, b, tag, stage in zip(batch.anchor_a, batch.positive_a,
                                               batch.negative_a, batch.anchor_b,
                                               batch.tags, batch.stages)]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))
