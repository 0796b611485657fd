"""Alignment objective: triplet, reconstruction, and similarity terms.

All batched losses reduce by the mean over the K triplets in the batch,
so magnitudes are comparable across batch sizes.  Each term also comes
in a scalar per-triplet form used by the brute-force test oracles.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import numerics as nm
from .errors import ConfigError, DimensionError
from .numerics import Tensor, sq_euclidean


@dataclass
class LossConfig:
    margin_alpha: float = 1.0
    se_weight_gamma: float = 0.0
    hinge_enabled: bool = True

    def validate(self) -> None:
        if self.margin_alpha < 0.0:
            raise ConfigError(f"margin_alpha {self.margin_alpha} must be non-negative")
        if not 0.0 <= self.se_weight_gamma < 1.0:
            raise ConfigError(f"se_weight_gamma {self.se_weight_gamma} must lie in [0, 1)")


@dataclass
class LossBreakdown:
    """Scalar values of every objective component for one batch."""

    l_t: float
    l_e: float
    l_se: float
    total: float
    intra: float
    inter: float
    recon_terms: tuple[float, ...]


def triplet_term(z_anchor, z_pos, z_neg, alpha: float, hinge: bool = True) -> float:
    """Per-triplet margin violation: d(a,p) - d(a,n) + alpha, hinged at 0."""
    value = sq_euclidean(z_anchor, z_pos) - sq_euclidean(z_anchor, z_neg) + alpha
    return max(0.0, value) if hinge else value


def _row_sq_dist(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise DimensionError(f"row distances need equal shapes, got {a.data.shape} vs {b.data.shape}")
    if a.data.ndim != 2:
        raise DimensionError(f"row distances need 2-d batches, got {a.data.shape}")
    return nm.square(a - b).sum(axis=1)


def _triplet_batch(anchor: Tensor, pos: Tensor, neg: Tensor, cfg: LossConfig) -> Tensor:
    violation = _row_sq_dist(anchor, pos) - _row_sq_dist(anchor, neg) + cfg.margin_alpha
    if cfg.hinge_enabled:
        violation = nm.relu(violation)
    return violation.mean()


def multimodal_triplet_loss(z_a_anchor: Tensor, z_a_pos: Tensor, z_a_neg: Tensor,
                            z_b_anchor: Tensor, cfg: LossConfig) -> tuple[Tensor, float, float]:
    """Intra-sensor term (anchor from the triplet sensor) plus the
    inter-sensor term (anchor from the opposite sensor) over one batch.

    Gradients flow through all four embedding streams.  Returns the total
    and the float values of (intra, inter).
    """
    intra = _triplet_batch(z_a_anchor, z_a_pos, z_a_neg, cfg)
    inter = _triplet_batch(z_b_anchor, z_a_pos, z_a_neg, cfg)
    return intra + inter, float(intra.data), float(inter.data)


def reconstruction_loss(pairs: list[tuple[Tensor, Tensor]]) -> tuple[Tensor, tuple[float, ...]]:
    """Sum over streams of the mean per-sample squared reconstruction error."""
    if not pairs:
        raise ValueError("reconstruction_loss needs at least one (original, reconstruction) pair")
    terms = [_row_sq_dist(original, recon).mean() for original, recon in pairs]
    total = terms[0]
    for term in terms[1:]:
        total = total + term
    return total, tuple(float(t.data) for t in terms)


def similarity_enhancement(z_a_anchor: Tensor, z_b_anchor: Tensor, gamma: float) -> Tensor:
    """gamma-weighted mean squared distance between co-registered anchors."""
    return nm.scale(_row_sq_dist(z_a_anchor, z_b_anchor).mean(), gamma)


def alignment_loss(z_a_anchor: Tensor, z_a_pos: Tensor, z_a_neg: Tensor, z_b_anchor: Tensor,
                   recon_pairs: list[tuple[Tensor, Tensor]],
                   cfg: LossConfig) -> tuple[Tensor, LossBreakdown]:
    """Full objective: triplet + reconstruction + similarity enhancement."""
    l_t, intra, inter = multimodal_triplet_loss(z_a_anchor, z_a_pos, z_a_neg, z_b_anchor, cfg)
    l_e, recon_terms = reconstruction_loss(recon_pairs)
    l_se = similarity_enhancement(z_a_anchor, z_b_anchor, cfg.se_weight_gamma)
    total = l_t + l_e + l_se
    breakdown = LossBreakdown(float(l_t.data), float(l_e.data), float(l_se.data),
                              float(total.data), intra, inter, recon_terms)
    return total, breakdown


def sensor_mapping_loss(z_anchor_frozen: Tensor, z_new: Tensor, s_new: Tensor,
                        s_new_recon: Tensor) -> tuple[Tensor, float, float]:
    """Objective for mapping an additional sensor onto a frozen manifold:
    latent matching plus the new sensor's own reconstruction."""
    latent = _row_sq_dist(z_anchor_frozen, z_new).mean()
    recon = _row_sq_dist(s_new, s_new_recon).mean()
    return latent + recon, float(latent.data), float(recon.data)
