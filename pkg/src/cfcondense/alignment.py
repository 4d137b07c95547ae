"""Composite alignment objective over paired modalities.

Three terms, each with analytic gradients for the synthetic batches:

* within-modality: CF discrepancy between real and synthetic embeddings of
  the same modality, summed over modalities;
* cross-modal: one minus the cosine between the batch-averaged element-wise
  interaction vectors of the real pair and of the synthetic pair;
* joint-modal: one minus the cosine between the two hybrid interaction
  vectors built from per-dimension mean embeddings (real mean of one modality
  times synthetic mean of the other, both pairings).

With more than two modalities the cross and joint terms average over all
unordered modality pairs, which reduces to the pairwise formulas for exactly
two. Cosines are exact (no epsilon in the denominator); zero-norm interaction
vectors either raise or, inside an optimization loop, contribute zero loss
and zero gradient with a logged warning.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .cf_engine import FrequencyBatch, cfd_value_and_grad
from .errors import ConfigError, DegenerateInteractionError, ValidationError

logger = logging.getLogger(__name__)


@dataclass
class LossWeights:
    uni: float = 1.0
    cross: float = 0.5
    joint: float = 0.5

    def __post_init__(self):
        vals = (self.uni, self.cross, self.joint)
        if not all(np.isfinite(v) for v in vals):
            raise ValidationError("loss weights must be finite")
        if any(v < 0 for v in vals):
            raise ValidationError("loss weights must be non-negative")
        if all(v == 0 for v in vals):
            raise ValidationError("at least one loss weight must be positive")


@dataclass
class LossBreakdown:
    uni_per_modality: list[float]
    cross: float
    joint: float
    total: float
    rho_cross: float
    rho_joint: float

    @property
    def uni(self) -> float:
        return float(sum(self.uni_per_modality))

    def to_dict(self) -> dict:
        return {
            "uni_per_modality": list(self.uni_per_modality),
            "uni": self.uni,
            "cross": self.cross,
            "joint": self.joint,
            "total": self.total,
            "rho_cross": self.rho_cross,
            "rho_joint": self.rho_joint,
        }


def interaction_vectors(mod_a, mod_b) -> np.ndarray:
    """Row-wise element-wise products of two equally shaped batches."""
    a = np.asarray(mod_a, dtype=np.float64)
    b = np.asarray(mod_b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValidationError(f"shape mismatch {a.shape} vs {b.shape}")
    return a * b


def _check_batch_pair(real_a, real_v, syn_a, syn_v):
    mats = [np.asarray(x, dtype=np.float64) for x in (real_a, real_v, syn_a, syn_v)]
    if mats[0].shape != mats[1].shape:
        raise ValidationError("real batches must share shape")
    if mats[2].shape != mats[3].shape:
        raise ValidationError("synthetic batches must share shape")
    if mats[0].shape[1] != mats[2].shape[1]:
        raise ValidationError("real and synthetic dims differ")
    return mats


def _degenerate(which: str, on_degenerate: str):
    if on_degenerate == "raise":
        raise DegenerateInteractionError(f"{which} interaction vector has zero norm")
    logger.warning("%s interaction vector has zero norm; term contributes 0", which)


def _cosine_and_grads(u: np.ndarray, w: np.ndarray):
    """rho = <u, w>/(||u|| ||w||) plus d(1 - rho)/dw; caller guarantees both
    norms are positive."""
    nu = np.linalg.norm(u)
    nw = np.linalg.norm(w)
    rho = float(u @ w / (nu * nw))
    dloss_dw = -(u / (nu * nw) - rho * w / (nw * nw))
    return rho, dloss_dw


def cross_modal_loss(real_a, real_v, syn_a, syn_v, on_degenerate: str = "raise"):
    """Cosine misalignment of batch-mean interaction vectors.

    Returns (loss, [grad_syn_a, grad_syn_v], rho). Loss lies in [0, 2].
    """
    real_a, real_v, syn_a, syn_v = _check_batch_pair(real_a, real_v, syn_a, syn_v)
    u = interaction_vectors(real_a, real_v).mean(axis=0)
    w = interaction_vectors(syn_a, syn_v).mean(axis=0)
    zeros = [np.zeros_like(syn_a), np.zeros_like(syn_v)]
    if np.linalg.norm(u) == 0.0:
        _degenerate("real", on_degenerate)
        return 0.0, zeros, 1.0
    if np.linalg.norm(w) == 0.0:
        _degenerate("synthetic", on_degenerate)
        return 0.0, zeros, 1.0
    rho, dloss_dw = _cosine_and_grads(u, w)
    b_s = syn_a.shape[0]
    grad_a = dloss_dw[None, :] * syn_v / b_s
    grad_v = dloss_dw[None, :] * syn_a / b_s
    return 1.0 - rho, [grad_a, grad_v], rho


def cross_modal_loss_cfd(
    real_a, real_v, syn_a, syn_v, freqs: FrequencyBatch, **_ignored
):
    """Experimental variant: CF discrepancy between the real and synthetic
    interaction-vector sets instead of the cosine of their means."""
    real_a, real_v, syn_a, syn_v = _check_batch_pair(real_a, real_v, syn_a, syn_v)
    u_rows = interaction_vectors(real_a, real_v)
    w_rows = interaction_vectors(syn_a, syn_v)
    loss, g_rows = cfd_value_and_grad(u_rows, w_rows, freqs)  # d loss / d w_rows
    return loss, [g_rows * syn_v, g_rows * syn_a], 1.0 - loss


def joint_modal_loss(real_a, real_v, syn_a, syn_v, on_degenerate: str = "raise"):
    """Cosine misalignment of the hybrid mean-interaction vectors
    p = mean(real_a) * mean(syn_v) and q = mean(real_v) * mean(syn_a).

    Gradients flow through the synthetic means, hence uniformly to every
    synthetic row. Returns (loss, [grad_syn_a, grad_syn_v], rho).
    """
    real_a, real_v, syn_a, syn_v = _check_batch_pair(real_a, real_v, syn_a, syn_v)
    e_a = real_a.mean(axis=0)
    e_v = real_v.mean(axis=0)
    s_a = syn_a.mean(axis=0)
    s_v = syn_v.mean(axis=0)
    p = e_a * s_v
    q = e_v * s_a
    zeros = [np.zeros_like(syn_a), np.zeros_like(syn_v)]
    if np.linalg.norm(p) == 0.0 or np.linalg.norm(q) == 0.0:
        _degenerate("hybrid", on_degenerate)
        return 0.0, zeros, 1.0
    n_p = np.linalg.norm(p)
    n_q = np.linalg.norm(q)
    rho = float(p @ q / (n_p * n_q))
    dloss_dp = -(q / (n_p * n_q) - rho * p / (n_p * n_p))
    dloss_dq = -(p / (n_p * n_q) - rho * q / (n_q * n_q))
    b_s = syn_a.shape[0]
    grad_a = np.broadcast_to((dloss_dq * e_v) / b_s, syn_a.shape).copy()
    grad_v = np.broadcast_to((dloss_dp * e_a) / b_s, syn_v.shape).copy()
    return 1.0 - rho, [grad_a, grad_v], rho


def uni_modal_loss(real_batch, syn_batch, freqs: FrequencyBatch):
    """Sum of per-modality CF discrepancies with per-modality gradients.

    Returns (loss, grads, per_modality) where grads[m] has syn_batch[m]'s
    shape.
    """
    if len(real_batch) != len(syn_batch):
        raise ValidationError(
            f"modality count mismatch: {len(real_batch)} real vs {len(syn_batch)} synthetic"
        )
    per_modality = []
    grads = []
    for real_m, syn_m in zip(real_batch, syn_batch):
        value, grad = cfd_value_and_grad(real_m, syn_m, freqs)
        per_modality.append(value)
        grads.append(grad)
    return float(sum(per_modality)), grads, per_modality


def total_loss(
    real_batch,
    syn_batch,
    freqs: FrequencyBatch,
    weights: LossWeights,
    on_degenerate: str = "raise",
    cross_mode: str = "cosine",
):
    """Weighted composite of the three alignment terms.

    Returns (LossBreakdown, grads) with one gradient array per synthetic
    modality. Terms with zero weight are skipped (their breakdown entries are
    0 with rho 1). A single-modality batch with a nonzero cross or joint
    weight is a configuration error.
    """
    n_mod = len(real_batch)
    if n_mod != len(syn_batch):
        raise ValidationError("modality count mismatch between real and synthetic")
    if n_mod < 2 and (weights.cross > 0 or weights.joint > 0):
        raise ConfigError(
            "cross and joint weights require at least two modalities; "
            "set weights.cross and weights.joint to 0"
        )
    if cross_mode not in ("cosine", "cfd"):
        raise ConfigError(f"unknown cross_mode {cross_mode!r}")

    if weights.uni > 0:
        uni, grads, per_modality = uni_modal_loss(real_batch, syn_batch, freqs)
        grads = [weights.uni * g for g in grads]
    else:
        uni = 0.0
        per_modality = [0.0] * n_mod
        grads = [np.zeros_like(np.asarray(s, dtype=np.float64)) for s in syn_batch]

    cross = 0.0
    joint = 0.0
    rho_cross = 1.0
    rho_joint = 1.0
    pairs = list(combinations(range(n_mod), 2))
    if n_mod >= 2 and (weights.cross > 0 or weights.joint > 0):
        cross_vals, joint_vals = [], []
        rho_c_vals, rho_j_vals = [], []
        for i, j in pairs:
            args = (real_batch[i], real_batch[j], syn_batch[i], syn_batch[j])
            if weights.cross > 0:
                if cross_mode == "cfd":
                    c_loss, c_grads, c_rho = cross_modal_loss_cfd(*args, freqs=freqs)
                else:
                    c_loss, c_grads, c_rho = cross_modal_loss(
                        *args, on_degenerate=on_degenerate
                    )
                cross_vals.append(c_loss)
                rho_c_vals.append(c_rho)
                scale = weights.cross / len(pairs)
                grads[i] = grads[i] + scale * c_grads[0]
                grads[j] = grads[j] + scale * c_grads[1]
            if weights.joint > 0:
                j_loss, j_grads, j_rho = joint_modal_loss(
                    *args, on_degenerate=on_degenerate
                )
                joint_vals.append(j_loss)
                rho_j_vals.append(j_rho)
                scale = weights.joint / len(pairs)
                grads[i] = grads[i] + scale * j_grads[0]
                grads[j] = grads[j] + scale * j_grads[1]
        if cross_vals:
            cross = float(np.mean(cross_vals))
            rho_cross = float(np.mean(rho_c_vals))
        if joint_vals:
            joint = float(np.mean(joint_vals))
            rho_joint = float(np.mean(rho_j_vals))

    total = weights.uni * uni + weights.cross * cross + weights.joint * joint
    breakdown = LossBreakdown(
        uni_per_modality=per_modality,
        cross=cross,
        joint=joint,
        total=float(total),
        rho_cross=rho_cross,
        rho_joint=rho_joint,
    )
    return breakdown, grads
