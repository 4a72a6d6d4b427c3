"""Scaled dot-product attention with optional spatial guidance.

The guided variant adds a scheduled multiple of a mask's additive field to
the raw logits before the usual scaling and softmax, and forces suppressed
(cell, token) pairs to exactly zero attention. The schedule weight adapts
to the current logit magnitude and decays linearly over the step counter,
so guidance is strongest early and vanishes at step zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .masks import SoftMask


@dataclass(frozen=True)
class WeightSchedule:
    """Mask weight policy: ``w = w_prime * (t / t_max) * max(0, max logit)``."""

    w_prime: float
    t_max: int

    def __post_init__(self) -> None:
        if self.w_prime < 0:
            raise ValueError("w_prime must be non-negative")
        if self.t_max < 1:
            raise ValueError("t_max must be at least 1")

    def decay(self, t: int) -> float:
        if not 0 <= t <= self.t_max:
            raise ValueError(f"step {t} outside [0, {self.t_max}]")
        return t / self.t_max


def _validate_qk(q: np.ndarray, k: np.ndarray) -> None:
    if q.ndim != 2 or k.ndim != 2:
        raise ValueError("q and k must be 2-d arrays")
    if q.shape[1] != k.shape[1] or q.shape[1] < 1:
        raise ValueError(f"feature dimensions disagree: {q.shape} vs {k.shape}")
    if k.shape[0] < 1:
        raise ValueError("need at least one key")
    if not (np.isfinite(q).all() and np.isfinite(k).all()):
        raise ValueError("q and k must be finite")


def _row_softmax(scaled: np.ndarray, suppress: np.ndarray | None = None) -> np.ndarray:
    if suppress is not None:
        if suppress.all(axis=1).any():
            raise ValueError("a row has every token suppressed; guidance is contradictory")
        scaled = np.where(suppress, -np.inf, scaled)
    # Row-max shift keeps exp() in range; -inf entries come out exactly 0.
    shifted = scaled - scaled.max(axis=1, keepdims=True)
    weights = np.exp(shifted)
    out = weights / weights.sum(axis=1, keepdims=True)
    if suppress is not None:
        out[suppress] = 0.0
    return out


def attention(q: np.ndarray, k: np.ndarray) -> np.ndarray:
    """Row-stochastic attention map ``softmax(q k^T / sqrt(d))``."""
    _validate_qk(q, k)
    logits = q @ k.T
    return _row_softmax(logits / math.sqrt(q.shape[1]))


def mask_weight(schedule: WeightSchedule, t: int, logits: np.ndarray) -> float:
    """Adaptive mask weight for one attention call.

    Scales with the maximum entry of the raw logit matrix, recomputed per
    call, and is clamped at zero so an all-negative logit matrix disables
    guidance instead of flipping its sign.
    """
    return schedule.w_prime * schedule.decay(t) * max(0.0, float(logits.max()))


def guided_attention(
    q: np.ndarray,
    k: np.ndarray,
    mask: SoftMask,
    schedule: WeightSchedule,
    t: int,
) -> np.ndarray:
    """Attention with mask guidance: ``softmax((q k^T + w * additive) / sqrt(d))``.

    Suppressed (cell, token) pairs get exactly zero attention and the
    remaining entries of each row renormalize to sum to one. A row whose
    tokens are all suppressed raises ``ValueError``. With no suppression
    and zero effective weight the result is bit-identical to
    ``attention(q, k)``.
    """
    _validate_qk(q, k)
    if mask.additive.shape != (q.shape[0], k.shape[0]):
        raise ValueError(
            f"mask shape {mask.additive.shape} does not match ({q.shape[0]}, {k.shape[0]})"
        )
    logits = q @ k.T
    w = mask_weight(schedule, t, logits)
    if not mask.suppress.any() and (w == 0.0 or not mask.additive.any()):
        return attention(q, k)
    scaled = (logits + w * mask.additive) / math.sqrt(q.shape[1])
    return _row_softmax(scaled, mask.suppress)
