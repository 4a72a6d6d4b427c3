"""Spatial guidance masks added to cross-attention logits.

A guidance set ties prompt tokens to image regions. From it we build, per
attention resolution, a pair of aligned matrices over (cell, token):

* ``additive`` -- a non-negative bump, peaked at each box center and
  decaying toward the box edges, that is later scaled by the schedule
  weight and added to the raw logits;
* ``suppress`` -- a boolean mask marking (cell, token) pairs whose
  attention must come out exactly zero, i.e. guided tokens outside their
  own boxes.

Cells are indexed row-major (``cell = row * grid_w + col``) and a cell is
located at its center ``((col + 0.5) / grid_w, (row + 0.5) / grid_h)``.
Membership for rasterization is half-open, ``[x_min, x_max) x [y_min,
y_max)``, so abutting boxes partition the grid without overlap.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .geometry import BoundingBox

# Peak of the bump at a box center; also the upper bound for any additive
# mask value, flat masks included.
GAUSSIAN_PEAK = 1.0 / (2.0 * math.pi)
DEFAULT_SOFTNESS = 2.0


class EmptyBoxWarning(UserWarning):
    """A guidance box rasterized to zero cells at some grid resolution."""


def cell_centers(grid_w: int, grid_h: int) -> tuple[np.ndarray, np.ndarray]:
    """Normalized (x, y) center coordinates of every cell, row-major."""
    if grid_w < 1 or grid_h < 1:
        raise ValueError("grid dimensions must be at least 1x1")
    xs = np.tile((np.arange(grid_w) + 0.5) / grid_w, grid_h)
    ys = np.repeat((np.arange(grid_h) + 0.5) / grid_h, grid_w)
    return xs, ys


def rasterize_box(box: BoundingBox, grid_w: int, grid_h: int) -> np.ndarray:
    """Boolean cell-membership mask for a box (flat, row-major).

    A cell belongs to the box iff its center lies in the half-open region
    [x_min, x_max) x [y_min, y_max).
    """
    xs, ys = cell_centers(grid_w, grid_h)
    return (xs >= box.x_min) & (xs < box.x_max) & (ys >= box.y_min) & (ys < box.y_max)


def gaussian_field(
    box: BoundingBox, grid_w: int, grid_h: int, softness: float = DEFAULT_SOFTNESS
) -> np.ndarray:
    """Center-peaked bump over a box, evaluated at cell centers (flat array).

    Inside the box the value is ``exp(-(dx^2 + dy^2) / 2) / (2 pi)`` where
    ``dx = softness * (2x - (x_max + x_min)) / (x_max - x_min)`` and ``dy``
    likewise, so the field reaches 1/(2 pi) at the box center and decays
    to ``exp(-softness^2 / 2)``-sized values at edge midpoints. Cells
    outside the closed box evaluate to 0. Larger softness values shrink
    the edge values; the field never widens past the box.
    """
    if softness <= 0:
        raise ValueError("softness must be positive")
    xs, ys = cell_centers(grid_w, grid_h)
    inside = (
        (xs >= box.x_min) & (xs <= box.x_max) & (ys >= box.y_min) & (ys <= box.y_max)
    )
    dx = softness * (2.0 * xs - (box.x_max + box.x_min)) / (box.x_max - box.x_min)
    dy = softness * (2.0 * ys - (box.y_max + box.y_min)) / (box.y_max - box.y_min)
    bump = np.exp(-0.5 * (dx * dx + dy * dy)) * GAUSSIAN_PEAK
    return np.where(inside, bump, 0.0)


@dataclass(frozen=True)
class GuidanceEntry:
    """One region request: put the prompt token ``concept`` inside ``box``."""

    box: BoundingBox
    concept: int

    def __post_init__(self) -> None:
        if self.concept < 0:
            raise ValueError("concept token index must be non-negative")


@dataclass(frozen=True)
class GuidanceSet:
    """A prompt plus zero or more region requests against its tokens."""

    prompt: tuple[str, ...]
    entries: tuple[GuidanceEntry, ...] = field(default_factory=tuple)
    reference_size: float = 512.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "prompt", tuple(self.prompt))
        object.__setattr__(self, "entries", tuple(self.entries))
        if not self.prompt:
            raise ValueError("prompt must contain at least one token")
        if self.reference_size <= 0:
            raise ValueError("reference_size must be positive")
        for entry in self.entries:
            if entry.concept >= len(self.prompt):
                raise ValueError(
                    f"concept index {entry.concept} outside prompt of length {len(self.prompt)}"
                )

    @property
    def guided_tokens(self) -> tuple[int, ...]:
        """Distinct guided token indices, in first-appearance order."""
        seen: list[int] = []
        for entry in self.entries:
            if entry.concept not in seen:
                seen.append(entry.concept)
        return tuple(seen)

    def boxes_for_token(self, token: int) -> list[BoundingBox]:
        return [e.box for e in self.entries if e.concept == token]

    def concept_name(self, entry: GuidanceEntry) -> str:
        return self.prompt[entry.concept]


@dataclass(frozen=True)
class SoftMask:
    """Aligned additive/suppression matrices over (cell, token)."""

    grid_w: int
    grid_h: int
    additive: np.ndarray
    suppress: np.ndarray

    def __post_init__(self) -> None:
        cells = self.grid_w * self.grid_h
        if self.additive.shape != self.suppress.shape:
            raise ValueError("additive and suppress shapes differ")
        if self.additive.ndim != 2 or self.additive.shape[0] != cells:
            raise ValueError(f"mask matrices must have shape ({cells}, tokens)")
        if self.suppress.dtype != np.bool_:
            raise ValueError("suppress must be boolean")
        lo = float(self.additive.min(initial=0.0))
        hi = float(self.additive.max(initial=0.0))
        if lo < 0.0 or hi > GAUSSIAN_PEAK * (1.0 + 1e-12):
            raise ValueError(f"additive values outside [0, 1/(2 pi)]: [{lo}, {hi}]")
        if self.additive[self.suppress].any():
            raise ValueError("suppressed entries must carry zero additive mass")

    @property
    def token_count(self) -> int:
        return self.additive.shape[1]


def _token_union(
    guidance: GuidanceSet, token: int, grid_w: int, grid_h: int
) -> np.ndarray:
    union = np.zeros(grid_w * grid_h, dtype=bool)
    for box in guidance.boxes_for_token(token):
        cells = rasterize_box(box, grid_w, grid_h)
        if not cells.any():
            warnings.warn(
                f"box {box.as_tuple()} covers no cell centers on a "
                f"{grid_w}x{grid_h} grid; its token stays suppressed there",
                EmptyBoxWarning,
                stacklevel=3,
            )
        union |= cells
    return union


def build_soft_mask(
    guidance: GuidanceSet,
    grid_w: int,
    grid_h: int,
    softness: float = DEFAULT_SOFTNESS,
) -> SoftMask:
    """Per-token bump fields with out-of-region suppression.

    Guided token columns carry the pointwise maximum of their boxes' bump
    fields (restricted to the rasterized cells) and are suppressed at
    every cell outside the union of their boxes. Unguided tokens are left
    untouched: zero additive, nothing suppressed. A box that rasterizes
    to zero cells contributes no additive mass but still suppresses; with
    no other box for the same token the column is suppressed everywhere
    at that resolution, which is flagged with ``EmptyBoxWarning``.
    """
    tokens = len(guidance.prompt)
    additive = np.zeros((grid_w * grid_h, tokens), dtype=np.float64)
    suppress = np.zeros((grid_w * grid_h, tokens), dtype=bool)
    for token in guidance.guided_tokens:
        union = _token_union(guidance, token, grid_w, grid_h)
        column = np.zeros(grid_w * grid_h, dtype=np.float64)
        for box in guidance.boxes_for_token(token):
            bump = np.where(
                rasterize_box(box, grid_w, grid_h),
                gaussian_field(box, grid_w, grid_h, softness),
                0.0,
            )
            column = np.maximum(column, bump)
        additive[:, token] = column
        suppress[:, token] = ~union
    return SoftMask(grid_w=grid_w, grid_h=grid_h, additive=additive, suppress=suppress)


def build_flat_mask(
    guidance: GuidanceSet,
    grid_w: int,
    grid_h: int,
    value: float = GAUSSIAN_PEAK,
) -> SoftMask:
    """Constant in-box bump with no suppression (comparison baseline).

    Every cell inside any of a guided token's boxes receives ``value``
    (overlaps do not stack); all other entries are zero and nothing is
    suppressed. ``value`` must lie in (0, 1/(2 pi)] so the mask respects
    the shared additive bound; the default matches the bump peak.
    """
    if not 0.0 < value <= GAUSSIAN_PEAK:
        raise ValueError(f"flat mask value must lie in (0, {GAUSSIAN_PEAK}]")
    tokens = len(guidance.prompt)
    additive = np.zeros((grid_w * grid_h, tokens), dtype=np.float64)
    suppress = np.zeros((grid_w * grid_h, tokens), dtype=bool)
    for token in guidance.guided_tokens:
        union = _token_union(guidance, token, grid_w, grid_h)
        additive[union, token] = value
    return SoftMask(grid_w=grid_w, grid_h=grid_h, additive=additive, suppress=suppress)
