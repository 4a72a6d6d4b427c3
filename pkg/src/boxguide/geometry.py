"""Axis-aligned box arithmetic and the size/distance subset classification."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

# Pixel-area thresholds are defined on a square reference canvas.
REFERENCE_SIZE = 512
SMALL_AREA_LIMIT = 150**2
LARGE_AREA_LIMIT = 300**2


class SizeClass(str, Enum):
    S = "S"
    M = "M"
    L = "L"


class DistanceClass(str, Enum):
    NEAR = "near"
    MID = "mid"
    FAR = "far"


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box in normalized [0, 1] image coordinates.

    Degenerate (zero-area) and out-of-range boxes are rejected at
    construction so downstream code never has to re-check.
    """

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.x_min < self.x_max <= 1.0):
            raise ValueError(f"invalid x range [{self.x_min}, {self.x_max}]")
        if not (0.0 <= self.y_min < self.y_max <= 1.0):
            raise ValueError(f"invalid y range [{self.y_min}, {self.y_max}]")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return (0.5 * (self.x_min + self.x_max), 0.5 * (self.y_min + self.y_max))

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union of two boxes, in [0, 1]."""
    ix = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    iy = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if ix <= 0.0 or iy <= 0.0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


def size_class(box: BoundingBox, reference_size: float = REFERENCE_SIZE) -> SizeClass:
    """Classify a box as S/M/L by its pixel area on the reference canvas.

    Thresholds are strict: areas exactly at a limit fall into M.
    """
    if reference_size <= 0:
        raise ValueError("reference_size must be positive")
    pixel_area = box.area * reference_size * reference_size
    if pixel_area < SMALL_AREA_LIMIT:
        return SizeClass.S
    if pixel_area > LARGE_AREA_LIMIT:
        return SizeClass.L
    return SizeClass.M


def center_distance(box: BoundingBox) -> float:
    """Euclidean distance from the box center to the image center (0.5, 0.5)."""
    cx, cy = box.center
    return math.hypot(cx - 0.5, cy - 0.5)


def distance_terciles(boxes: list[BoundingBox]) -> list[DistanceClass]:
    """Split a box population evenly into near/mid/far by center distance.

    Boxes are ranked by center distance ascending (ties broken by input
    index) and divided into three contiguous groups whose sizes differ by
    at most one, earlier groups taking the extra element. The returned
    labels follow the input order.
    """
    if not boxes:
        raise ValueError("cannot classify an empty box population")
    n = len(boxes)
    order = sorted(range(n), key=lambda i: (center_distance(boxes[i]), i))
    base, rem = divmod(n, 3)
    sizes = [base + (1 if g < rem else 0) for g in range(3)]
    labels: list[DistanceClass] = [DistanceClass.NEAR] * n
    pos = 0
    for group_size, cls in zip(sizes, (DistanceClass.NEAR, DistanceClass.MID, DistanceClass.FAR)):
        for idx in order[pos : pos + group_size]:
            labels[idx] = cls
        pos += group_size
    return labels
