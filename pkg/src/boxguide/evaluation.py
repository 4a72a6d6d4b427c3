"""Object-wise consistency metrics and feature-distribution distance.

Matching is deliberately permissive: each guidance entry records the best
IoU over all detections of its class, with no exclusivity between entries.
A guidance entry counts as a success when that recorded IoU is strictly
greater than 0.5.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .geometry import (
    BoundingBox,
    DistanceClass,
    SizeClass,
    distance_terciles,
    iou,
    size_class,
)
from .masks import GuidanceEntry, GuidanceSet

SUCCESS_IOU = 0.5


@dataclass(frozen=True)
class DetectionRecord:
    """One detected object: class label, normalized box, confidence."""

    class_name: str
    box: BoundingBox
    score: float

    def __post_init__(self) -> None:
        if not self.class_name:
            raise ValueError("class_name must be non-empty")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score {self.score} outside [0, 1]")


@dataclass(frozen=True)
class ConsistencyRecord:
    """Per-guidance-entry outcome of matching against detections."""

    entry: GuidanceEntry
    concept: str
    recorded_iou: float
    success: bool
    size_class: SizeClass
    distance_class: DistanceClass

    def __post_init__(self) -> None:
        if not 0.0 <= self.recorded_iou <= 1.0:
            raise ValueError(f"recorded_iou {self.recorded_iou} outside [0, 1]")
        if self.success != (self.recorded_iou > SUCCESS_IOU):
            raise ValueError("success flag disagrees with the IoU threshold")


def match_guidance(
    detections: Sequence[DetectionRecord],
    guidance: GuidanceSet,
    distance_classes: Sequence[DistanceClass] | None = None,
) -> list[ConsistencyRecord]:
    """Record, per guidance entry, the best same-class detection IoU.

    Class comparison is case-insensitive and exact; an entry with no
    same-class detection records 0. ``distance_classes`` (one per entry,
    aligned) lets callers classify distance over a wider population than
    this guidance set; by default terciles are computed over the set's
    own boxes.
    """
    if distance_classes is None:
        if guidance.entries:
            distance_classes = distance_terciles([e.box for e in guidance.entries])
        else:
            distance_classes = []
    if len(distance_classes) != len(guidance.entries):
        raise ValueError("need one distance class per guidance entry")
    records = []
    for entry, dist_cls in zip(guidance.entries, distance_classes):
        name = guidance.concept_name(entry)
        candidates = [d for d in detections if d.class_name.lower() == name.lower()]
        recorded = max((iou(entry.box, d.box) for d in candidates), default=0.0)
        records.append(
            ConsistencyRecord(
                entry=entry,
                concept=name,
                recorded_iou=recorded,
                success=recorded > SUCCESS_IOU,
                size_class=size_class(entry.box, guidance.reference_size),
                distance_class=dist_cls,
            )
        )
    return records


def success_rate(records: Sequence[ConsistencyRecord]) -> float:
    """Percentage of records whose recorded IoU clears the threshold."""
    if not records:
        raise ValueError("success rate of an empty record list is undefined")
    return 100.0 * sum(r.success for r in records) / len(records)


ALL = "All"
_SIZE_KEYS = (ALL, SizeClass.S.value, SizeClass.M.value, SizeClass.L.value)
_DIST_KEYS = (ALL, DistanceClass.NEAR.value, DistanceClass.MID.value, DistanceClass.FAR.value)


@dataclass(frozen=True)
class SubsetCell:
    mean_iou: float
    success_rate: float
    count: int


@dataclass(frozen=True)
class SubsetReport:
    """Mean IoU and success rate per (size x distance) subset.

    Cells exist only for populated subsets; the ``All`` marginals are
    recomputed from the same records, so they always equal the weighted
    mean of their parts.
    """

    cells: dict[tuple[str, str], SubsetCell]

    def cell(self, size_key: str = ALL, dist_key: str = ALL) -> SubsetCell | None:
        return self.cells.get((size_key, dist_key))

    def to_dict(self) -> dict:
        out: dict[str, dict[str, dict]] = {}
        for dist_key in _DIST_KEYS:
            row = {}
            for size_key in _SIZE_KEYS:
                cell = self.cells.get((size_key, dist_key))
                if cell is not None:
                    row[size_key] = {
                        "iou": cell.mean_iou,
                        "success_rate": cell.success_rate,
                        "count": cell.count,
                    }
            if row:
                out[dist_key] = row
        return out


def subset_report(records: Sequence[ConsistencyRecord]) -> SubsetReport:
    """Tabulate metrics for every populated size/distance subset."""
    if not records:
        raise ValueError("cannot tabulate an empty record list")
    cells: dict[tuple[str, str], SubsetCell] = {}
    for size_key in _SIZE_KEYS:
        for dist_key in _DIST_KEYS:
            group = [
                r
                for r in records
                if (size_key == ALL or r.size_class.value == size_key)
                and (dist_key == ALL or r.distance_class.value == dist_key)
            ]
            if group:
                cells[(size_key, dist_key)] = SubsetCell(
                    mean_iou=sum(r.recorded_iou for r in group) / len(group),
                    success_rate=success_rate(group),
                    count=len(group),
                )
    return SubsetReport(cells=cells)


@dataclass(frozen=True)
class FeatureStats:
    """Sample mean and unbiased covariance of a feature set."""

    mean: np.ndarray
    cov: np.ndarray
    count: int

    def __post_init__(self) -> None:
        k = self.mean.shape[0]
        if self.mean.ndim != 1 or self.cov.shape != (k, k):
            raise ValueError("mean must be (k,) and cov (k, k)")
        if self.count < 2:
            raise ValueError("need at least two samples")
        if np.abs(self.cov - self.cov.T).max() > 1e-9:
            raise ValueError("covariance must be symmetric")


def fit_gaussian(features: np.ndarray) -> FeatureStats:
    """Fit mean and unbiased covariance to rows of a feature matrix."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("features must be a 2-d (samples x dims) array")
    if not np.isfinite(x).all():
        raise ValueError("features must be finite")
    n = x.shape[0]
    if n < 2:
        raise ValueError(f"need at least two feature rows, got {n}")
    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / (n - 1)
    cov = 0.5 * (cov + cov.T)
    return FeatureStats(mean=mean, cov=cov, count=n)


def _psd_check(cov: np.ndarray, label: str) -> None:
    eigenvalues = np.linalg.eigvalsh(cov)
    if eigenvalues.min() < -1e-8:
        raise ValueError(f"{label} covariance is not positive semi-definite")


def _sqrt_psd(matrix: np.ndarray) -> np.ndarray:
    # Symmetric eigendecomposition; tiny negative eigenvalues from
    # round-off are clamped to zero before taking the root.
    values, vectors = np.linalg.eigh(matrix)
    values = np.clip(values, 0.0, None)
    return (vectors * np.sqrt(values)) @ vectors.T

def frechet_distance(a: FeatureStats, b: FeatureStats) -> float:
    """Fréchet distance between two Gaussian feature summaries.

    Computes ``|mu_a - mu_b|^2 + tr(cov_a + cov_b - 2 (cov_a^1/2 cov_b
    cov_a^1/2)^1/2)`` with every matrix square root taken by symmetric
    eigendecomposition. Non-PSD covariances (beyond a -1e-8 eigenvalue
    tolerance) are rejected.
    """
    if a.mean.shape != b.mean.shape:
        raise ValueError("feature dimensions disagree")
    _psd_check(a.cov, "first")
    _psd_check(b.cov, "second")
    root_a = _sqrt_psd(a.cov)
    inner = root_a @ b.cov @ root_a
    inner = 0.5 * (inner + inner.T)
    cross_values = np.clip(np.linalg.eigvalsh(inner), 0.0, None)
    trace_cross = float(np.sqrt(cross_values).sum())
    diff = a.mean - b.mean
    value = float(diff @ diff + np.trace(a.cov) + np.trace(b.cov) - 2.0 * trace_cross)
    return max(value, 0.0)


def read_detections_file(path: str) -> dict[str, list[DetectionRecord]]:
    """Parse a line-delimited detections file, grouped by image id.

    Each line holds seven comma-separated fields: image id, class name,
    x_min, y_min, x_max, y_max (normalized), score. Blank lines and lines
    starting with '#' are skipped.
    """
    grouped: dict[str, list[DetectionRecord]] = {}
    with open(path, newline="") as handle:
        for lineno, row in enumerate(csv.reader(handle), start=1):
            if not row or (row[0].lstrip().startswith("#")):
                continue
            if len(row) != 7:
                raise ValueError(f"{path}:{lineno}: expected 7 fields, got {len(row)}")
            image_id, class_name = row[0].strip(), row[1].strip()
            try:
                x1, y1, x2, y2, score = (float(v) for v in row[2:])
                record = DetectionRecord(
                    class_name=class_name,
                    box=BoundingBox(x1, y1, x2, y2),
                    score=score,
                )
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
            grouped.setdefault(image_id, []).append(record)
    return grouped


def read_features_csv(path: str) -> tuple[list[str], np.ndarray]:
    """Parse a feature CSV whose first column is the image id."""
    ids: list[str] = []
    rows: list[list[float]] = []
    with open(path, newline="") as handle:
        for lineno, row in enumerate(csv.reader(handle), start=1):
            if not row or row[0].lstrip().startswith("#"):
                continue
            if len(row) < 2:
                raise ValueError(f"{path}:{lineno}: need an id and at least one feature")
            ids.append(row[0].strip())
            try:
                rows.append([float(v) for v in row[1:]])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
    if rows and any(len(r) != len(rows[0]) for r in rows):
        raise ValueError(f"{path}: inconsistent feature dimensions")
    return ids, np.asarray(rows, dtype=np.float64)
