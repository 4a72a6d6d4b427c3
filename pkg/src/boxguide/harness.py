"""Corpus handling and the end-to-end consistency benchmark.

Sample specs mirror a typical detection-dataset export: a caption, pixel
dimensions, and per-object (category, bbox) pairs. The benchmark turns
each sample into a guidance set, generates with each requested mask mode
over a seed sweep, reads detections back with the color oracle, and
aggregates object-wise consistency. Reports are plain JSON text, emitted
deterministically: config echo first, then aggregates, then per-sample
records sorted by image id.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .evaluation import (
    ConsistencyRecord,
    DetectionRecord,
    SubsetReport,
    fit_gaussian,
    frechet_distance,
    match_guidance,
    subset_report,
    success_rate,
)
from .generator import (
    ConceptVocabulary,
    GenerationConfig,
    GenerationResult,
    RenderedImage,
    concept_fractions,
    default_vocabulary,
    generate,
    oracle_detect,
)
from .geometry import REFERENCE_SIZE, BoundingBox, DistanceClass, distance_terciles
from .masks import GuidanceEntry, GuidanceSet, rasterize_box


@dataclass(frozen=True)
class ObjectSpec:
    """One annotated object: category name plus a pixel-space bbox."""

    category: str
    bbox: tuple[float, float, float, float]

    def __post_init__(self) -> None:
        object.__setattr__(self, "bbox", tuple(float(v) for v in self.bbox))
        if not self.category:
            raise ValueError("category must be non-empty")
        if len(self.bbox) != 4:
            raise ValueError("bbox must have four coordinates")


@dataclass(frozen=True)
class SampleSpec:
    """One benchmark sample: image id, caption, dimensions, objects."""

    image_id: str
    prompt: str
    width: int
    height: int
    objects: tuple[ObjectSpec, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "objects", tuple(self.objects))
        if not self.image_id:
            raise ValueError("image_id must be non-empty")
        if not self.prompt:
            raise ValueError("prompt must be non-empty")
        if self.width < 1 or self.height < 1:
            raise ValueError("width and height must be positive")
        if not self.objects:
            raise ValueError("objects must be non-empty")
        for obj in self.objects:
            x1, y1, x2, y2 = obj.bbox
            if not (0 <= x1 < x2 <= self.width and 0 <= y1 < y2 <= self.height):
                raise ValueError(
                    f"bbox {obj.bbox} outside {self.width}x{self.height} image bounds"
                )

    def normalized_box(self, obj: ObjectSpec) -> BoundingBox:
        x1, y1, x2, y2 = obj.bbox
        return BoundingBox(x1 / self.width, y1 / self.height, x2 / self.width, y2 / self.height)


def load_samples(path: str) -> list[SampleSpec]:
    """Read a guidance-spec file: ``{"samples": [...]}`` with exact field names."""
    with open(path) as handle:
        try:
            payload = json.load(handle)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(payload, dict) or "samples" not in payload:
        raise ValueError(f"{path}: expected a top-level 'samples' list")
    samples = []
    for pos, raw in enumerate(payload["samples"]):
        try:
            samples.append(
                SampleSpec(
                    image_id=str(raw["image_id"]),
                    prompt=str(raw["prompt"]),
                    width=int(raw["width"]),
                    height=int(raw["height"]),
                    objects=tuple(
                        ObjectSpec(category=str(o["category"]), bbox=tuple(o["bbox"]))
                        for o in raw["objects"]
                    ),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"{path}: samples[{pos}]: {exc}") from exc
    return samples


def save_samples(samples: list[SampleSpec], path: str) -> None:
    payload = {
        "samples": [
            {
                "image_id": s.image_id,
                "prompt": s.prompt,
                "width": s.width,
                "height": s.height,
                "objects": [
                    {"category": o.category, "bbox": list(o.bbox)} for o in s.objects
                ],
            }
            for s in samples
        ]
    }
    with open(path, "w") as handle:
        json.dump(payload, handle, indent=2)
        handle.write("\n")


def filter_samples(samples: list[SampleSpec]) -> list[SampleSpec]:
    """Keep samples whose prompt mentions every object category.

    Mention means case-insensitive substring, so multi-word categories
    match as whole phrases. No lemmatization is attempted: a category
    'dogs' does not match a prompt that only says 'dog'. Order-preserving
    and idempotent.
    """
    kept = []
    for sample in samples:
        prompt = sample.prompt.lower()
        if all(obj.category.lower() in prompt for obj in sample.objects):
            kept.append(sample)
    return kept


def split_by_object_count(
    samples: list[SampleSpec], n1: int, n2: int, seed: int
) -> list[SampleSpec]:
    """Seeded stratified pick: n1 one-object plus n2 two-object samples.

    Sampling is uniform without replacement within each stratum; the
    result keeps the input order. Raises naming the deficient stratum.
    """
    if n1 < 0 or n2 < 0:
        raise ValueError("stratum sizes must be non-negative")
    one_idx = [i for i, s in enumerate(samples) if len(s.objects) == 1]
    two_idx = [i for i, s in enumerate(samples) if len(s.objects) == 2]
    if len(one_idx) < n1:
        raise ValueError(
            f"one-object stratum too small: need {n1}, have {len(one_idx)}"
        )
    if len(two_idx) < n2:
        raise ValueError(
            f"two-object stratum too small: need {n2}, have {len(two_idx)}"
        )
    rng = np.random.default_rng(seed)
    chosen = {one_idx[i] for i in rng.choice(len(one_idx), size=n1, replace=False)}
    chosen |= {two_idx[i] for i in rng.choice(len(two_idx), size=n2, replace=False)}
    return [samples[i] for i in sorted(chosen)]


def sample_to_guidance(
    sample: SampleSpec, vocab: ConceptVocabulary | None = None
) -> GuidanceSet:
    """Turn a sample into mask-ready guidance against its own prompt tokens.

    The prompt is whitespace-tokenized and every object category must
    appear as one of its tokens (case-insensitive). When a vocabulary is
    given, prompt tokens must all belong to it; problems are collected
    and reported exhaustively.
    """
    tokens = tuple(sample.prompt.split())
    lowered = [t.lower() for t in tokens]
    problems = []
    entries = []
    for obj in sample.objects:
        if obj.category.lower() in lowered:
            entries.append(
                GuidanceEntry(
                    box=sample.normalized_box(obj),
                    concept=lowered.index(obj.category.lower()),
                )
            )
        else:
            problems.append(f"category {obj.category!r} is not a prompt token")
    if vocab is not None:
        for token in dict.fromkeys(tokens):
            if token not in vocab.names:
                problems.append(f"prompt token {token!r} missing from vocabulary")
    if problems:
        raise ValueError(f"sample {sample.image_id}: " + "; ".join(problems))
    return GuidanceSet(prompt=tokens, entries=tuple(entries), reference_size=REFERENCE_SIZE)


def category_guidance(sample: SampleSpec) -> GuidanceSet:
    """Guidance carrying category names only, for external detections.

    The prompt is the category list itself, so consistency records keep
    the exact class labels without requiring categories to be tokens of
    the caption. Masks built from this are meaningless; evaluation never
    builds them.
    """
    prompt = tuple(obj.category for obj in sample.objects)
    entries = tuple(
        GuidanceEntry(box=sample.normalized_box(obj), concept=i)
        for i, obj in enumerate(sample.objects)
    )
    return GuidanceSet(prompt=prompt, entries=entries, reference_size=REFERENCE_SIZE)


@dataclass(frozen=True)
class RecordRow:
    record: ConsistencyRecord
    seed: int | None = None


@dataclass(frozen=True)
class SampleResult:
    image_id: str
    rows: tuple[RecordRow, ...]


@dataclass(frozen=True)
class RunReport:
    """One mode's benchmark outcome, aggregates plus per-sample records."""

    mode: str
    config: dict
    mean_iou: float
    success_rate: float
    record_count: int
    subsets: SubsetReport
    samples: tuple[SampleResult, ...]
    fid_vs_none: float | None = None
    attention_distortion: float | None = None

    def records(self) -> list[ConsistencyRecord]:
        return [row.record for sample in self.samples for row in sample.rows]

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "aggregates": {
                "mean_iou": self.mean_iou,
                "success_rate": self.success_rate,
                "records": self.record_count,
                "fid_vs_none": self.fid_vs_none,
                "attention_distortion": self.attention_distortion,
            },
            "subsets": self.subsets.to_dict(),
            "samples": [
                {
                    "image_id": sample.image_id,
                    "records": [
                        {
                            "seed": row.seed,
                            "concept": row.record.concept,
                            "bbox": list(row.record.entry.box.as_tuple()),
                            "recorded_iou": row.record.recorded_iou,
                            "success": row.record.success,
                            "size_class": row.record.size_class.value,
                            "distance_class": row.record.distance_class.value,
                        }
                        for row in sample.rows
                    ],
                }
                for sample in self.samples
            ],
        }


def render_report(reports: dict[str, RunReport]) -> str:
    """Serialize benchmark reports as deterministic JSON text."""
    return json.dumps(
        {"reports": {mode: report.to_dict() for mode, report in reports.items()}},
        indent=2,
    ) + "\n"


def write_grid_matrix(image: RenderedImage, path: str) -> None:
    """Dump a rendered grid as rows of space-separated concept indices."""
    with open(path, "w") as handle:
        for row in image.cells:
            handle.write(" ".join(str(int(v)) for v in row) + "\n")


def _aggregate(
    mode: str,
    config_echo: dict,
    per_sample: dict[str, list[RecordRow]],
    fid: float | None,
    distortion: float | None,
) -> RunReport:
    samples = tuple(
        SampleResult(image_id=image_id, rows=tuple(rows))
        for image_id, rows in sorted(per_sample.items())
    )
    records = [row.record for s in samples for row in s.rows]
    if not records:
        raise ValueError("benchmark produced no records")
    return RunReport(
        mode=mode,
        config=config_echo,
        mean_iou=sum(r.recorded_iou for r in records) / len(records),
        success_rate=success_rate(records),
        record_count=len(records),
        subsets=subset_report(records),
        samples=samples,
        fid_vs_none=fid,
        attention_distortion=distortion,
    )


def _out_of_box_cells(guidance: GuidanceSet, grid_w: int, grid_h: int) -> np.ndarray:
    union = np.zeros(grid_w * grid_h, dtype=bool)
    for entry in guidance.entries:
        union |= rasterize_box(entry.box, grid_w, grid_h)
    return ~union


def _attention_distortion(
    baseline: GenerationResult, guided: GenerationResult, guidance: GuidanceSet
) -> float | None:
    """Mean L1 gap of unguided-token attention at out-of-box cells.

    Compares a guided run's attention maps against the unguided run with
    the same seed, snapshot by snapshot, restricted to cells outside
    every guidance box and to tokens without guidance. Returns None when
    there is nothing to compare.
    """
    guided_tokens = set(guidance.guided_tokens)
    unguided = [i for i in range(len(guidance.prompt)) if i not in guided_tokens]
    if not unguided:
        return None
    gaps = []
    for base_snap, snap in zip(baseline.attention_trace, guided.attention_trace):
        outside = _out_of_box_cells(guidance, snap.grid_w, snap.grid_h)
        if not outside.any():
            continue
        diff = np.abs(snap.map[outside][:, unguided] - base_snap.map[outside][:, unguided])
        gaps.append(float(diff.mean()))
    return sum(gaps) / len(gaps) if gaps else None


def run_benchmark(
    samples: list[SampleSpec],
    config: GenerationConfig,
    modes: list[str],
    seeds: list[int],
    vocab: ConceptVocabulary | None = None,
) -> dict[str, RunReport]:
    """Generate, detect, match, and aggregate for every requested mode.

    Distance classes come from terciles over the full corpus box
    population and are shared by all modes. When the unguided mode is
    among the requested ones, guided modes also report the Fréchet
    distance of their concept-occupancy features against it and the mean
    out-of-box attention distortion relative to it. Fully deterministic
    for fixed inputs.
    """
    if not samples:
        raise ValueError("sample list must be non-empty")
    if not modes:
        raise ValueError("need at least one mask mode")
    if len(set(modes)) != len(modes):
        raise ValueError("duplicate mask modes")
    if not seeds:
        raise ValueError("need at least one seed")
    vocab = vocab or default_vocabulary()
    guidances = [sample_to_guidance(s, vocab) for s in samples]
    population = [e.box for g in guidances for e in g.entries]
    classes = distance_terciles(population)
    per_sample_classes: list[list[DistanceClass]] = []
    pos = 0
    for g in guidances:
        per_sample_classes.append(classes[pos : pos + len(g.entries)])
        pos += len(g.entries)

    has_none = "none" in modes
    exec_order = (["none"] if has_none else []) + [m for m in modes if m != "none"]
    rows: dict[str, dict[str, list[RecordRow]]] = {m: {} for m in modes}
    features: dict[str, list[np.ndarray]] = {m: [] for m in modes}
    distortions: dict[str, list[float]] = {m: [] for m in modes}

    for sample, guidance, dist_classes in zip(samples, guidances, per_sample_classes):
        for seed in seeds:
            baseline: GenerationResult | None = None
            for mode in exec_order:
                run_cfg = replace(config, mask_mode=mode, seed=seed)
                need_trace = has_none and len(exec_order) > 1
                result = generate(guidance, vocab, run_cfg, record_attention=need_trace)
                if mode == "none":
                    baseline = result
                elif baseline is not None:
                    gap = _attention_distortion(baseline, result, guidance)
                    if gap is not None:
                        distortions[mode].append(gap)
                detections = oracle_detect(result.image)
                records = match_guidance(detections, guidance, dist_classes)
                bucket = rows[mode].setdefault(sample.image_id, [])
                bucket.extend(RecordRow(record=r, seed=seed) for r in records)
                features[mode].append(concept_fractions(result.image))

    reports: dict[str, RunReport] = {}
    none_stats = None
    if has_none and len(features["none"]) >= 2:
        none_stats = fit_gaussian(np.stack(features["none"]))
    for mode in modes:
        fid = None
        if mode != "none" and none_stats is not None and len(features[mode]) >= 2:
            fid = frechet_distance(fit_gaussian(np.stack(features[mode])), none_stats)
        distortion = None
        if mode != "none" and distortions[mode]:
            distortion = sum(distortions[mode]) / len(distortions[mode])
        config_echo = {
            "mode": mode,
            "w_prime": config.w_prime,
            "softness": config.softness,
            "steps": config.steps,
            "resolutions": [list(r) for r in config.resolutions],
            "seeds": list(seeds),
            "reference_size": REFERENCE_SIZE,
        }
        reports[mode] = _aggregate(mode, config_echo, rows[mode], fid, distortion)
    return reports


def evaluate_detections(
    samples: list[SampleSpec], detections: dict[str, list[DetectionRecord]]
) -> RunReport:
    """Score externally supplied detections against a corpus.

    Images absent from the detections mapping simply contribute zero-IoU
    records. Distance classes come from terciles over the corpus.
    """
    if not samples:
        raise ValueError("sample list must be non-empty")
    guidances = [category_guidance(s) for s in samples]
    population = [e.box for g in guidances for e in g.entries]
    classes = distance_terciles(population)
    pos = 0
    per_sample: dict[str, list[RecordRow]] = {}
    for sample, guidance in zip(samples, guidances):
        dist_classes = classes[pos : pos + len(guidance.entries)]
        pos += len(guidance.entries)
        records = match_guidance(detections.get(sample.image_id, []), guidance, dist_classes)
        per_sample.setdefault(sample.image_id, []).extend(
            RecordRow(record=r) for r in records
        )
    config_echo = {"mode": "ingestion", "reference_size": REFERENCE_SIZE}
    return _aggregate("ingestion", config_echo, per_sample, None, None)


# A fixed 20-sample corpus over the default vocabulary: ten one-object and
# ten two-object scenes on a 512x512 canvas. Boxes are stated as
# (category, center_x, center_y, width, height). Size and center distance
# are deliberately correlated the way detection datasets skew: every large
# box sits near the image center, medium boxes at mid distances, small
# boxes toward corners and edges, with clear gaps between the groups so
# the distance terciles split exactly along the size classes.
_TOY_SCENES: tuple[tuple[tuple[str, int, int, int, int], ...], ...] = (
    (("dog", 256, 256, 330, 310),),
    (("cat", 230, 270, 320, 300),),
    (("car", 285, 245, 340, 310),),
    (("boat", 240, 290, 310, 330),),
    (("bird", 380, 200, 180, 170),),
    (("tree", 150, 330, 190, 200),),
    (("clock", 350, 360, 170, 180),),
    (("ball", 430, 120, 130, 125),),
    (("dog", 90, 420, 130, 130),),
    (("cat", 440, 400, 125, 130),),
    (("dog", 230, 270, 320, 290), ("cat", 450, 100, 115, 120)),
    (("car", 270, 240, 330, 300), ("bird", 75, 455, 130, 100)),
    (("boat", 240, 250, 330, 290), ("tree", 460, 450, 100, 115)),
    (("clock", 280, 275, 310, 300), ("ball", 62, 66, 110, 108)),
    (("tree", 245, 250, 320, 300), ("dog", 460, 85, 100, 120)),
    (("bird", 260, 245, 310, 310), ("car", 65, 455, 110, 100)),
    (("cat", 145, 155, 200, 185), ("boat", 375, 365, 185, 190)),
    (("ball", 370, 150, 180, 175), ("dog", 150, 370, 190, 180)),
    (("car", 256, 140, 210, 160), ("tree", 256, 385, 200, 170)),
    (("bird", 135, 256, 170, 200), ("clock", 440, 430, 125, 125)),
)


def build_toy_corpus() -> list[SampleSpec]:
    """The fixed benchmark corpus used by the bundled CLI and tests."""
    samples = []
    for i, scene in enumerate(_TOY_SCENES, start=1):
        objects = []
        for category, cx, cy, w, h in scene:
            objects.append(
                ObjectSpec(
                    category=category,
                    bbox=(cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2),
                )
            )
        prompt = "background " + " ".join(o.category for o in objects)
        samples.append(
            SampleSpec(
                image_id=f"toy-{i:03d}",
                prompt=prompt,
                width=512,
                height=512,
                objects=tuple(objects),
            )
        )
    return samples


def load_coco_samples(captions_path: str, annotations_path: str) -> list[SampleSpec]:
    """Join caption and instance exports into benchmark samples.

    Expects the usual layout: captions with ``annotations[].{image_id,
    caption}``, instances with ``images[].{id, width, height}``,
    ``annotations[].{image_id, bbox, category_id}`` ([x, y, w, h] pixel
    boxes), and ``categories[].{id, name}``. Each image takes its
    lowest-id caption; boxes are clipped to the image and degenerate ones
    dropped. Images without caption or remaining objects are skipped.
    """
    with open(captions_path) as handle:
        captions_doc = json.load(handle)
    with open(annotations_path) as handle:
        instances_doc = json.load(handle)
    try:
        caption_by_image: dict[int, tuple[int, str]] = {}
        for ann in captions_doc["annotations"]:
            image_id = int(ann["image_id"])
            entry = (int(ann.get("id", 0)), str(ann["caption"]))
            if image_id not in caption_by_image or entry < caption_by_image[image_id]:
                caption_by_image[image_id] = entry
        categories = {int(c["id"]): str(c["name"]) for c in instances_doc["categories"]}
        dims = {
            int(im["id"]): (int(im["width"]), int(im["height"]))
            for im in instances_doc["images"]
        }
        objects_by_image: dict[int, list[ObjectSpec]] = {}
        for ann in instances_doc["annotations"]:
            image_id = int(ann["image_id"])
            if image_id not in dims:
                continue
            width, height = dims[image_id]
            x, y, w, h = (float(v) for v in ann["bbox"])
            x1, y1 = max(0.0, x), max(0.0, y)
            x2, y2 = min(float(width), x + w), min(float(height), y + h)
            if x2 - x1 <= 0 or y2 - y1 <= 0:
                continue
            objects_by_image.setdefault(image_id, []).append(
                ObjectSpec(category=categories[int(ann["category_id"])], bbox=(x1, y1, x2, y2))
            )
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed caption/annotation export: {exc}") from exc
    samples = []
    for image_id in sorted(objects_by_image):
        if image_id not in caption_by_image:
            continue
        width, height = dims[image_id]
        samples.append(
            SampleSpec(
                image_id=str(image_id),
                prompt=caption_by_image[image_id][1],
                width=width,
                height=height,
                objects=tuple(objects_by_image[image_id]),
            )
        )
    return samples
