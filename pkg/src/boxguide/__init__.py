"""Location-aware attention guidance on a deterministic toy generator.

Soft Gaussian masks are added to cross-attention logits inside guidance
boxes while attention outside is suppressed to exactly zero, steering
where each prompt concept appears. The package bundles the mask and
attention math, a seeded multi-resolution toy generator to observe the
effect end to end, an object-wise consistency benchmark (IoU matching,
success rates, size/distance subsets, Frechet distance), a CLI, and an
HTTP service for interactive use.
"""

from .attention import WeightSchedule, attention, guided_attention, mask_weight
from .evaluation import (
    ConsistencyRecord,
    DetectionRecord,
    FeatureStats,
    SubsetReport,
    fit_gaussian,
    frechet_distance,
    match_guidance,
    read_detections_file,
    read_features_csv,
    subset_report,
    success_rate,
)
from .generator import (
    MASK_MODES,
    ConceptToken,
    ConceptVocabulary,
    GenerationConfig,
    GenerationResult,
    RenderedImage,
    concept_fractions,
    default_vocabulary,
    generate,
    oracle_detect,
)
from .geometry import (
    BoundingBox,
    DistanceClass,
    SizeClass,
    center_distance,
    distance_terciles,
    iou,
    size_class,
)
from .harness import (
    ObjectSpec,
    RunReport,
    SampleSpec,
    build_toy_corpus,
    evaluate_detections,
    filter_samples,
    load_coco_samples,
    load_samples,
    render_report,
    run_benchmark,
    sample_to_guidance,
    save_samples,
    split_by_object_count,
)
from .masks import (
    DEFAULT_SOFTNESS,
    GAUSSIAN_PEAK,
    EmptyBoxWarning,
    GuidanceEntry,
    GuidanceSet,
    SoftMask,
    build_flat_mask,
    build_soft_mask,
    cell_centers,
    gaussian_field,
    rasterize_box,
)

__version__ = "0.1.0"

__all__ = [
    "BoundingBox",
    "ConceptToken",
    "ConceptVocabulary",
    "ConsistencyRecord",
    "DEFAULT_SOFTNESS",
    "DetectionRecord",
    "DistanceClass",
    "EmptyBoxWarning",
    "FeatureStats",
    "GAUSSIAN_PEAK",
    "GenerationConfig",
    "GenerationResult",
    "GuidanceEntry",
    "GuidanceSet",
    "MASK_MODES",
    "ObjectSpec",
    "RenderedImage",
    "RunReport",
    "SampleSpec",
    "SizeClass",
    "SoftMask",
    "SubsetReport",
    "WeightSchedule",
    "attention",
    "build_flat_mask",
    "build_soft_mask",
    "build_toy_corpus",
    "cell_centers",
    "center_distance",
    "concept_fractions",
    "default_vocabulary",
    "distance_terciles",
    "evaluate_detections",
    "filter_samples",
    "fit_gaussian",
    "frechet_distance",
    "gaussian_field",
    "generate",
    "guided_attention",
    "iou",
    "load_coco_samples",
    "load_samples",
    "mask_weight",
    "match_guidance",
    "oracle_detect",
    "rasterize_box",
    "read_detections_file",
    "read_features_csv",
    "render_report",
    "run_benchmark",
    "sample_to_guidance",
    "save_samples",
    "size_class",
    "split_by_object_count",
    "subset_report",
    "success_rate",
]
