"""faceveil: find faces on the edge, tell children from adults, obscure them.

The package bundles a from-scratch CNN kernel library, a three-stage
cascaded face detector, unit-norm face embeddings with a nearest-reference
child/adult decision, pluggable face obscuration, and toy-scale training
for every trainable piece.
"""

from .denature import (
    Blur,
    Pixelate,
    RedactionPolicy,
    Scramble,
    apply_policy,
    denature_regions,
    descramble_regions,
)
from .detect import (
    Detection,
    DetectorConfig,
    FaceBox,
    build_pyramid,
    detect_faces,
    nms,
    pnet_scan,
    refine_boxes,
    refinement_stage,
)
from .embed import FaceChip, align_crop, embed_chip
from .errors import (
    ConfigError,
    DataError,
    DegenerateInputError,
    FaceveilError,
    InvariantError,
    TrainingDiverged,
)
from .nn import WeightStore, load_weights, save_weights
from .pipeline import EvalSummary, Pipeline, PipelineConfig, evaluate_reports
from .recognize import (
    ClassificationResult,
    Gallery,
    build_gallery,
    classify,
    compute_roc,
    gallery_build,
    load_gallery,
    save_gallery,
)
from .train import TrainerConfig, train_toy

__version__ = "0.1.0"

__all__ = [
    "Blur",
    "Pixelate",
    "RedactionPolicy",
    "Scramble",
    "apply_policy",
    "denature_regions",
    "descramble_regions",
    "Detection",
    "DetectorConfig",
    "FaceBox",
    "build_pyramid",
    "detect_faces",
    "nms",
    "pnet_scan",
    "refine_boxes",
    "refinement_stage",
    "FaceChip",
    "align_crop",
    "embed_chip",
    "ConfigError",
    "DataError",
    "DegenerateInputError",
    "FaceveilError",
    "InvariantError",
    "TrainingDiverged",
    "WeightStore",
    "load_weights",
    "save_weights",
    "EvalSummary",
    "Pipeline",
    "PipelineConfig",
    "evaluate_reports",
    "ClassificationResult",
    "Gallery",
    "build_gallery",
    "classify",
    "compute_roc",
    "gallery_build",
    "load_gallery",
    "save_gallery",
    "TrainerConfig",
    "train_toy",
    "__version__",
]
