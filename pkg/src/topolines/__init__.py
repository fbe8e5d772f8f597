"""Connectivity-aware text line segmentation toolkit.

Core pieces: a component-level segmentation loss with analytic gradients
(:mod:`topolines.loss`), patch tiling and Gaussian-blended stitching
(:mod:`topolines.patches`), line-level evaluation metrics
(:mod:`topolines.metrics`), baseline extraction and post-processing
(:mod:`topolines.baselines`), PAGE XML / PNG / manifest I/O
(:mod:`topolines.pageio`), a synthetic page generator with controlled
topology defects (:mod:`topolines.synth`) and a gradient-descent repair
driver (:mod:`topolines.repair`). The ``topolines`` command wires them
into file-based workflows.
"""

from .baselines import (
    BaselinePostProcessor,
    Polyline,
    extract_baselines,
    filter_short,
    format_baselines,
    merge_close,
    parse_baselines,
    post_process,
)
from .components import (
    DEFAULT_CONNECTIVITY,
    binarize,
    count_components,
    label_components,
)
from .loss import (
    ComponentSelection,
    ConnectivityLoss,
    LossReport,
    dice_loss,
    select_critical_components,
)
from .metrics import (
    BaselineEvalReport,
    ConfusionCounts,
    LineMatchReport,
    baseline_fmeasure,
    confusion_counts,
    line_iou,
    line_match_metrics,
    match_score,
    pixel_iou,
)
from .pageio import (
    DatasetManifest,
    ManifestEntry,
    MaskFormatError,
    PageAnnotation,
    PageXmlError,
    Rasterization,
    downsample,
    parse_page_xml,
    rasterize,
    read_manifest,
    read_mask,
    read_prob_map,
    write_manifest,
    write_mask,
    write_prob_map,
)
from .patches import gaussian_window, sample_training_patches, stitch, tile_patches
from .repair import (
    RepairError,
    TopologyRepair,
    finite_diff_check,
    steps_until_component_match,
    trace_to_tsv,
)
from .synth import CorruptionError, CorruptionRecord, PageSpec, corrupt, generate_page

__version__ = "0.1.0"

__all__ = [
    "BaselineEvalReport",
    "BaselinePostProcessor",
    "ComponentSelection",
    "ConfusionCounts",
    "ConnectivityLoss",
    "CorruptionError",
    "CorruptionRecord",
    "DatasetManifest",
    "DEFAULT_CONNECTIVITY",
    "LineMatchReport",
    "LossReport",
    "ManifestEntry",
    "MaskFormatError",
    "PageAnnotation",
    "PageXmlError",
    "PageSpec",
    "Polyline",
    "Rasterization",
    "RepairError",
    "TopologyRepair",
    "baseline_fmeasure",
    "binarize",
    "confusion_counts",
    "corrupt",
    "count_components",
    "dice_loss",
    "downsample",
    "extract_baselines",
    "filter_short",
    "finite_diff_check",
    "format_baselines",
    "gaussian_window",
    "generate_page",
    "label_components",
    "line_iou",
    "line_match_metrics",
    "match_score",
    "merge_close",
    "parse_baselines",
    "parse_page_xml",
    "pixel_iou",
    "post_process",
    "rasterize",
    "read_manifest",
    "read_mask",
    "read_prob_map",
    "sample_training_patches",
    "select_critical_components",
    "steps_until_component_match",
    "stitch",
    "tile_patches",
    "trace_to_tsv",
    "write_manifest",
    "write_mask",
    "write_prob_map",
]
