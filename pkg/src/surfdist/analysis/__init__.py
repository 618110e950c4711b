"""Batch matrices, statistics and landmark propagation."""

from .figures import flatmap_figure, heatmap_export, heatmap_figure, heatmap_rgb, mantel_figure, read_p6, write_p6
from .matrix import (
    METRICS,
    DistanceMatrix,
    LabeledCollection,
    Specimen,
    odlp_matrix,
    pairwise_matrix,
    read_manifest,
    read_matrix,
)
from .propagate import (
    PropagationError,
    PropagationReport,
    propagate_along_path,
    propagate_landmarks,
    propagate_landmarks_report,
)
from .stats import Classification, ConstantMatrixError, MantelResult, label_counts, loo_classify, mantel, seriate

__all__ = [
    "METRICS",
    "Classification",
    "ConstantMatrixError",
    "DistanceMatrix",
    "LabeledCollection",
    "MantelResult",
    "PropagationError",
    "PropagationReport",
    "Specimen",
    "flatmap_figure",
    "heatmap_export",
    "heatmap_figure",
    "heatmap_rgb",
    "label_counts",
    "loo_classify",
    "mantel",
    "mantel_figure",
    "odlp_matrix",
    "pairwise_matrix",
    "propagate_along_path",
    "propagate_landmarks",
    "propagate_landmarks_report",
    "read_manifest",
    "read_matrix",
    "read_p6",
    "seriate",
    "write_p6",
]
