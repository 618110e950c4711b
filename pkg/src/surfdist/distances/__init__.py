"""Distances between disk-type surfaces and the maps realising them."""

from .conformal import MobiusGrid, cw_distance, cwn_cost, cwn_cost_matrix, cwn_distance
from .cp import (
    CorrespondenceMap,
    CPParams,
    compose_images,
    cp_distance,
    cp_search,
    disk_images,
    map_value,
    read_correspondence,
    refine_map,
)
from .deform import (
    CorrectionResult,
    PeakWarp,
    align_peak_deformation,
    area_preserving_correction,
    area_ratios,
    lift_to_surface,
    match_peaks,
)
from .peaks import Peak, detect_peaks
from .procrustes import DegenerateAlignmentError, RigidMotion, discrete_procrustes, rigid_align, rigid_residuals
from .sampling import SampleSet, farthest_point_order, sample_surface

__all__ = [
    "compose_images",
    "disk_images",
    "map_value",
    "refine_map",
    "CPParams",
    "CorrectionResult",
    "CorrespondenceMap",
    "DegenerateAlignmentError",
    "MobiusGrid",
    "Peak",
    "PeakWarp",
    "RigidMotion",
    "SampleSet",
    "align_peak_deformation",
    "area_preserving_correction",
    "area_ratios",
    "cp_distance",
    "cp_search",
    "cw_distance",
    "cwn_cost",
    "cwn_cost_matrix",
    "cwn_distance",
    "detect_peaks",
    "discrete_procrustes",
    "farthest_point_order",
    "lift_to_surface",
    "match_peaks",
    "read_correspondence",
    "rigid_align",
    "rigid_residuals",
    "sample_surface",
]
