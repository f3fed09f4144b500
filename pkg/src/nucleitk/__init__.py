"""Toolkit for nuclei mask cleanup, patch preprocessing, instance
segmentation evaluation, training schedules, and architecture shape checks."""

__version__ = "0.1.0"

from .binarize import apply_threshold, otsu_segment, otsu_threshold
from .errors import NucleitkError
from .inpaint import InpaintConfig, eikonal_distance, fast_marching_inpaint
from .mask_core import (
    connected_components,
    count_objects,
    labelmap_to_binary,
    load_gray,
    load_labelmap,
    mask_difference,
    mask_union,
    save_gray,
    save_labelmap,
)
from .metrics import (
    aggregated_jaccard_index,
    entropy_map,
    evaluate_set,
    object_f1,
    pixel_f1,
)
from .pipeline import (
    AugmentationSpec,
    PatchRecord,
    compute_aux_mask,
    extract_patches,
    filter_patches,
    invert_foreground,
    normalize_image,
    nuclei_inpaint,
)
from .schedule import (
    DiscriminatorReadout,
    TaskLosses,
    adversarial_weight,
    combine_losses,
    emit_schedule,
    learning_rate,
    task_weight,
)
from .netspec import LayerSpec, TensorShape, chain_shapes, conv_output_shape, validate_builtin

__all__ = [
    "AugmentationSpec",
    "DiscriminatorReadout",
    "InpaintConfig",
    "LayerSpec",
    "NucleitkError",
    "PatchRecord",
    "TaskLosses",
    "TensorShape",
    "adversarial_weight",
    "aggregated_jaccard_index",
    "apply_threshold",
    "chain_shapes",
    "combine_losses",
    "compute_aux_mask",
    "connected_components",
    "conv_output_shape",
    "count_objects",
    "eikonal_distance",
    "emit_schedule",
    "entropy_map",
    "evaluate_set",
    "extract_patches",
    "fast_marching_inpaint",
    "filter_patches",
    "invert_foreground",
    "labelmap_to_binary",
    "learning_rate",
    "load_gray",
    "load_labelmap",
    "mask_difference",
    "mask_union",
    "normalize_image",
    "nuclei_inpaint",
    "object_f1",
    "otsu_segment",
    "otsu_threshold",
    "pixel_f1",
    "save_gray",
    "save_labelmap",
    "task_weight",
    "validate_builtin",
]
