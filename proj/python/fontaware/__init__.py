"""Python bindings for the fontaware core: corpus rendering, attention
rollout, the awareness-weighted L1 loss and glyph metrics.

Images are 2-D float arrays in [0, 1], ink dark on a white background.
"""

from ._core import (
    DataError,
    NonStochasticAttention,
    ShapeMismatch,
    attention_rollout,
    hausdorff,
    hausdorff_points,
    iou,
    l1,
    load_manifest,
    normalize_map,
    otsu_threshold,
    pca,
    phd,
    phd_points,
    render_glyph,
    resize_image,
    resize_map,
    sample_pairs,
    ssim,
    weighted_l1,
    weighted_l1_grad,
    weighted_l1_metric,
)

__all__ = [
    "DataError",
    "NonStochasticAttention",
    "ShapeMismatch",
    "attention_rollout",
    "hausdorff",
    "hausdorff_points",
    "iou",
    "l1",
    "load_manifest",
    "normalize_map",
    "otsu_threshold",
    "pca",
    "phd",
    "phd_points",
    "render_glyph",
    "resize_image",
    "resize_map",
    "sample_pairs",
    "ssim",
    "weighted_l1",
    "weighted_l1_grad",
    "weighted_l1_metric",
]
