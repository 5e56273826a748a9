"""Depth completion with calibrated backprojection layers."""

from ._kbnet import (
    Intrinsics,
    Model,
    Pose,
    backproject,
    compose,
    evaluate,
    exp_se3,
    inverse,
    lift,
    masked_max_pool,
    masked_min_pool,
    photometric_loss,
    project,
    read_depth_png,
    read_rgb_png,
    reconstruct,
    scale_intrinsics,
    smoothness_loss,
    sparse_consistency_loss,
    ssim,
    subsample_sparse,
    synth_scene,
    write_depth_png,
    write_rgb_png,
)

__all__ = [
    "Intrinsics",
    "Model",
    "Pose",
    "backproject",
    "compose",
    "evaluate",
    "exp_se3",
    "inverse",
    "lift",
    "masked_max_pool",
    "masked_min_pool",
    "photometric_loss",
    "project",
    "read_depth_png",
    "read_rgb_png",
    "reconstruct",
    "scale_intrinsics",
    "smoothness_loss",
    "sparse_consistency_loss",
    "ssim",
    "subsample_sparse",
    "synth_scene",
    "write_depth_png",
    "write_rgb_png",
]
