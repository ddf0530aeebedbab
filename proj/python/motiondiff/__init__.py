"""Audio-conditioned motion diffusion engine."""

from motiondiff._core import (
    MotionDiffError,
    __version__,
    boundary_ratio,
    config_hash,
    default_config,
    evaluate,
    generate,
    generate_dataset,
    oracle_alignment,
    pose_variation_intensity,
    sampling_grid,
    train_capp,
    train_denoiser,
    world_sample,
)

__all__ = [
    "MotionDiffError",
    "__version__",
    "boundary_ratio",
    "config_hash",
    "default_config",
    "evaluate",
    "generate",
    "generate_dataset",
    "oracle_alignment",
    "pose_variation_intensity",
    "sampling_grid",
    "train_capp",
    "train_denoiser",
    "world_sample",
]
