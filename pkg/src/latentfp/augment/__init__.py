"""Synthetic latent-print augmentations and seeded pipelines."""
from .perlin import perlin, perlin_raw
from .pipeline import OPS, AugmentSpec, OpSpec, load_spec, resolve_params, run_pipeline
from .transforms import (INTENSITIES, NOISE_KINDS, SHAPES, AugmentError, add_noise, adjust_brightness,
                         displacement_field, dusting_powder, edge_image, elastic_deform, gaussian_blur, moisture,
                         occlude, region_mask, smear, texture_blend)

__all__ = ["perlin", "perlin_raw", "OPS", "AugmentSpec", "OpSpec", "load_spec", "resolve_params", "run_pipeline",
           "INTENSITIES", "NOISE_KINDS", "SHAPES", "AugmentError", "add_noise", "adjust_brightness",
           "displacement_field", "dusting_powder", "edge_image", "elastic_deform", "gaussian_blur", "moisture",
           "occlude", "region_mask", "smear", "texture_blend"]
