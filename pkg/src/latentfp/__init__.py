"""Latent fingerprint enhancement toolkit: Gabor engine, differentiable
operators, a UNet-like encoder/decoder network and augmentations."""
from .checkpoint import load_checkpoint, save_checkpoint
from .gabor import (GaborBank, GaborParams, apply_bank_batched, apply_bank_naive, bench_bank, build_bank,
                    enhance_classical, estimate_orientation_field, estimate_ridge_frequency, gabor_kernel)
from .gabor_layer import LearnableGaborLayer
from .gradcheck import grad_check
from .image import bilinear_sample, contrast_stretch
from .io import load_image, save_image
from .network import (Network, NetworkConfig, ShapeError, build_network, canonical_config, count_params,
                      enhance_image, scaled_config, train_step, validate_shapes)
from .seeding import derive_seed

__version__ = "0.1.0"

__all__ = [
    "load_checkpoint", "save_checkpoint", "GaborBank", "GaborParams", "apply_bank_batched", "apply_bank_naive",
    "bench_bank", "build_bank", "enhance_classical", "estimate_orientation_field", "estimate_ridge_frequency",
    "gabor_kernel", "LearnableGaborLayer", "grad_check", "bilinear_sample", "contrast_stretch", "load_image",
    "save_image", "Network", "NetworkConfig", "ShapeError", "build_network", "canonical_config", "count_params",
    "enhance_image", "scaled_config", "train_step", "validate_shapes", "derive_seed",
]
