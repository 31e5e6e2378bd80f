"""Robust GAN-inversion at desk scale: joint latent and corruption-mask recovery."""

from .corruption import CorruptedSample, CorruptionSpec, corrupt, sample_clean, synthesize_defect
from .generator import GeneratorModel, ManifoldSpec, forward, generate, load_model, save_model
from .solver import (InversionResult, SolverConfig, binarize_mask, invert_baseline, optimal_mask_pixel,
                     robust_loss_pixel, solve_rgi, solve_rrgi, sweep_lambda)

__version__ = "0.1.0"
