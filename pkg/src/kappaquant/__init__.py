"""Condition-number reconditioning and fake quantization for linear layers."""

__version__ = "0.1.0"

from .conditioner import ConditionerConfig, condiquant, gradient_step, proximal_step, regularizer_value, target_value
from .matrix import (
    ShapeError,
    SvdConvergenceError,
    SvdFactors,
    as_matrix,
    condition_number,
    fro_norm,
    matmul,
    numerical_rank,
    spectral_norm,
    svd,
)
from .quantizer import QuantSpec, calibrate_minmax, calibrate_percentile, fake_quantize, quant_error_norms

__all__ = [
    "ConditionerConfig",
    "QuantSpec",
    "ShapeError",
    "SvdConvergenceError",
    "SvdFactors",
    "as_matrix",
    "calibrate_minmax",
    "calibrate_percentile",
    "condiquant",
    "condition_number",
    "fake_quantize",
    "fro_norm",
    "gradient_step",
    "matmul",
    "numerical_rank",
    "proximal_step",
    "quant_error_norms",
    "regularizer_value",
    "spectral_norm",
    "svd",
    "target_value",
]
