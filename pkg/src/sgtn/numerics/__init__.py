"""Tensor algebra, layers, losses and gradient checking."""
from . import functional, ops
from .functional import axial_instance_norm, batch_norm, conv2d, deconv2d_s2, layer_norm
from .gradcheck import GradcheckReport, finite_diff_gradcheck, gradcheck_parameters
from .losses import LossValue, dice_loss, smooth_l1, weighted_bce
from .nn import (BatchNorm, Conv2d, ConvBNReLU, LayerNorm, Linear, Module, ModuleList,
                 Parameter, seeded_rng, trunc_normal)
from .ops import softmax_lastdim
from .tensor import (NumericalError, ShapeError, Tensor, as_tensor, default_dtype,
                     finite_checks, is_grad_enabled, no_grad, precision)

__all__ = [
    "functional", "ops", "axial_instance_norm", "batch_norm", "conv2d", "deconv2d_s2",
    "layer_norm", "GradcheckReport", "finite_diff_gradcheck", "gradcheck_parameters",
    "LossValue", "dice_loss", "smooth_l1", "weighted_bce", "BatchNorm", "Conv2d",
    "ConvBNReLU", "LayerNorm", "Linear", "Module", "ModuleList", "Parameter", "seeded_rng",
    "trunc_normal", "softmax_lastdim", "NumericalError", "ShapeError", "Tensor",
    "as_tensor", "default_dtype", "finite_checks", "is_grad_enabled", "no_grad", "precision",
]
