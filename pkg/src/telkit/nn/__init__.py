"""Minimal dense-tensor kernel: layers, losses, SGD, gradient checking, checkpoints.

Tensors are plain numpy arrays, f32 in storage with f64 accumulation inside
every multiply-add reduction. There is no autodiff graph: each layer caches
what its backward pass needs, and networks wire forward/backward by hand.
"""
from .core import Param, Tensor, full_precision, he_uniform, zero_grads
from .layers import (
    Conv2d,
    DeformableConv1d,
    Linear,
    MaxPool1d,
    ReLU,
    TapConv1d,
    roi_pool_1d,
    roi_pool_1d_backward,
)
from .losses import hinge, smooth_l1, softmax_cross_entropy
from .optim import sgd_step
from .gradcheck import grad_check
from .checkpoint import load_checkpoint, save_checkpoint

__all__ = [
    "Conv2d",
    "DeformableConv1d",
    "Linear",
    "MaxPool1d",
    "Param",
    "ReLU",
    "TapConv1d",
    "Tensor",
    "full_precision",
    "grad_check",
    "he_uniform",
    "hinge",
    "load_checkpoint",
    "roi_pool_1d",
    "roi_pool_1d_backward",
    "save_checkpoint",
    "sgd_step",
    "smooth_l1",
    "softmax_cross_entropy",
    "zero_grads",
]
