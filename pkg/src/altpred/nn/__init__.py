"""Minimal numpy autodiff engine and the convolutional landing-time network."""

from .blocks import Backbone, BackboneSpec, InvertedResidual, StageSpec
from .cost import LayerSpec, ScalingCoefficients, compound_scale, flops, param_count
from .gradcheck import check_gradients, norm_relative_error, relative_error
from .layers import (
    BatchNorm, Conv2d, DepthwiseConv2d, Dropout, GlobalAvgPool, Linear, MaxPool, Module, Parameter, PointwiseConv2d,
)
from .model import LandingTimeNet, ModelBuildError, ModelConfig, build_model, full_scale_param_count
from .optim import Adam, AdamState, adam_step
from .tensor import Tensor, no_grad

__all__ = [
    "Adam", "AdamState", "Backbone", "BackboneSpec", "BatchNorm", "Conv2d", "DepthwiseConv2d", "Dropout",
    "GlobalAvgPool", "InvertedResidual", "MaxPool", "check_gradients", "norm_relative_error", "relative_error", "LandingTimeNet", "LayerSpec", "Linear", "ModelBuildError", "ModelConfig", "Module",
    "Parameter", "PointwiseConv2d", "ScalingCoefficients", "StageSpec", "Tensor", "adam_step", "build_model",
    "compound_scale", "flops", "full_scale_param_count", "no_grad", "param_count",
]
