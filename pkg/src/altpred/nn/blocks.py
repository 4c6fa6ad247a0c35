"""Inverted residual blocks and the two convolutional backbones."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import functional as F
from .cost import LayerSpec
from .layers import Activation, BatchNorm, Conv2d, DepthwiseConv2d, GlobalAvgPool, MaxPool, Module, PointwiseConv2d
from .tensor import Tensor


class InvertedResidual(Module):
    """Expand (1x1) -> depthwise (k x k, stride) -> project (1x1, linear).

    The identity skip exists only when ``stride == 1`` and the channel count
    is preserved. ``expansion == 1`` drops the expand stage (MBConv1).
    """

    def __init__(
        self,
        d_in: int,
        d_out: int,
        rng: np.random.Generator,
        stride: int = 1,
        expansion: int = 6,
        k: int = 3,
        activation: str = "relu6",
    ):
        if stride not in (1, 2):
            raise ValueError(f"stride must be 1 or 2, got {stride}")
        self.d_in, self.d_out, self.stride, self.expansion, self.k = d_in, d_out, stride, expansion, k
        self.activation = activation
        hidden = d_in * expansion
        if expansion != 1:
            self.expand = PointwiseConv2d(d_in, hidden, rng)
            self.expand_bn = BatchNorm(hidden)
        else:
            self.expand = None
            self.expand_bn = None
        self.depthwise = DepthwiseConv2d(hidden, k, rng, stride)
        self.depthwise_bn = BatchNorm(hidden)
        self.project = PointwiseConv2d(hidden, d_out, rng)
        self.project_bn = BatchNorm(d_out)
        self.act = Activation(activation)

    @property
    def use_residual(self) -> bool:
        return self.stride == 1 and self.d_in == self.d_out

    def forward(self, x: Tensor) -> Tensor:
        h = x
        if self.expand is not None:
            h = self.act(self.expand_bn(self.expand(h)))
        h = self.act(self.depthwise_bn(self.depthwise(h)))
        h = self.project_bn(self.project(h))
        if self.use_residual:
            return F.add(x, h, op="residual_add")
        return h

    def spec(self) -> LayerSpec:
        return LayerSpec(
            "invres", self.d_in, self.d_out, k=self.k, stride=self.stride, expansion=self.expansion,
            activation=self.activation,
        )


@dataclass
class StageSpec:
    expansion: int
    channels: int
    repeats: int
    stride: int
    k: int = 3


@dataclass
class BackboneSpec:
    """Stem conv, a list of block stages, a 1x1 head conv, then global pooling."""

    stem_channels: int
    stages: list[StageSpec]
    head_channels: int
    activation: str = "relu6"
    in_channels: int = 3
    input_pool: int = 1

    @classmethod
    def from_dict(cls, d: dict) -> "BackboneSpec":
        d = dict(d)
        d["stages"] = [s if isinstance(s, StageSpec) else StageSpec(**s) for s in d["stages"]]
        return cls(**d)


def mobilenet_v2_desk() -> BackboneSpec:
    return BackboneSpec(
        stem_channels=8,
        stages=[StageSpec(1, 8, 1, 2), StageSpec(6, 16, 1, 1), StageSpec(6, 16, 1, 1)],
        head_channels=48,
        activation="relu6",
        input_pool=2,
    )


def efficientnet_b0_desk() -> BackboneSpec:
    return BackboneSpec(
        stem_channels=8,
        stages=[StageSpec(1, 8, 1, 2, 3), StageSpec(6, 16, 1, 1, 5), StageSpec(6, 16, 1, 1, 3)],
        head_channels=48,
        activation="swish",
        input_pool=2,
    )


def mobilenet_v2_full(width: float = 1.0) -> BackboneSpec:
    from .cost import round_to_multiple

    table = [(1, 16, 1, 1), (6, 24, 2, 2), (6, 32, 3, 2), (6, 64, 4, 2), (6, 96, 3, 1), (6, 160, 3, 2), (6, 320, 1, 1)]
    return BackboneSpec(
        stem_channels=round_to_multiple(32 * width),
        stages=[StageSpec(t, round_to_multiple(c * width), n, s) for t, c, n, s in table],
        head_channels=max(1280, round_to_multiple(1280 * width)),
        activation="relu6",
    )


def efficientnet_b0_full() -> BackboneSpec:
    # standard B0 stage table; squeeze-and-excitation is not modelled
    table = [
        (1, 16, 1, 1, 3), (6, 24, 2, 2, 3), (6, 40, 2, 2, 5), (6, 80, 3, 2, 3),
        (6, 112, 3, 1, 5), (6, 192, 4, 2, 5), (6, 320, 1, 1, 3),
    ]
    return BackboneSpec(32, [StageSpec(*row) for row in table], 1280, activation="swish")


class Backbone(Module):
    """Image -> pooled ``head_channels`` feature vector."""

    def __init__(self, spec: BackboneSpec, rng: np.random.Generator):
        self.spec_ = spec
        self.input_pool = MaxPool(spec.input_pool) if spec.input_pool > 1 else None
        self.stem = Conv2d(spec.in_channels, spec.stem_channels, 3, rng, stride=2)
        self.stem_bn = BatchNorm(spec.stem_channels)
        self.act = Activation(spec.activation)
        blocks = []
        c = spec.stem_channels
        for stage in spec.stages:
            for i in range(stage.repeats):
                stride = stage.stride if i == 0 else 1
                blocks.append(
                    InvertedResidual(c, stage.channels, rng, stride, stage.expansion, stage.k, spec.activation)
                )
                c = stage.channels
        self.blocks = blocks
        self.head = PointwiseConv2d(c, spec.head_channels, rng)
        self.head_bn = BatchNorm(spec.head_channels)
        self.pool = GlobalAvgPool()
        self.out_features = spec.head_channels

    def forward(self, x: Tensor) -> Tensor:
        if self.input_pool is not None:
            x = self.input_pool(x)
        h = self.act(self.stem_bn(self.stem(x)))
        for block in self.blocks:
            h = block(h)
        h = self.act(self.head_bn(self.head(h)))
        return self.pool(h)

    def layer_specs(self) -> list[LayerSpec]:
        return backbone_layer_specs(self.spec_)

    def stage_flops(self, resolution: int) -> int:
        from .cost import flops

        total, side = 0, resolution
        for spec in self.layer_specs():
            if spec.kind == "pool":
                side //= spec.stride
            elif spec.kind == "conv":
                side = -(-side // spec.stride)
                total += flops(spec, side, side)
            elif spec.kind in ("pwconv", "invres"):
                total += flops(spec, side, side)
                side = -(-side // spec.stride)
        return total


def backbone_layer_specs(spec: BackboneSpec) -> list[LayerSpec]:
    c = spec.stem_channels
    specs = [LayerSpec("pool", spec.in_channels, spec.in_channels, k=spec.input_pool, stride=spec.input_pool)]
    specs += [LayerSpec("conv", spec.in_channels, c, k=3, stride=2), LayerSpec("bn", c)]
    for stage in spec.stages:
        for i in range(stage.repeats):
            stride = stage.stride if i == 0 else 1
            specs.append(
                LayerSpec("invres", c, stage.channels, k=stage.k, stride=stride, expansion=stage.expansion,
                          activation=spec.activation)
            )
            c = stage.channels
    specs += [LayerSpec("pwconv", c, spec.head_channels), LayerSpec("bn", spec.head_channels)]
    specs.append(LayerSpec("pool", spec.head_channels, spec.head_channels, k=0))
    return specs
