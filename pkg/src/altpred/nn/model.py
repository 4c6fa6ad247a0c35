"""The two-branch landing-time network.

Main branch: image -> inverted-residual backbone -> 64-d embedding; tabular
(12) -> MLP_N3 (16); concat (80) -> MLP_N4 (64).

Holding branch: image -> MBConv backbone -> 32-d embedding; holding vector
(5) -> MLP_N1 (16); concat (48) -> MLP_N2 -> 8-d sigmoid feature.

Fusion: concat(MLP_N4, MLP_N2) (72) -> affine -> seconds. With
``ablate_holding`` the holding branch is not built and the regressor reads
MLP_N4 directly (64 -> 1).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import functional as F
from .blocks import Backbone, BackboneSpec, backbone_layer_specs, efficientnet_b0_desk, efficientnet_b0_full, mobilenet_v2_desk, mobilenet_v2_full
from .cost import LayerSpec, param_count
from .layers import Activation, BatchNorm, Dropout, Linear, Module, Sequential
from .tensor import Tensor, as_tensor


class ModelBuildError(ValueError):
    pass


@dataclass
class ModelConfig:
    image_size: int = 64
    main_backbone: BackboneSpec = field(default_factory=mobilenet_v2_desk)
    holding_backbone: BackboneSpec = field(default_factory=efficientnet_b0_desk)
    tabular_dim: int = 12
    holding_dim: int = 5
    main_embed: int = 64
    holding_embed: int = 32
    n1_out: int = 16
    n2_in: int = 48
    n2_hidden: int = 32
    n2_out: int = 8
    n3_out: int = 16
    n4_in: int = 80
    n4_out: int = 64
    final_in: int = 72
    dropout: float = 0.1
    ablate_holding: bool = False

    @classmethod
    def desk(cls, **overrides) -> "ModelConfig":
        cfg = cls(**overrides)
        if cfg.ablate_holding and "final_in" not in overrides:
            cfg.final_in = cfg.n4_out
        return cfg

    @classmethod
    def full_scale(cls, **overrides) -> "ModelConfig":
        base = dict(image_size=224, main_backbone=mobilenet_v2_full(), holding_backbone=efficientnet_b0_full())
        base.update(overrides)
        return cls.desk(**base)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        for key in ("main_backbone", "holding_backbone"):
            if key in d and isinstance(d[key], dict):
                d[key] = BackboneSpec.from_dict(d[key])
        return cls.desk(**d)

    def validate(self) -> None:
        """Check that every head's input width equals what is concatenated into it."""
        if self.n4_in != self.main_embed + self.n3_out:
            raise ModelBuildError(
                f"MLP_N4 input width {self.n4_in} != image embedding {self.main_embed} + MLP_N3 output {self.n3_out}"
            )
        if self.ablate_holding:
            if self.final_in != self.n4_out:
                raise ModelBuildError(f"regressor input width {self.final_in} != MLP_N4 output {self.n4_out}")
            return
        if self.n2_in != self.holding_embed + self.n1_out:
            raise ModelBuildError(
                f"MLP_N2 input width {self.n2_in} != holding image embedding {self.holding_embed}"
                f" + MLP_N1 output {self.n1_out}"
            )
        if self.final_in != self.n4_out + self.n2_out:
            raise ModelBuildError(
                f"regressor input width {self.final_in} != MLP_N4 output {self.n4_out} + MLP_N2 output {self.n2_out}"
            )


class OutputScale(Module):
    """Fixed affine map from the regressor's unit-scale output to seconds."""

    _buffers = ("center", "scale")

    def __init__(self):
        self.center = np.zeros(1)
        self.scale = np.ones(1)

    def forward(self, z: Tensor) -> Tensor:
        return F.add(F.mul(z, self.scale), self.center)


class LandingTimeNet(Module):
    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        cfg.validate()
        self.cfg = cfg
        self.main_backbone = Backbone(cfg.main_backbone, rng)
        self.main_embed = Sequential(
            Linear(self.main_backbone.out_features, cfg.main_embed, rng),
            BatchNorm(cfg.main_embed),
            Activation("leaky_relu"),
            Dropout(cfg.dropout, rng),
        )
        self.mlp_n3 = Sequential(Linear(cfg.tabular_dim, cfg.n3_out, rng), BatchNorm(cfg.n3_out), Activation("leaky_relu"))
        self.mlp_n4 = Sequential(Linear(cfg.n4_in, cfg.n4_out, rng), BatchNorm(cfg.n4_out), Activation("leaky_relu"))
        if cfg.ablate_holding:
            self.holding_backbone = None
            self.holding_embed = None
            self.mlp_n1 = None
            self.mlp_n2 = None
        else:
            self.holding_backbone = Backbone(cfg.holding_backbone, rng)
            self.holding_embed = Sequential(
                Linear(self.holding_backbone.out_features, cfg.holding_embed, rng), Activation("leaky_relu")
            )
            self.mlp_n1 = Sequential(Linear(cfg.holding_dim, cfg.n1_out, rng), Activation("leaky_relu"))
            self.mlp_n2 = Sequential(
                Linear(cfg.n2_in, cfg.n2_hidden, rng),
                BatchNorm(cfg.n2_hidden),
                Activation("leaky_relu"),
                Linear(cfg.n2_hidden, cfg.n2_out, rng),
                Dropout(cfg.dropout, rng),
                Activation("sigmoid"),
            )
        self.regressor = Linear(cfg.final_in, 1, rng)
        self.output = OutputScale()

    def set_dropout_rng(self, rng: np.random.Generator) -> None:
        for m in self.modules():
            if isinstance(m, Dropout):
                m.rng = rng

    def holding_feature(self, image: Tensor, holding: Tensor) -> Tensor:
        emb = self.holding_embed(self.holding_backbone(image))
        return self.mlp_n2(F.concat([emb, self.mlp_n1(holding)], axis=-1))

    def forward(self, image, tabular, holding=None) -> Tensor:
        image, tabular = as_tensor(image), as_tensor(tabular)
        emb = self.main_embed(self.main_backbone(image))
        fused = self.mlp_n4(F.concat([emb, self.mlp_n3(tabular)], axis=-1))
        if not self.cfg.ablate_holding:
            if holding is None:
                raise ValueError("this model needs the holding vector")
            fused = F.concat([fused, self.holding_feature(image, as_tensor(holding))], axis=-1)
        return self.output(self.regressor(fused))

    def layer_specs(self) -> list[LayerSpec]:
        return model_layer_specs(self.cfg)

    def analytic_param_count(self) -> int:
        return sum(param_count(s) for s in self.layer_specs())


def model_layer_specs(cfg: ModelConfig) -> list[LayerSpec]:
    """Every parameterised layer of the network described by ``cfg``, in build order."""

    def affine(a, b):
        return LayerSpec("affine", a, b)

    main = backbone_layer_specs(cfg.main_backbone)
    specs = main + [affine(cfg.main_backbone.head_channels, cfg.main_embed), LayerSpec("bn", cfg.main_embed)]
    specs += [affine(cfg.tabular_dim, cfg.n3_out), LayerSpec("bn", cfg.n3_out)]
    specs += [affine(cfg.n4_in, cfg.n4_out), LayerSpec("bn", cfg.n4_out)]
    if not cfg.ablate_holding:
        specs += backbone_layer_specs(cfg.holding_backbone)
        specs += [affine(cfg.holding_backbone.head_channels, cfg.holding_embed)]
        specs += [affine(cfg.holding_dim, cfg.n1_out)]
        specs += [affine(cfg.n2_in, cfg.n2_hidden), LayerSpec("bn", cfg.n2_hidden), affine(cfg.n2_hidden, cfg.n2_out)]
    specs.append(affine(cfg.final_in, 1))
    return specs


def build_model(cfg: ModelConfig, seed: int = 0) -> LandingTimeNet:
    return LandingTimeNet(cfg, np.random.default_rng(seed))


def full_scale_param_count(ablate_holding: bool = False) -> int:
    """Parameter count of the 224 px layout, computed without allocating weights."""
    cfg = ModelConfig.full_scale(ablate_holding=ablate_holding)
    cfg.validate()
    return sum(param_count(s) for s in model_layer_specs(cfg))
