"""Closed-form cost accounting (multiply-accumulates, parameters) and compound scaling."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

CONV_KINDS = ("conv", "dwconv", "pwconv", "separable", "invres")


@dataclass(frozen=True)
class LayerSpec:
    """Static description of one layer, independent of any weights.

    ``d_in``/``d_out`` are channel (or feature) widths. ``expansion`` only
    applies to ``invres``; ``stride`` to the spatial kinds.
    """

    kind: str
    d_in: int = 0
    d_out: int = 0
    k: int = 1
    stride: int = 1
    expansion: int = 1
    activation: str = ""
    rate: float = 0.0

    def __post_init__(self):
        kinds = CONV_KINDS + ("bn", "affine", "act", "dropout", "pool")
        if self.kind not in kinds:
            raise ValueError(f"unknown layer kind {self.kind!r}")

    @property
    def has_residual(self) -> bool:
        return self.kind == "invres" and self.stride == 1 and self.d_in == self.d_out


def flops(spec: LayerSpec, h: int, w: int) -> int:
    """Multiply-accumulate count of a conv-family layer on an ``h x w`` input.

    standard:  h*w*d_in*d_out*k^2
    separable: h*w*d_in*(k^2 + d_out)
    """
    d_i, d_j, k = spec.d_in, spec.d_out, spec.k
    if spec.kind == "conv":
        return h * w * d_i * d_j * k * k
    if spec.kind == "separable":
        return h * w * d_i * (k * k + d_j)
    if spec.kind == "dwconv":
        return h * w * d_i * k * k
    if spec.kind == "pwconv":
        return h * w * d_i * d_j
    if spec.kind == "invres":
        hidden = d_i * spec.expansion
        ho, wo = math.ceil(h / spec.stride), math.ceil(w / spec.stride)
        expand = h * w * d_i * hidden if spec.expansion != 1 else 0
        return expand + ho * wo * hidden * k * k + ho * wo * hidden * d_j
    raise ValueError(f"flops: {spec.kind!r} is not a convolution layer")


def separable_saving(k: int, d_out: int) -> float:
    """Ratio standard / separable cost, ``d_out*k^2 / (k^2 + d_out)``."""
    return d_out * k * k / (k * k + d_out)


def param_count(spec: LayerSpec) -> int:
    d_i, d_j, k = spec.d_in, spec.d_out, spec.k
    if spec.kind == "conv":
        return k * k * d_i * d_j
    if spec.kind == "dwconv":
        return k * k * d_i
    if spec.kind == "pwconv":
        return d_i * d_j
    if spec.kind == "separable":
        return k * k * d_i + d_i * d_j
    if spec.kind == "bn":
        return 2 * d_i
    if spec.kind == "affine":
        return d_i * d_j + d_j
    if spec.kind == "invres":
        hidden = d_i * spec.expansion
        expand = d_i * hidden + 2 * hidden if spec.expansion != 1 else 0
        return expand + k * k * hidden + 2 * hidden + hidden * d_j + 2 * d_j
    return 0


@dataclass(frozen=True)
class ScalingCoefficients:
    """Compound-scaling constants. ``gamma_r`` is the resolution base."""

    phi: float = 1.0
    alpha: float = 1.2
    beta: float = 1.1
    gamma_r: float = 1.15

    def __post_init__(self):
        if min(self.alpha, self.beta, self.gamma_r) < 1.0:
            raise ValueError("alpha, beta and gamma_r must all be >= 1")

    @property
    def flops_base(self) -> float:
        """alpha * beta^2 * gamma_r^2; FLOPs grow by roughly this to the power phi."""
        return self.alpha * self.beta**2 * self.gamma_r**2

    def satisfies_constraint(self, target: float = 2.0, rel_tol: float = 0.05) -> bool:
        return abs(self.flops_base - target) <= rel_tol * target


@dataclass
class ScaledConfig:
    depth_multiplier: float
    width_multiplier: float
    resolution_multiplier: float
    depths: list[int] = field(default_factory=list)
    widths: list[int] = field(default_factory=list)
    resolution: int = 0


def round_to_multiple(value: float, divisor: int = 8) -> int:
    rounded = max(divisor, int(value + divisor / 2) // divisor * divisor)
    if rounded < 0.9 * value:
        rounded += divisor
    return rounded


def compound_scale(coeffs: ScalingCoefficients, base_depths, base_widths, base_res: int) -> ScaledConfig:
    if coeffs.phi < 0:
        raise ValueError("phi must be >= 0")
    dm = coeffs.alpha**coeffs.phi
    wm = coeffs.beta**coeffs.phi
    rm = coeffs.gamma_r**coeffs.phi
    if coeffs.phi == 0:
        return ScaledConfig(1.0, 1.0, 1.0, list(base_depths), list(base_widths), int(base_res))
    return ScaledConfig(
        dm,
        wm,
        rm,
        depths=[int(math.ceil(d * dm)) for d in base_depths],
        widths=[round_to_multiple(w * wm) for w in base_widths],
        resolution=2 * int(round(base_res * rm / 2)),
    )
