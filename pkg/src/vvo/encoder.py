"""Frozen toy backbone plus the two trainable adjustment heads."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import torch
from torch import nn
from torch.nn import functional as F


class EncoderError(ValueError):
    pass


@dataclass
class FeatureMap:
    """Dense ``(..., h, w, c)`` features and where they came from."""

    values: torch.Tensor
    provenance: str = "toy-cnn"

    def __post_init__(self):
        v = self.values
        if v.dim() < 3:
            raise EncoderError(f"feature map needs h, w, c dims, got {tuple(v.shape)}")
        if v.shape[-3] < 2 or v.shape[-2] < 2 or v.shape[-1] < 4:
            raise EncoderError(f"feature map too small: {tuple(v.shape)}")
        if not torch.isfinite(v).all():
            raise EncoderError("non-finite feature values")

    @classmethod
    def from_archive(cls, values) -> "FeatureMap":
        return cls(torch.as_tensor(values, dtype=torch.float32), provenance="file")


def param_hash(module: nn.Module | dict) -> str:
    """SHA-256 over a module's (or state dict's) tensors, in name order."""
    state = module.state_dict() if isinstance(module, nn.Module) else module
    h = hashlib.sha256()
    for name in sorted(state):
        h.update(name.encode())
        h.update(state[name].detach().cpu().contiguous().numpy().tobytes())
    return h.hexdigest()


class ToyBackbone(nn.Module):
    """Three stride-2 patchifying convolutions, 3 -> 16 -> 32 -> c, frozen at construction.

    Kernels are 2x2 with a random channel mixing shared across the four taps, so
    every output cell sees exactly its own 8x8 input patch and responds to its
    colour content rather than to edges; tanh in between.
    """

    stride = 8

    def __init__(self, out_channels: int = 16, seed: int = 1234):
        super().__init__()
        g = torch.Generator().manual_seed(seed)
        self.convs = nn.ModuleList(
            [nn.Conv2d(a, b, 2, stride=2) for a, b in ((3, 16), (16, 32), (32, out_channels))]
        )
        with torch.no_grad():
            for conv in self.convs:
                mix = torch.randn(conv.out_channels, conv.in_channels, 1, 1, generator=g)
                mix *= (2.0 / conv.in_channels) ** 0.5
                conv.weight.copy_(mix.expand_as(conv.weight) / 4.0)
                conv.bias.copy_(torch.randn(conv.bias.shape, generator=g) * 0.1)
        self.requires_grad_(False)

    def forward(self, x):
        # x: (B, 3, H, W)
        for i, conv in enumerate(self.convs):
            x = conv(x)
            if i < len(self.convs) - 1:
                x = torch.tanh(x)
        return x

    def train(self, mode: bool = True):
        # always frozen, no mode-dependent layers
        return super().train(False)


class PositionRemoval(nn.Module):
    """3x3 convolutions with reflect padding and GELU in between."""

    def __init__(self, channels: int, layers: int = 2):
        super().__init__()
        if layers < 1:
            raise EncoderError("adjust_cnn needs at least one layer")
        self.convs = nn.ModuleList(
            [nn.Conv2d(channels, channels, 3, padding=1, padding_mode="reflect") for _ in range(layers)]
        )

    def forward(self, z):
        # z: (..., h, w, c) channel-last
        lead = z.shape[:-3]
        x = z.reshape(-1, *z.shape[-3:]).permute(0, 3, 1, 2)
        for i, conv in enumerate(self.convs):
            x = conv(x)
            if i < len(self.convs) - 1:
                x = F.gelu(x)
        return x.permute(0, 2, 3, 1).reshape(*lead, *x.shape[2:], x.shape[1])


class Encoder(nn.Module):
    """Frozen backbone with ``adjust_linear`` (aggregation) and ``adjust_cnn`` (quantization).

    ``encode_calls`` counts backbone invocations.
    """

    def __init__(self, feature_dim: int = 16, slot_dim: int | None = None, seed: int = 1234, cnn_layers: int = 2):
        super().__init__()
        slot_dim = feature_dim if slot_dim is None else slot_dim
        self.feature_dim = feature_dim
        self.slot_dim = slot_dim
        self.backbone = ToyBackbone(feature_dim, seed)
        self.adjust_linear = nn.Linear(feature_dim, slot_dim)
        if slot_dim == feature_dim:
            with torch.no_grad():
                self.adjust_linear.weight.copy_(torch.eye(feature_dim))
                self.adjust_linear.bias.zero_()
        self.adjust_cnn = PositionRemoval(feature_dim, cnn_layers)
        self.encode_calls = 0

    def encode(self, image) -> FeatureMap:
        """``(..., H, W, 3)`` images in [0, 1] to ``(..., H/8, W/8, c)`` features."""
        if isinstance(image, FeatureMap):
            return image
        image = torch.as_tensor(image, dtype=torch.float32)
        if image.dim() < 3 or image.shape[-1] != 3:
            raise EncoderError(f"expected (..., H, W, 3) image, got {tuple(image.shape)}")
        H, W = image.shape[-3:-1]
        s = ToyBackbone.stride
        if H % s or W % s:
            raise EncoderError(f"image dims {H}x{W} not divisible by stride {s}")
        if not torch.isfinite(image).all():
            raise EncoderError("non-finite input image")
        self.encode_calls += 1
        lead = image.shape[:-3]
        x = image.reshape(-1, H, W, 3).permute(0, 3, 1, 2)
        with torch.no_grad():
            z = self.backbone(x)
        z = z.permute(0, 2, 3, 1).reshape(*lead, H // s, W // s, self.feature_dim)
        return FeatureMap(z.contiguous())

    def adjust_for_aggregation(self, z: FeatureMap | torch.Tensor) -> torch.Tensor:
        return self.adjust_linear(_values(z))

    def adjust_for_quantization(self, z: FeatureMap | torch.Tensor) -> torch.Tensor:
        return self.adjust_cnn(_values(z))


def _values(z):
    return z.values if isinstance(z, FeatureMap) else z
