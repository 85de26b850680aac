"""Dual-decoder V-Net (MC-Net pattern).

One shared encoder; decoder 1 up-samples with learned transposed convolutions,
decoder 2 with trilinear interpolation followed by a 1x1x1 convolution. The two
decoders share no parameters.
"""
import logging
from typing import List

import torch
import torch.nn as nn
import torch.nn.functional as F

from models.tensor_models import DualPrediction, EncoderFeatures
from models.train_config import BackboneConfig
from utils.errors import ValidationError
from utils.validation import InputValidator

logger = logging.getLogger(__name__)

_validator = InputValidator()


class ConvBlock(nn.Module):
    def __init__(self, in_channels: int, out_channels: int):
        super().__init__()
        self.conv = nn.Sequential(
            nn.Conv3d(in_channels, out_channels, kernel_size=3, padding=1),
            nn.InstanceNorm3d(out_channels, affine=True),
            nn.PReLU(num_parameters=out_channels),
        )

    def forward(self, x):
        return self.conv(x)


class DownConvBlock(nn.Module):
    def __init__(self, in_channels: int, out_channels: int):
        super().__init__()
        self.down = nn.Conv3d(in_channels, out_channels, kernel_size=2, stride=2)
        self.conv = ConvBlock(out_channels, out_channels)

    def forward(self, x):
        return self.conv(self.down(x))


class TransposedUpBlock(nn.Module):
    def __init__(self, in_channels: int, out_channels: int):
        super().__init__()
        self.up = nn.ConvTranspose3d(in_channels, out_channels, kernel_size=2, stride=2)
        self.conv = ConvBlock(out_channels, out_channels)

    def forward(self, x, skip):
        return self.conv(self.up(x) + skip)


class InterpolationUpBlock(nn.Module):
    def __init__(self, in_channels: int, out_channels: int):
        super().__init__()
        self.reduce = nn.Conv3d(in_channels, out_channels, kernel_size=1)
        self.conv = ConvBlock(out_channels, out_channels)

    def forward(self, x, skip):
        x = F.interpolate(x, size=skip.shape[2:], mode='trilinear', align_corners=False)
        return self.conv(self.reduce(x) + skip)


class VNetEncoder(nn.Module):
    def __init__(self, config: BackboneConfig):
        super().__init__()
        self.config = config
        stages = [ConvBlock(config.in_channels, config.stage_channels(0))]
        for s in range(1, config.depth):
            stages.append(DownConvBlock(config.stage_channels(s - 1), config.stage_channels(s)))
        self.stages = nn.ModuleList(stages)

    def forward(self, x) -> List[torch.Tensor]:
        outputs = []
        for stage in self.stages:
            x = stage(x)
            outputs.append(x)
        return outputs


class VNetDecoder(nn.Module):
    def __init__(self, config: BackboneConfig, up_block: type):
        super().__init__()
        self.config = config
        self.dropout = nn.Dropout3d(config.dropout) if config.dropout > 0 else nn.Identity()
        self.up_blocks = nn.ModuleList([
            up_block(config.stage_channels(s), config.stage_channels(s - 1))
            for s in range(config.depth - 1, 0, -1)
        ])
        self.classifier = nn.Conv3d(config.stage_channels(0), config.num_classes, kernel_size=1)

    def forward(self, features: EncoderFeatures) -> torch.Tensor:
        x = self.dropout(features.bottleneck)
        for block, skip in zip(self.up_blocks, reversed(features.skips)):
            x = block(x, skip)
        return torch.softmax(self.classifier(x), dim=1)


class DualDecoderVNet(nn.Module):
    """Shared V-Net encoder with two structurally different decoders"""

    def __init__(self, config: BackboneConfig):
        super().__init__()
        self.config = config
        self.encoder = VNetEncoder(config)
        self.decoder_1 = VNetDecoder(config, TransposedUpBlock)
        self.decoder_2 = VNetDecoder(config, InterpolationUpBlock)
        initialize_weights(self)

    def encode(self, x: torch.Tensor) -> EncoderFeatures:
        """B x C_in x H x W x D batch -> multi-scale features"""
        if x.dim() != 5 or x.shape[1] != self.config.in_channels:
            raise ValidationError(
                f"Expected input B x {self.config.in_channels} x H x W x D, got {tuple(x.shape)}"
            )
        _validator.validate_divisible(x.shape[2:], self.config.downsampling)
        stages = self.encoder(x)
        return EncoderFeatures(skips=stages[:-1], bottleneck=stages[-1])

    def decode_dual(self, features: EncoderFeatures) -> DualPrediction:
        """Features (bottleneck possibly text-enhanced) -> two probability fields"""
        self._check_features(features)
        return DualPrediction(self.decoder_1(features), self.decoder_2(features))

    def forward(self, x: torch.Tensor) -> DualPrediction:
        return self.decode_dual(self.encode(x))

    def _check_features(self, features: EncoderFeatures) -> None:
        cfg = self.config
        if len(features.skips) != cfg.depth - 1:
            raise ValidationError(f"Expected {cfg.depth - 1} skip tensors, got {len(features.skips)}")
        stages = list(features.skips) + [features.bottleneck]
        base_spatial = tuple(stages[0].shape[2:])
        for s, tensor in enumerate(stages):
            expected_channels = cfg.stage_channels(s)
            expected_spatial = tuple(n // 2 ** s for n in base_spatial)
            if tensor.dim() != 5 or tensor.shape[1] != expected_channels or tuple(tensor.shape[2:]) != expected_spatial:
                raise ValidationError(
                    f"Stage {s} feature has shape {tuple(tensor.shape)}, expected "
                    f"B x {expected_channels} x {expected_spatial}"
                )


def initialize_weights(module: nn.Module) -> None:
    """Kaiming fan-in for convolutions, zero biases"""
    for m in module.modules():
        if isinstance(m, (nn.Conv3d, nn.ConvTranspose3d)):
            nn.init.kaiming_normal_(m.weight, mode='fan_in')
            if m.bias is not None:
                nn.init.zeros_(m.bias)
