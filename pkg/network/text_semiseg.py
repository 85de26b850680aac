import logging
from typing import Optional

import torch
import torch.nn as nn

from models.tensor_models import DualPrediction, EncoderFeatures, ForwardOutput
from models.train_config import BackboneConfig, ModuleToggles
from network.backbone import DualDecoderVNet
from network.csa import ProjectionHead
from network.textprompt import TextPromptBank
from network.tmr import MultiplanarTextEnhancer, RepeatTextInjector

logger = logging.getLogger(__name__)


class TextSemiSegNet(nn.Module):
    """Dual-decoder V-Net with a text prompt bank, bottleneck text injection and a CSA head.

    Every submodule is built regardless of the toggles, backbone first, so that
    variants seeded alike start from the same backbone weights.
    """

    def __init__(self, config: BackboneConfig, toggles: ModuleToggles = None,
                 text_dim: Optional[int] = None, attn_dim: Optional[int] = None,
                 num_context: int = 4):
        super().__init__()
        self.config = config
        self.toggles = toggles or ModuleToggles()
        channels = config.bottleneck_channels
        self.text_dim = text_dim or channels
        self.attn_dim = attn_dim or channels

        self.backbone = DualDecoderVNet(config)
        self.prompt_bank = TextPromptBank(config.num_classes, self.text_dim, num_context)
        self.tmr = MultiplanarTextEnhancer(channels, self.text_dim, self.attn_dim)
        self.repeat_injector = RepeatTextInjector(channels, self.text_dim, config.num_classes)
        self.projection_head = ProjectionHead(channels, self.text_dim)

        logger.debug(
            f"TextSemiSegNet built: K={config.num_classes}, C={channels}, C_t={self.text_dim}, "
            f"d={self.attn_dim}, toggles={self.toggles}"
        )

    def encode(self, x: torch.Tensor) -> EncoderFeatures:
        return self.backbone.encode(x)

    def text_features(self) -> torch.Tensor:
        return self.prompt_bank.text_features()

    def enhance(self, f_v: torch.Tensor, f_t: Optional[torch.Tensor]) -> torch.Tensor:
        """Bottleneck after text injection; F_v itself when TMR is off"""
        if not self.toggles.tmr or f_t is None:
            return f_v
        if self.toggles.text_injection == 'repeat':
            return self.repeat_injector(f_v, f_t)
        return self.tmr(f_v, f_t)

    def project(self, f_v: torch.Tensor) -> torch.Tensor:
        return self.projection_head(f_v)

    def decode_dual(self, features: EncoderFeatures) -> DualPrediction:
        return self.backbone.decode_dual(features)

    def forward(self, x: torch.Tensor) -> ForwardOutput:
        features = self.encode(x)
        f_t = self.text_features() if self.toggles.uses_text else None
        enhanced = features.with_bottleneck(self.enhance(features.bottleneck, f_t))
        return ForwardOutput(prediction=self.decode_dual(enhanced), features=features, text_features=f_t)
