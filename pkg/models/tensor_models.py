from dataclasses import dataclass, replace
from typing import List, Optional

import torch


@dataclass
class EncoderFeatures:
    """Multi-scale encoder outputs.

    skips[s] has shape B x (base * 2^s) x (dims / 2^s) for s < depth - 1;
    bottleneck is the deepest stage, F_v.
    """
    skips: List[torch.Tensor]
    bottleneck: torch.Tensor

    def with_bottleneck(self, bottleneck: torch.Tensor) -> 'EncoderFeatures':
        return replace(self, bottleneck=bottleneck)


@dataclass
class PlaneFeatures:
    """Bottleneck pooled onto three orthogonal planes (batched)"""
    coronal: torch.Tensor   # B x C x H' x W'
    sagittal: torch.Tensor  # B x C x W' x D'
    axial: torch.Tensor     # B x C x H' x D'


@dataclass
class DualPrediction:
    """Class-probability fields from the two decoders, each B x K x H x W x D"""
    y_hat_1: torch.Tensor
    y_hat_2: torch.Tensor

    def of(self, decoder: int) -> torch.Tensor:
        if decoder == 1:
            return self.y_hat_1
        if decoder == 2:
            return self.y_hat_2
        raise ValueError(f"Decoder index must be 1 or 2, got {decoder}")

    def split(self, n: int):
        """(first n samples, remaining samples)"""
        head = DualPrediction(self.y_hat_1[:n], self.y_hat_2[:n])
        tail = DualPrediction(self.y_hat_1[n:], self.y_hat_2[n:])
        return head, tail


@dataclass
class PseudoLabel:
    y_p: torch.Tensor
    source_decoder: int


@dataclass
class MixedBatch:
    """Cut-and-paste mixes of labeled and unlabeled patches"""
    x_mix_l: torch.Tensor
    x_mix_u: torch.Tensor
    y_mix_l: torch.Tensor
    y_mix_u: torch.Tensor
    target_decoder: int


@dataclass
class ForwardOutput:
    """One pass of the full model: predictions plus the intermediates the losses need"""
    prediction: DualPrediction
    features: EncoderFeatures
    text_features: Optional[torch.Tensor] = None
