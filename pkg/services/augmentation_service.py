import logging
import math
from typing import Tuple

import torch

from models.tensor_models import DualPrediction, MixedBatch, PseudoLabel
from utils.errors import ValidationError
from utils.validation import InputValidator

logger = logging.getLogger(__name__)


class CognitiveAugmentationService:
    """Dynamic cognitive augmentation: foreground cut-and-paste between labeled and unlabeled patches.

    Masks are the foreground union (any non-background class). Mixing is a per-voxel
    select, so every output voxel comes from exactly one source pair.
    """

    def __init__(self):
        self.validator = InputValidator()

    def select_pseudo_labeler(self, l_sup_1: float, l_sup_2: float) -> int:
        """Decoder with the lower supervised loss; 1 on a tie"""
        l_sup_1, l_sup_2 = float(l_sup_1), float(l_sup_2)
        if math.isnan(l_sup_1) or math.isnan(l_sup_2):
            raise ValidationError(f"Cannot rank decoders on NaN losses ({l_sup_1}, {l_sup_2})")
        return 1 if l_sup_1 <= l_sup_2 else 2

    @staticmethod
    def binarize(y_hat: torch.Tensor) -> torch.Tensor:
        """Per-voxel argmax over the class dim of a (B x) K x H x W x D field; ties go to the lowest class"""
        if y_hat.dim() not in (4, 5):
            raise ValidationError(f"Expected a (B x) K x H x W x D field, got {tuple(y_hat.shape)}")
        return torch.argmax(y_hat, dim=-4)

    def pseudo_label(self, prediction_u: DualPrediction, l_sup_1: float, l_sup_2: float) -> PseudoLabel:
        """Detached hard labels from the better decoder's unlabeled prediction"""
        source = self.select_pseudo_labeler(l_sup_1, l_sup_2)
        y_p = self.binarize(prediction_u.of(source).detach())
        return PseudoLabel(y_p=y_p, source_decoder=source)

    def mix_volumes(self, x_l: torch.Tensor, y_l: torch.Tensor, x_u: torch.Tensor,
                    y_p: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        """x_mix_l = x_l*M_l + x_u*(1-M_l); x_mix_u = x_u*M_p + x_l*(1-M_p)"""
        self.validator.validate_same_shape(x_l, x_u, names=('x_l', 'x_u'))
        self.validator.validate_same_shape(y_l, y_p, names=('y_l', 'y_p'))
        m_l = self._foreground(y_l, x_l)
        m_p = self._foreground(y_p, x_l)
        return torch.where(m_l, x_l, x_u), torch.where(m_p, x_u, x_l)

    def mix_labels(self, y_l: torch.Tensor, y_p: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        """y_mix_l = y_l*M_l + y_p*(1-M_l); y_mix_u = y_p*M_p + y_l*(1-M_p)"""
        self.validator.validate_same_shape(y_l, y_p, names=('y_l', 'y_p'))
        y_p = y_p.to(y_l.dtype)
        return torch.where(y_l != 0, y_l, y_p), torch.where(y_p != 0, y_p, y_l)

    def build_mixed_batch(self, x_l: torch.Tensor, y_l: torch.Tensor, x_u: torch.Tensor,
                          y_p: torch.Tensor, target_decoder: int) -> MixedBatch:
        """Pair labeled sample i with unlabeled sample i; the shorter side is cycled.

        Args:
            x_l, x_u: B_l x 1 x H x W x D and B_u x 1 x H x W x D patches
            y_l, y_p: integer maps B_l x H x W x D and B_u x H x W x D
            target_decoder: decoder trained by the mix loss (the non-pseudo-labeler)
        """
        target_decoder = self.validator.validate_decoder_index(target_decoder)
        n_l, n_u = x_l.shape[0], x_u.shape[0]
        if n_l == 0 or n_u == 0:
            raise ValidationError(f"Mixing needs labeled and unlabeled samples, got {n_l}/{n_u}")
        if y_l.shape[0] != n_l or y_p.shape[0] != n_u:
            raise ValidationError("Label batch sizes do not match their volumes")

        n = max(n_l, n_u)
        index_l = torch.arange(n, device=x_l.device) % n_l
        index_u = torch.arange(n, device=x_u.device) % n_u
        x_l, y_l = x_l[index_l], y_l[index_l]
        x_u, y_p = x_u[index_u], y_p[index_u]

        x_mix_l, x_mix_u = self.mix_volumes(x_l, y_l, x_u, y_p)
        y_mix_l, y_mix_u = self.mix_labels(y_l, y_p)
        return MixedBatch(
            x_mix_l=x_mix_l.detach(),
            x_mix_u=x_mix_u.detach(),
            y_mix_l=y_mix_l.detach(),
            y_mix_u=y_mix_u.detach(),
            target_decoder=target_decoder,
        )

    def _foreground(self, y: torch.Tensor, x: torch.Tensor) -> torch.Tensor:
        mask = y != 0
        if x.dim() == mask.dim() + 1:
            mask = mask.unsqueeze(-4)  # broadcast over the channel dim of x
        if tuple(mask.shape[-3:]) != tuple(x.shape[-3:]):
            raise ValidationError(f"Label grid {tuple(y.shape)} does not match volume {tuple(x.shape)}")
        return mask
