import logging
import math
from typing import Tuple

import torch
import torch.nn.functional as F

from models.report_models import LossReport
from models.tensor_models import DualPrediction
from utils.errors import ValidationError
from utils.validation import InputValidator

logger = logging.getLogger(__name__)


class LossCalculator:
    """Segmentation, consistency and mix objectives plus the unsupervised warm-up"""

    def __init__(self, beta: float = 0.1, dice_eps: float = 1e-5, ce_floor: float = 1e-12):
        self.beta = beta
        self.dice_eps = dice_eps    # Dice smoothing
        self.ce_floor = ce_floor    # probability floor inside log
        self.validator = InputValidator()
        logger.debug(f"Loss calculator initialized (beta={beta}, eps={dice_eps})")

    def dice_loss(self, y_hat: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
        """1 - mean_k (2 sum(y_hat_k y_k) + eps) / (sum(y_hat_k) + sum(y_k) + eps).

        Sums run over batch and spatial positions together. y is one-hot (same shape as
        y_hat) or an integer class map.
        """
        class_dim = self._class_dim(y_hat)
        y = self._one_hot(y, y_hat, class_dim)
        dims = [d for d in range(y_hat.dim()) if d != class_dim]

        intersection = (y_hat * y).sum(dim=dims)
        denominator = y_hat.sum(dim=dims) + y.sum(dim=dims)
        per_class = (2.0 * intersection + self.dice_eps) / (denominator + self.dice_eps)
        return 1.0 - per_class.mean()

    def ce_loss(self, y_hat: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
        """Mean over voxels of -log y_hat[true class]"""
        class_dim = self._class_dim(y_hat)
        y = self._one_hot(y, y_hat, class_dim)
        log_prob = torch.log(y_hat.clamp(min=self.ce_floor))
        return -(y * log_prob).sum(dim=class_dim).mean()

    def seg_loss(self, y_hat: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
        return self.dice_loss(y_hat, y) + self.ce_loss(y_hat, y)

    def sup_losses(self, y_hat_1: torch.Tensor, y_hat_2: torch.Tensor,
                   y: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        """(L_seg(y_hat_1, y), L_seg(y_hat_2, y)); their sum is L_sup"""
        return self.seg_loss(y_hat_1, y), self.seg_loss(y_hat_2, y)

    def unsup_loss(self, y_hat_1: torch.Tensor, y_hat_2: torch.Tensor) -> torch.Tensor:
        """Cross-decoder consistency against the other decoder's detached hard prediction"""
        class_dim = self._class_dim(y_hat_1)
        target_from_1 = torch.argmax(y_hat_1.detach(), dim=class_dim)
        target_from_2 = torch.argmax(y_hat_2.detach(), dim=class_dim)
        return self.seg_loss(y_hat_1, target_from_2) + self.seg_loss(y_hat_2, target_from_1)

    def mix_loss(self, pred_mix_l: DualPrediction, pred_mix_u: DualPrediction,
                 y_mix_l: torch.Tensor, y_mix_u: torch.Tensor, target_decoder: int) -> torch.Tensor:
        """L_seg on both mixes, read from target_decoder's head only"""
        target_decoder = self.validator.validate_decoder_index(target_decoder)
        return (self.seg_loss(pred_mix_l.of(target_decoder), y_mix_l)
                + self.seg_loss(pred_mix_u.of(target_decoder), y_mix_u))

    def warmup(self, t: float, t_max: float, beta: float = None) -> float:
        """lambda_u(t) = beta * exp(-5 (1 - t / t_max)^2), t clamped to [0, t_max]"""
        if t_max <= 0:
            raise ValidationError(f"t_max must be positive, got {t_max}")
        beta = self.beta if beta is None else beta
        t = min(max(t, 0), t_max)
        return beta * math.exp(-5.0 * (1.0 - t / t_max) ** 2)

    def total_loss(self, l_sup_1: float, l_sup_2: float, l_unsup: float,
                   l_cog: float, l_mix: float, lambda_u: float) -> LossReport:
        """Assemble the report; l_total is recomputed from the stored floats"""
        report = LossReport.from_components(
            float(l_sup_1), float(l_sup_2), float(l_unsup), float(l_cog), float(l_mix), float(lambda_u)
        )
        if not report.is_finite():
            logger.warning(f"Non-finite loss components: {report.to_dict()}")
        return report

    @staticmethod
    def _class_dim(y_hat: torch.Tensor) -> int:
        # batched B x K x H x W x D, or a single K x H x W x D field
        if y_hat.dim() == 5:
            return 1
        if y_hat.dim() == 4:
            return 0
        raise ValidationError(f"Expected a (B x) K x H x W x D probability field, got {tuple(y_hat.shape)}")

    @staticmethod
    def _one_hot(y: torch.Tensor, y_hat: torch.Tensor, class_dim: int) -> torch.Tensor:
        if y.shape == y_hat.shape:
            return y.to(y_hat.dtype)
        expected = y_hat.shape[:class_dim] + y_hat.shape[class_dim + 1:]
        if y.shape != expected:
            raise ValidationError(
                f"Labels of shape {tuple(y.shape)} do not match prediction {tuple(y_hat.shape)}"
            )
        one_hot = F.one_hot(y.long(), num_classes=y_hat.shape[class_dim])
        return one_hot.movedim(-1, class_dim).to(y_hat.dtype)
