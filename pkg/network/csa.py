"""Category-aware semantic alignment.

Each class's text feature is pulled toward the prediction-masked global average
of the projected bottleneck feature, once per decoder.
"""
from typing import Sequence

import torch
import torch.nn as nn
import torch.nn.functional as F

from utils.errors import ValidationError


class ProjectionHead(nn.Module):
    """Per-voxel linear map C -> C_t"""

    def __init__(self, channels: int, text_dim: int):
        super().__init__()
        self.proj = nn.Conv3d(channels, text_dim, kernel_size=1)

    def forward(self, f_v: torch.Tensor) -> torch.Tensor:
        return self.proj(f_v)


def class_masked_average(f_v_p: torch.Tensor, y_hat_k: torch.Tensor) -> torch.Tensor:
    """Global mean of F_v^p * y_hat_k per channel.

    The divisor is the voxel count, not the mask mass. Leading dims broadcast, so
    (C_t x H x W x D, H x W x D) -> C_t and (B x 1 x C_t x ..., B x K x ...) -> B x K x C_t.
    """
    if tuple(f_v_p.shape[-3:]) != tuple(y_hat_k.shape[-3:]):
        raise ValidationError(
            f"Feature grid {tuple(f_v_p.shape[-3:])} and mask grid {tuple(y_hat_k.shape[-3:])} differ"
        )
    return (f_v_p * y_hat_k.unsqueeze(-4)).mean(dim=(-3, -2, -1))


def downsample_prediction(y_hat: torch.Tensor, size: Sequence[int]) -> torch.Tensor:
    """Average-pool a B x K x H x W x D probability field to the bottleneck grid"""
    if tuple(y_hat.shape[2:]) == tuple(size):
        return y_hat
    return F.adaptive_avg_pool3d(y_hat, tuple(size))


def cognitive_loss(f_t: torch.Tensor, f_v_p: torch.Tensor,
                   y_hat_1: torch.Tensor, y_hat_2: torch.Tensor) -> torch.Tensor:
    """L_cog = sum_k ||F_t^k - m_1k||^2 + ||F_t^k - m_2k||^2, averaged over the batch.

    Args:
        f_t: K x C_t text features
        f_v_p: B x C_t x h x w x d projected bottleneck
        y_hat_1, y_hat_2: B x K x H x W x D predictions (pooled to h x w x d here)
    """
    if f_v_p.dim() != 5:
        raise ValidationError(f"Expected B x C_t x h x w x d features, got {tuple(f_v_p.shape)}")
    if f_t.shape[1] != f_v_p.shape[1]:
        raise ValidationError(f"Text dim {f_t.shape[1]} and projected dim {f_v_p.shape[1]} differ")

    grid = f_v_p.shape[2:]
    total = f_v_p.new_zeros(f_v_p.shape[0])
    for y_hat in (y_hat_1, y_hat_2):
        if y_hat.shape[1] != f_t.shape[0]:
            raise ValidationError(f"Prediction has {y_hat.shape[1]} classes, text has {f_t.shape[0]}")
        masked = class_masked_average(f_v_p.unsqueeze(1), downsample_prediction(y_hat, grid))
        total = total + ((f_t.unsqueeze(0) - masked) ** 2).sum(dim=(1, 2))
    return total.mean()
