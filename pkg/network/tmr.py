"""Text-enhanced multiplanar representation.

The bottleneck F_v (B x C x H' x W' x D') is average-pooled onto three planes,
each plane's tokens self-attend, text features query the attended tokens, the
class context is redistributed back onto plane positions, and the three planes
are broadcast back into the volume with learnable weights plus a residual.
"""
import math
from typing import Tuple

import torch
import torch.nn as nn

from models.tensor_models import PlaneFeatures
from utils.errors import ValidationError

PLANES = ('coronal', 'sagittal', 'axial')


def pool_planes(f_v: torch.Tensor) -> PlaneFeatures:
    """Mean over D' (coronal), H' (sagittal) and W' (axial)"""
    if f_v.dim() != 5:
        raise ValidationError(f"Expected B x C x H x W x D features, got {tuple(f_v.shape)}")
    return PlaneFeatures(
        coronal=f_v.mean(dim=4),
        sagittal=f_v.mean(dim=2),
        axial=f_v.mean(dim=3),
    )


def reconstruct_voxels(planes: PlaneFeatures, f_v: torch.Tensor, weights: torch.Tensor) -> torch.Tensor:
    """~F_v[c,x,y,z] = w_c*cor[c,x,y] + w_s*sag[c,y,z] + w_a*ax[c,x,z] + F_v[c,x,y,z]"""
    b, c, h, w, d = f_v.shape
    expected = {
        'coronal': (b, c, h, w),
        'sagittal': (b, c, w, d),
        'axial': (b, c, h, d),
    }
    for name, shape in expected.items():
        actual = tuple(getattr(planes, name).shape)
        if actual != shape:
            raise ValidationError(f"{name} plane has shape {actual}, expected {shape}")

    planar = (weights[0] * planes.coronal[:, :, :, :, None]
              + weights[1] * planes.sagittal[:, :, None, :, :]
              + weights[2] * planes.axial[:, :, :, None, :])
    return planar + f_v


class PlaneTextAttention(nn.Module):
    """Self-attention over one plane's tokens followed by text cross-attention"""

    def __init__(self, channels: int, text_dim: int, attn_dim: int):
        super().__init__()
        self.attn_dim = attn_dim
        self.scale = math.sqrt(attn_dim)

        self.self_q = nn.Linear(channels, attn_dim)
        self.self_k = nn.Linear(channels, attn_dim)
        self.self_v = nn.Linear(channels, attn_dim)

        self.text_q = nn.Linear(text_dim, attn_dim)
        self.text_k = nn.Linear(attn_dim, attn_dim)
        self.text_v = nn.Linear(attn_dim, attn_dim)

        self.out_proj = nn.Linear(attn_dim, channels)

    def self_attention(self, tokens: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        """tokens B x N x C -> (A(p) B x N x d, attention B x N x N)"""
        q = self.self_q(tokens)
        k = self.self_k(tokens)
        v = self.self_v(tokens)
        attention = torch.softmax(q @ k.transpose(1, 2) / self.scale, dim=-1)
        return attention @ v, attention

    def text_enhance(self, f_t: torch.Tensor, attended: torch.Tensor,
                     plane_shape: Tuple[int, int]) -> Tuple[torch.Tensor, torch.Tensor]:
        """Text-query the attended tokens and redistribute class context to positions.

        S = softmax(Q(F_t) K(a)^T / sqrt(d))   B x K x N
        O = S V(a)                            B x K x d
        R = S^T O                             B x N x d
        enhanced = out_proj(R) reshaped to B x C x U x V

        Returns:
            (enhanced plane, S)
        """
        b, n, _ = attended.shape
        u, v = plane_shape
        if u * v != n:
            raise ValidationError(f"Plane shape {plane_shape} does not match {n} tokens")

        q = self.text_q(f_t)
        k = self.text_k(attended)
        values = self.text_v(attended)

        scores = torch.matmul(q, k.transpose(1, 2)) / self.scale
        s = torch.softmax(scores, dim=-1)
        o = s @ values
        r = s.transpose(1, 2) @ o
        enhanced = self.out_proj(r).transpose(1, 2).reshape(b, -1, u, v)
        return enhanced, s

    def forward(self, plane: torch.Tensor, f_t: torch.Tensor) -> torch.Tensor:
        b, c, u, v = plane.shape
        tokens = plane.flatten(2).transpose(1, 2)
        attended, _ = self.self_attention(tokens)
        enhanced, _ = self.text_enhance(f_t, attended, (u, v))
        return enhanced


class MultiplanarTextEnhancer(nn.Module):
    """TMR block; a drop-in residual on the bottleneck (output shape = input shape)"""

    def __init__(self, channels: int, text_dim: int, attn_dim: int = None):
        super().__init__()
        attn_dim = attn_dim or channels
        self.planes = nn.ModuleDict({
            name: PlaneTextAttention(channels, text_dim, attn_dim) for name in PLANES
        })
        # w_c, w_s, w_a; zero start leaves the backbone feature untouched
        self.plane_weights = nn.Parameter(torch.zeros(3))

    def forward(self, f_v: torch.Tensor, f_t: torch.Tensor) -> torch.Tensor:
        pooled = pool_planes(f_v)
        enhanced = {name: self.planes[name](getattr(pooled, name), f_t) for name in PLANES}
        return reconstruct_voxels(PlaneFeatures(**enhanced), f_v, self.plane_weights)


class RepeatTextInjector(nn.Module):
    """Text features tiled to every voxel, fused by a 1x1x1 conv behind a zero-initialized gate"""

    def __init__(self, channels: int, text_dim: int, num_classes: int):
        super().__init__()
        self.fuse = nn.Conv3d(channels + num_classes * text_dim, channels, kernel_size=1)
        self.gate = nn.Parameter(torch.zeros(1))

    def forward(self, f_v: torch.Tensor, f_t: torch.Tensor) -> torch.Tensor:
        b, _, h, w, d = f_v.shape
        tiled = f_t.reshape(1, -1, 1, 1, 1).expand(b, -1, h, w, d)
        return f_v + self.gate * self.fuse(torch.cat([f_v, tiled], dim=1))
