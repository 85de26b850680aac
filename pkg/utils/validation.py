import math
import logging
from typing import Any, Sequence, Tuple

import numpy as np
import torch

from utils.errors import ValidationError

logger = logging.getLogger(__name__)

class InputValidator:
    """Validator for volumes, label maps, tensors and run parameters"""

    def __init__(self, max_voxels: int = 2 ** 31):
        self.max_voxels = max_voxels
        logger.debug("Input validator initialized")

    def validate_dims(self, dims: Sequence[int], name: str = 'dims') -> Tuple[int, int, int]:
        """Validate a 3D grid size: three positive ints within the voxel budget"""
        dims = tuple(int(d) for d in dims)
        if len(dims) != 3:
            raise ValidationError(f"{name} must have 3 entries, got {len(dims)}")
        if any(d < 1 for d in dims):
            raise ValidationError(f"{name} must be positive, got {dims}")
        if dims[0] * dims[1] * dims[2] > self.max_voxels:
            raise ValidationError(f"{name} {dims} exceed the maximum of {self.max_voxels} voxels")
        return dims

    def validate_spacing(self, spacing: Sequence[float]) -> Tuple[float, float, float]:
        """Validate voxel spacing: three positive finite reals"""
        spacing = tuple(float(s) for s in spacing)
        if len(spacing) != 3:
            raise ValidationError(f"Spacing must have 3 entries, got {len(spacing)}")
        if not all(math.isfinite(s) and s > 0 for s in spacing):
            raise ValidationError(f"Spacing must be positive and finite, got {spacing}")
        return spacing

    def validate_volume_array(self, voxels: np.ndarray) -> np.ndarray:
        """Validate a raw intensity grid"""
        if not isinstance(voxels, np.ndarray):
            raise ValidationError(f"Volume voxels must be a numpy array, got {type(voxels).__name__}")
        if voxels.ndim != 3:
            raise ValidationError(f"Volume must be 3D, got shape {voxels.shape}")
        self.validate_dims(voxels.shape, 'volume dims')
        if not np.all(np.isfinite(voxels)):
            raise ValidationError("Volume contains non-finite voxel values")
        return voxels

    def validate_label_array(self, labels: np.ndarray, num_classes: int = None) -> np.ndarray:
        """Validate an integer class-label grid"""
        if not isinstance(labels, np.ndarray):
            raise ValidationError(f"Labels must be a numpy array, got {type(labels).__name__}")
        if labels.ndim != 3:
            raise ValidationError(f"Label map must be 3D, got shape {labels.shape}")
        if not np.issubdtype(labels.dtype, np.integer):
            raise ValidationError(f"Label map must hold integers, got {labels.dtype}")
        self.validate_dims(labels.shape, 'label dims')
        if labels.size and labels.min() < 0:
            raise ValidationError("Label map contains negative values")
        if num_classes is not None and labels.size and labels.max() >= num_classes:
            raise ValidationError(f"Label value {int(labels.max())} out of range for {num_classes} classes")
        return labels

    def validate_same_shape(self, *arrays: Any, names: Sequence[str] = None) -> None:
        """Validate that all arrays/tensors share one shape"""
        shapes = [tuple(a.shape) for a in arrays]
        if len(set(shapes)) > 1:
            label = ', '.join(names) if names else 'inputs'
            raise ValidationError(f"Shape mismatch between {label}: {shapes}")

    def validate_patch_size(self, patch_size: Sequence[int], volume_dims: Sequence[int]) -> Tuple[int, int, int]:
        """Validate a crop size against the volume it is cut from"""
        patch_size = self.validate_dims(patch_size, 'patch size')
        if any(p > d for p, d in zip(patch_size, volume_dims)):
            raise ValidationError(f"Patch size {patch_size} larger than volume {tuple(volume_dims)}")
        return patch_size

    def validate_divisible(self, dims: Sequence[int], factor: int) -> None:
        """Validate that every spatial dim is a multiple of factor"""
        if any(int(d) % factor for d in dims):
            raise ValidationError(f"Spatial dims {tuple(dims)} must be divisible by {factor}")

    def validate_probabilities(self, y_hat: torch.Tensor, class_dim: int = 1, atol: float = 1e-4) -> torch.Tensor:
        """Validate a per-voxel class-probability field"""
        if not torch.isfinite(y_hat).all():
            raise ValidationError("Probability field contains non-finite values")
        if (y_hat < -atol).any() or (y_hat > 1 + atol).any():
            raise ValidationError("Probability field values outside [0, 1]")
        sums = y_hat.sum(dim=class_dim)
        if not torch.allclose(sums, torch.ones_like(sums), atol=atol):
            raise ValidationError("Class probabilities do not sum to 1")
        return y_hat

    def validate_decoder_index(self, index: int) -> int:
        """Validate a decoder index (1 or 2)"""
        if index not in (1, 2):
            raise ValidationError(f"Decoder index must be 1 or 2, got {index}")
        return index

    def validate_finite_scalar(self, value: float, name: str) -> float:
        """Validate that a scalar is finite"""
        value = float(value)
        if not math.isfinite(value):
            raise ValidationError(f"{name} must be finite, got {value}")
        return value
