import logging
import os
from typing import Optional, Sequence, Tuple

import numpy as np
from pydantic import ValidationError as PydanticValidationError

from models.volume_models import DatasetManifest, LabelMap, Volume
from utils.binary_codec import DTYPE_F32, DTYPE_U8, decode_grid, encode_grid
from utils.errors import FormatError, ValidationError
from utils.validation import InputValidator

logger = logging.getLogger(__name__)

class DataIOService:
    """Bit-exact volume storage, manifest handling and random patch sampling"""

    def __init__(self):
        self.validator = InputValidator()

    def save_volume(self, volume: Volume, path: str) -> None:
        """Write a volume in the f32 grid format"""
        self._check_parent(path)
        with open(path, 'wb') as f:
            f.write(encode_grid(volume.voxels, volume.spacing, DTYPE_F32))
        logger.debug(f"Saved volume {volume.shape} to {path}")

    def load_volume(self, path: str) -> Volume:
        """Read a volume written by save_volume"""
        array, spacing, dtype_tag = decode_grid(self._read(path))
        if dtype_tag != DTYPE_F32:
            raise FormatError(f"{path} holds labels (dtype tag {dtype_tag}), not a volume")
        return Volume(array, spacing)

    def save_label_map(self, label_map: LabelMap, path: str,
                       spacing: Sequence[float] = (1.0, 1.0, 1.0)) -> None:
        """Write a label map in the u8 grid format"""
        self._check_parent(path)
        with open(path, 'wb') as f:
            f.write(encode_grid(label_map.labels, spacing, DTYPE_U8))
        logger.debug(f"Saved label map {label_map.shape} to {path}")

    def load_label_map(self, path: str, num_classes: Optional[int] = None) -> LabelMap:
        """Read a label map written by save_label_map"""
        array, _, dtype_tag = decode_grid(self._read(path))
        if dtype_tag != DTYPE_U8:
            raise FormatError(f"{path} holds a volume (dtype tag {dtype_tag}), not labels")
        return LabelMap(array, num_classes)

    def load_pair(self, manifest: DatasetManifest, pair: Tuple[str, str]) -> Tuple[Volume, LabelMap]:
        """Load a (volume, label) manifest entry and check they match"""
        volume = self.load_volume(manifest.resolve(pair[0]))
        label_map = self.load_label_map(manifest.resolve(pair[1]), manifest.num_classes)
        if volume.shape != label_map.shape:
            raise ValidationError(f"Volume {pair[0]} {volume.shape} and labels {pair[1]} {label_map.shape} differ")
        return volume, label_map

    def save_manifest(self, manifest: DatasetManifest, path: str) -> None:
        self._check_parent(path)
        with open(path, 'w', encoding='utf-8') as f:
            f.write(manifest.model_dump_json(indent=2))
            f.write('\n')
        logger.info(f"Manifest written to {path}")

    def load_manifest(self, path: str) -> DatasetManifest:
        """Parse a manifest and bind its directory as the root for relative paths"""
        if not os.path.isfile(path):
            raise ValidationError(f"Manifest not found: {path}")
        with open(path, 'r', encoding='utf-8') as f:
            raw = f.read()
        try:
            manifest = DatasetManifest.model_validate_json(raw)
        except PydanticValidationError as e:
            raise ValidationError(f"Invalid manifest {path}: {e.errors()[0]['msg']}") from e
        return manifest.bind_root(os.path.dirname(os.path.abspath(path)))

    def sample_patch(self, volume: Volume, label_map: Optional[LabelMap],
                     patch_size: Sequence[int], rng: np.random.Generator
                     ) -> Tuple[Volume, Optional[LabelMap]]:
        """Crop a random patch; volume and labels share the offset.

        The corner offset is uniform over all valid positions along each axis.
        """
        patch_size = self.validator.validate_patch_size(patch_size, volume.shape)
        if label_map is not None:
            self.validator.validate_same_shape(volume.voxels, label_map.labels, names=('volume', 'labels'))

        offset = tuple(int(rng.integers(0, dim - size + 1)) for dim, size in zip(volume.shape, patch_size))
        window = tuple(slice(o, o + s) for o, s in zip(offset, patch_size))

        patch = Volume(volume.voxels[window].copy(), volume.spacing)
        label_patch = None
        if label_map is not None:
            label_patch = LabelMap(label_map.labels[window].copy(), label_map.num_classes)
        return patch, label_patch

    def _read(self, path: str) -> bytes:
        if not os.path.isfile(path):
            raise ValidationError(f"File not found: {path}")
        with open(path, 'rb') as f:
            return f.read()

    def _check_parent(self, path: str) -> None:
        parent = os.path.dirname(os.path.abspath(path))
        if not os.path.isdir(parent):
            raise ValidationError(f"Parent directory does not exist: {parent}")
