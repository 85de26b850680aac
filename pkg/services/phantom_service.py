import logging
import os
from typing import List, Sequence, Tuple

import numpy as np
from tenacity import RetryError, retry, retry_if_exception_type, stop_after_attempt

import config
from models.volume_models import DatasetManifest, EllipsoidSpec, LabelMap, Volume
from services.dataio_service import DataIOService
from utils.errors import GenerationError, ValidationError
from utils.validation import InputValidator

logger = logging.getLogger(__name__)


class _PlacementRejected(Exception):
    pass


def ellipsoid_mask(shape: Sequence[int], center: Sequence[float], radii: Sequence[float]) -> np.ndarray:
    """Voxels p with sum(((p - c) / r)^2) <= 1, evaluated at integer voxel coordinates"""
    grids = np.ogrid[tuple(slice(0, n) for n in shape)]
    total = np.zeros(tuple(shape), dtype=np.float64)
    for axis_coords, c, r in zip(grids, center, radii):
        total = total + ((axis_coords.astype(np.float64) - c) / r) ** 2
    return total <= 1.0


class PhantomService:
    """Synthetic ellipsoid phantoms with analytic ground truth"""

    def __init__(self, noise_sigma: float = None, max_attempts: int = None):
        self.noise_sigma = config.PHANTOM_NOISE_SIGMA if noise_sigma is None else noise_sigma
        self.max_attempts = config.PHANTOM_MAX_ATTEMPTS if max_attempts is None else max_attempts
        self.io = DataIOService()
        self.validator = InputValidator()

    def generate_phantom_dataset(self, seed: int, n_labeled: int, n_unlabeled: int, n_test: int,
                                 size: Sequence[int], num_classes: int, out_dir: str,
                                 n_val: int = 0) -> Tuple[DatasetManifest, str]:
        """Write a phantom dataset and its manifest.

        Returns:
            (manifest, manifest path)
        """
        if n_labeled < 1 or n_test < 1:
            raise ValidationError(f"Need at least one labeled and one test case, got {n_labeled}/{n_test}")
        if n_unlabeled < 0 or n_val < 0:
            raise ValidationError("Sample counts must be non-negative")
        if num_classes < 2:
            raise ValidationError(f"num_classes must be >= 2, got {num_classes}")
        size = self.validator.validate_dims(size, 'phantom size')

        rng = np.random.default_rng(seed)
        os.makedirs(out_dir, exist_ok=True)

        manifest = DatasetManifest(
            num_classes=num_classes,
            class_names=['background'] + [f'structure_{k}' for k in range(1, num_classes)],
        )

        for split, count in (('labeled', n_labeled), ('unlabeled', n_unlabeled),
                             ('val', n_val), ('test', n_test)):
            if count:
                os.makedirs(os.path.join(out_dir, split), exist_ok=True)
            for index in range(count):
                volume, label_map, ellipsoids = self.generate_phantom(rng, size, num_classes)
                vol_rel = f"{split}/{split}_{index:03d}.vol"
                self.io.save_volume(volume, os.path.join(out_dir, vol_rel))
                manifest.geometry[vol_rel] = ellipsoids

                if split == 'unlabeled':
                    manifest.unlabeled.append(vol_rel)
                    continue
                lbl_rel = f"{split}/{split}_{index:03d}.lbl"
                self.io.save_label_map(label_map, os.path.join(out_dir, lbl_rel), volume.spacing)
                getattr(manifest, split).append((vol_rel, lbl_rel))

        manifest_path = os.path.join(out_dir, 'manifest.json')
        self.io.save_manifest(manifest, manifest_path)
        manifest.bind_root(os.path.dirname(os.path.abspath(manifest_path)))
        logger.info(
            f"Generated phantom dataset (seed={seed}, size={size}, K={num_classes}): "
            f"{n_labeled} labeled, {n_unlabeled} unlabeled, {n_val} val, {n_test} test"
        )
        return manifest, manifest_path

    def generate_phantom(self, rng: np.random.Generator, size: Sequence[int],
                         num_classes: int) -> Tuple[Volume, LabelMap, List[EllipsoidSpec]]:
        """One noisy volume with K-1 disjoint ellipsoids, label k marking ellipsoid k"""
        labels = np.zeros(tuple(size), dtype=np.uint8)
        clean = np.zeros(tuple(size), dtype=np.float64)
        ellipsoids = []

        for k in range(1, num_classes):
            spec, mask = self._place_ellipsoid(rng, size, labels, k)
            labels[mask] = k
            clean[mask] = 0.5 + 0.1 * k
            ellipsoids.append(spec)

        noise = rng.normal(0.0, self.noise_sigma, size=tuple(size))
        voxels = (clean + noise).astype(np.float32)
        return Volume(voxels), LabelMap(labels, num_classes), ellipsoids

    def _place_ellipsoid(self, rng: np.random.Generator, size: Sequence[int],
                         occupied: np.ndarray, label: int) -> Tuple[EllipsoidSpec, np.ndarray]:

        @retry(stop=stop_after_attempt(self.max_attempts),
               retry=retry_if_exception_type(_PlacementRejected))
        def attempt():
            radii = tuple(float(rng.uniform(n / 8, n / 4)) for n in size)
            if any(2 * r > n - 1 for r, n in zip(radii, size)):
                raise _PlacementRejected(f"radii {radii} do not fit {tuple(size)}")
            center = tuple(float(rng.uniform(r, n - 1 - r)) for r, n in zip(radii, size))
            mask = ellipsoid_mask(size, center, radii)
            if not mask.any():
                raise _PlacementRejected("ellipsoid covers no voxel centre")
            if (occupied[mask] != 0).any():
                raise _PlacementRejected("ellipsoid overlaps an earlier structure")
            return EllipsoidSpec(label=label, center=center, radii=radii), mask

        try:
            return attempt()
        except RetryError as e:
            reason = e.last_attempt.exception()
            logger.error(f"Could not place structure {label} in {tuple(size)}: {reason}")
            raise GenerationError(
                f"Placing structure {label} in a {tuple(size)} volume failed after "
                f"{self.max_attempts} attempts ({reason})"
            ) from e
