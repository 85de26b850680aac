import os
from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np
from pydantic import BaseModel, Field, PrivateAttr, field_validator, model_validator

from utils.validation import InputValidator

_validator = InputValidator()


def _as_stored_spacing(spacing) -> Tuple[float, float, float]:
    # spacing is persisted as f32
    spacing = _validator.validate_spacing(spacing)
    return tuple(float(np.float32(s)) for s in spacing)


@dataclass
class Volume:
    """Raw 3D scalar grid with its voxel spacing"""
    voxels: np.ndarray
    spacing: Tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        self.voxels = np.asarray(self.voxels, dtype=np.float32)
        _validator.validate_volume_array(self.voxels)
        self.spacing = _as_stored_spacing(self.spacing)

    @property
    def shape(self) -> Tuple[int, int, int]:
        return tuple(self.voxels.shape)


@dataclass
class LabelMap:
    """Integer class-label grid, 0 = background"""
    labels: np.ndarray
    num_classes: int = None

    def __post_init__(self):
        _validator.validate_label_array(np.asarray(self.labels), self.num_classes)
        self.labels = np.asarray(self.labels, dtype=np.uint8)

    @property
    def shape(self) -> Tuple[int, int, int]:
        return tuple(self.labels.shape)


class EllipsoidSpec(BaseModel):
    """Analytic ground truth of one phantom structure"""
    label: int = Field(ge=1)
    center: Tuple[float, float, float]
    radii: Tuple[float, float, float]

    def contains(self, point: Tuple[float, float, float]) -> bool:
        total = 0.0
        for p, c, r in zip(point, self.center, self.radii):
            total += ((p - c) / r) ** 2
        return total <= 1.0


class DatasetManifest(BaseModel):
    """Semi-supervised dataset layout; paths are relative to the manifest directory"""
    num_classes: int = Field(ge=2)
    class_names: List[str]
    labeled: List[Tuple[str, str]] = Field(default_factory=list)
    unlabeled: List[str] = Field(default_factory=list)
    test: List[Tuple[str, str]] = Field(default_factory=list)
    val: List[Tuple[str, str]] = Field(default_factory=list)
    geometry: Dict[str, List[EllipsoidSpec]] = Field(default_factory=dict)

    _root: str = PrivateAttr(default='.')

    @field_validator('class_names')
    @classmethod
    def _names_not_blank(cls, names: List[str]) -> List[str]:
        if any(not name.strip() for name in names):
            raise ValueError("class names must be non-empty")
        return names

    @model_validator(mode='after')
    def _check_consistency(self) -> 'DatasetManifest':
        if len(self.class_names) != self.num_classes:
            raise ValueError(
                f"class_names has {len(self.class_names)} entries for {self.num_classes} classes"
            )

        owner: Dict[str, str] = {}
        splits = {
            'labeled': [p for pair in self.labeled for p in pair],
            'unlabeled': list(self.unlabeled),
            'test': [p for pair in self.test for p in pair],
            'val': [p for pair in self.val for p in pair],
        }
        for split, paths in splits.items():
            for path in paths:
                if path in owner and owner[path] != split:
                    raise ValueError(f"path {path} appears in both {owner[path]} and {split}")
                owner[path] = split
        return self

    @property
    def root(self) -> str:
        return self._root

    def bind_root(self, root: str) -> 'DatasetManifest':
        self._root = root
        return self

    def resolve(self, relpath: str) -> str:
        """Absolute path of a manifest entry"""
        return os.path.normpath(os.path.join(self._root, relpath))
